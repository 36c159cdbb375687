"""Discrete slow motion on the time grid ``n * eps**2``.

One step of the recursion moves the state by ``eps * B(x, xi(n)) +
eps**2 * b(x, xi(n))``; ``N_eps = floor(T / eps**2)`` steps cover the
horizon.  Between grid times the path is extended either as a piecewise
constant function (the default, matching the recursion itself) or by
linear interpolation; past the last grid time both extensions are
constant up to ``T``.

The float floor is taken with a relative slack of 1e-9 so that grids
like ``eps = 0.1, T = 1`` yield exactly 100 steps despite binary
rounding of ``eps**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coefficients import FieldSpec, _as_batch
from .errors import InvalidModelError, NumericError
from .noise import NoiseModel
from .rng import derived_rng

__all__ = ["steps_for", "eps_for", "step", "DiscretePath", "simulate_path",
           "simulate_ensemble", "reachable_radius"]


def steps_for(eps: float, T: float) -> int:
    """Number of scheme steps ``floor(T / eps**2)`` (tolerant floor)."""
    if not (eps > 0.0) or not (T > 0.0):
        raise InvalidModelError(f"need eps > 0 and T > 0, got eps={eps}, T={T}")
    n = int(math.floor(T / eps**2 * (1.0 + 1e-9)))
    if n < 1:
        raise InvalidModelError(f"horizon shorter than one step: eps={eps}, T={T}")
    return n


def eps_for(n_steps: int, T: float = 1.0) -> float:
    """Scale parameter ``sqrt(T / n)`` so that ``n`` steps span ``T``."""
    if n_steps < 1 or n_steps != int(n_steps):
        raise InvalidModelError(f"n_steps must be a positive integer, got {n_steps!r}")
    return math.sqrt(T / float(n_steps))


def reachable_radius(field: FieldSpec, eps: float, T: float) -> float:
    """Worst-case distance from the start after ``N_eps`` steps.

    Each step moves at most ``eps L + eps**2 L``; grids for valuation
    must cover the start plus/minus this radius.
    """
    n = steps_for(eps, T)
    L = field.bound_L
    return n * (eps * L + eps**2 * L)


def step(x, xi, eps: float, field: FieldSpec) -> np.ndarray:
    """One recursion step from ``x`` under noise value ``xi``.

    Accepts single points or batches; shape follows the input.  Raises
    :class:`NumericError` if the new state is not finite.
    """
    xb = _as_batch(x, field.d)
    xib = np.broadcast_to(np.asarray(xi, dtype=float).reshape(-1, field.d)
                          if np.asarray(xi).ndim <= 1 else np.asarray(xi, float), xb.shape)
    out = xb + eps * field.B(xb, xib) + eps**2 * field.b(xb, xib)
    if not np.all(np.isfinite(out)):
        raise NumericError("scheme step produced a non-finite state")
    return out[0] if np.asarray(x).ndim <= 1 else out


@dataclass
class DiscretePath:
    """Realised scheme path with its driving noise.

    ``states[n]`` is the state at time ``times[n] = n * eps**2``;
    ``noise_record[n]`` drove the step from ``n`` to ``n + 1``.  The
    path extends to the full horizon ``[0, T]`` via :meth:`sample_at`.
    """

    eps: float
    T: float
    times: np.ndarray       # (N+1,)
    states: np.ndarray      # (N+1, d)
    noise_record: np.ndarray  # (N, d)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def sample_at(self, t: float, mode: str = "constant") -> np.ndarray:
        """State at an arbitrary time ``t`` in ``[0, T]``.

        ``mode="constant"`` freezes the state over ``[n eps^2,
        (n+1) eps^2)``; ``mode="linear"`` interpolates between grid
        neighbours.  Beyond the last grid time both modes hold the final
        state.
        """
        if t < 0.0 or t > self.T + 1e-12:
            raise InvalidModelError(f"time {t} outside [0, {self.T}]")
        h = self.eps**2
        n = int(math.floor(t / h * (1.0 + 1e-9)))
        last = self.n_steps
        if n >= last:
            return self.states[last].copy()
        if mode == "constant":
            return self.states[n].copy()
        if mode == "linear":
            w = (t - self.times[n]) / h
            return (1.0 - w) * self.states[n] + w * self.states[n + 1]
        raise InvalidModelError(f"unknown sampling mode {mode!r}")

    def replay_residual(self, field: FieldSpec) -> float:
        """Max deviation of stored increments from the recursion map."""
        worst = 0.0
        for n in range(self.n_steps):
            nxt = step(self.states[n], self.noise_record[n], self.eps, field)
            worst = max(worst, float(np.max(np.abs(nxt - self.states[n + 1]))))
        return worst


def simulate_path(field: FieldSpec, noise: NoiseModel, x0, eps: float, T: float,
                  seed: int = 0, stream: int = 0) -> DiscretePath:
    """Simulate one scheme path; same seed and stream replay bitwise."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != field.d:
        raise InvalidModelError(f"x0 has dimension {x0.shape[0]}, field expects {field.d}")
    if noise.d != field.d:
        raise InvalidModelError(
            f"noise dimension {noise.d} does not match field dimension {field.d}")
    n = steps_for(eps, T)
    rng = derived_rng(seed, stream)
    xi = noise.sample(n, rng)
    states = np.empty((n + 1, field.d))
    states[0] = x0
    cur = x0[None, :]
    for k in range(n):
        cur = cur + eps * field.B(cur, xi[k][None, :]) + eps**2 * field.b(cur, xi[k][None, :])
        states[k + 1] = cur[0]
    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.isfinite(states).all(axis=1)))
        raise NumericError(f"non-finite state first reached at step {bad}")
    times = np.arange(n + 1) * eps**2
    return DiscretePath(eps=eps, T=T, times=times, states=states, noise_record=xi)


def simulate_ensemble(field: FieldSpec, noise: NoiseModel, x0, eps: float, T: float,
                      n_paths: int, seed: int = 0, keep_paths: bool = False,
                      chunk: int = 32768) -> np.ndarray:
    """Simulate many independent scheme paths, vectorised over paths.

    Returns terminal states ``(n_paths, d)`` by default, or the full
    state arrays ``(n_paths, N+1, d)`` with ``keep_paths=True``.  Paths
    are processed in chunks so the noise arrays stay bounded in memory;
    chunk ``k`` draws from the derived stream ``(seed, 1000 + k)``.
    Fixed ``(seed, chunk)`` replays bitwise; changing ``chunk`` regroups
    the streams (same ensemble law, different draws).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if noise.d != field.d:
        raise InvalidModelError(
            f"noise dimension {noise.d} does not match field dimension {field.d}")
    n = steps_for(eps, T)
    if n_paths < 1:
        raise InvalidModelError("n_paths must be at least 1")
    out_final = np.empty((n_paths, field.d))
    out_full: Optional[np.ndarray] = None
    if keep_paths:
        out_full = np.empty((n_paths, n + 1, field.d))
    done = 0
    chunk_id = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        rng = derived_rng(seed, 1000 + chunk_id)
        xi = noise.sample_paths(m, n, rng)
        cur = np.broadcast_to(x0, (m, field.d)).copy()
        if keep_paths:
            out_full[done : done + m, 0] = cur
        for k in range(n):
            cur = cur + eps * field.B(cur, xi[:, k, :]) + eps**2 * field.b(cur, xi[:, k, :])
            if keep_paths:
                out_full[done : done + m, k + 1] = cur
        out_final[done : done + m] = cur
        done += m
        chunk_id += 1
    if not np.all(np.isfinite(out_final)):
        raise NumericError("ensemble produced non-finite terminal states")
    return out_full if keep_paths else out_final
