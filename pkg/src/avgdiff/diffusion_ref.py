"""Reference diffusion integrator and law-distance instruments.

The limiting diffusion ``dX = drift(X) dt + sigma(X) dW`` is integrated
by Euler-Maruyama on a uniform grid.  Normal variates are produced by
inverse-CDF transform of open-interval uniforms (recorded as
``"inverse-cdf"`` in run manifests), so ensembles replay bitwise for a
fixed seed and stream layout.

Law comparison uses the Kolmogorov-Smirnov statistic: a two-sample
version for ensemble-vs-ensemble checks, a one-sample version against a
given CDF, and an exact atomic-law-vs-CDF distance for instances whose
scheme marginal is a known lattice law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from .errors import InvalidModelError, NumericError
from .rng import derived_rng

__all__ = [
    "NORMAL_METHOD",
    "DiffusionSpec",
    "DiffusionPath",
    "reference_dt",
    "euler_maruyama",
    "euler_maruyama_ensemble",
    "ks_distance",
    "ks_distance_to_cdf",
    "ks_by_coordinate",
    "atomic_law_cdf_ks",
]

NORMAL_METHOD = "inverse-cdf"


def _standard_normals(rng: np.random.Generator, size) -> np.ndarray:
    # uniforms shifted to odd multiples of 2^-54: strictly inside (0, 1)
    u = rng.random(size=size) + 2.0**-54
    return ndtri(u)


@dataclass
class DiffusionSpec:
    """Limiting diffusion: drift and diffusion maps plus start and horizon.

    ``drift`` maps ``(m, d) -> (m, d)``; ``sigma`` maps ``(m, d) ->
    (m, d, d)``.  Use :meth:`scalar` for one-dimensional models given by
    scalar functions, or :meth:`from_limit_coefficients` to integrate the
    averaged limit of a discrete model (drift is then ``b_bar + c``).
    """

    d: int
    x0: np.ndarray
    T: float
    drift: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.shape[0] != self.d:
            raise InvalidModelError(f"x0 has dimension {self.x0.shape[0]}, spec wants {self.d}")
        if not (self.T > 0):
            raise InvalidModelError(f"horizon must be positive, got {self.T}")

    @classmethod
    def scalar(cls, drift_fn, sigma_fn, x0: float, T: float) -> "DiffusionSpec":
        """One-dimensional spec from scalar callables or constants."""

        def drift(x):
            v = x[..., 0]
            out = drift_fn(v) if callable(drift_fn) else np.full_like(v, float(drift_fn))
            return out[..., None]

        def sigma(x):
            v = x[..., 0]
            out = sigma_fn(v) if callable(sigma_fn) else np.full_like(v, float(sigma_fn))
            return out[..., None, None]

        return cls(d=1, x0=np.array([float(x0)]), T=float(T), drift=drift, sigma=sigma)

    @classmethod
    def from_limit_coefficients(cls, lc, x0, T: float,
                                tabulate: Optional[tuple] = None) -> "DiffusionSpec":
        """Diffusion with drift ``b_bar + c`` and root ``sigma`` of ``A``.

        ``tabulate=(lo, hi, n)`` precomputes 1-D interpolants of the
        coefficient maps; recommended for large ensembles where the lag
        series would otherwise be evaluated at every step.
        """
        d = lc.field.d
        if tabulate is not None:
            if d != 1:
                raise InvalidModelError("tabulated coefficients are one-dimensional only")
            drift_fn, scal = lc.tabulated(*tabulate)

            def drift(x):
                return drift_fn(x)

            def sigma(x):
                return scal(x)[..., None]

            return cls(d=1, x0=x0, T=T, drift=drift, sigma=sigma)

        def drift(x):
            return lc.drift(x)

        if d == 1:
            def sigma(x):
                a = lc.A(x)[..., 0, 0]
                return np.sqrt(np.clip(a, 0.0, None))[..., None, None]
        else:
            def sigma(x):
                return lc.sigma(x)

        return cls(d=d, x0=x0, T=T, drift=drift, sigma=sigma)


def reference_dt(eps: float) -> float:
    """Default integrator step for comparing against a scheme at ``eps``.

    ``eps**2 * min(1, eps)`` keeps the integrator's own discretisation
    error subordinate to the scheme effect under study.
    """
    if not (eps > 0):
        raise InvalidModelError(f"eps must be positive, got {eps}")
    return eps**2 * min(1.0, eps)


@dataclass
class DiffusionPath:
    """Integrated path on a uniform grid with linear interpolation."""

    times: np.ndarray
    states: np.ndarray
    dt: float

    def at(self, t: float) -> np.ndarray:
        if t < -1e-12 or t > self.times[-1] + 1e-12:
            raise InvalidModelError(f"time {t} outside [0, {self.times[-1]}]")
        return np.array([np.interp(t, self.times, self.states[:, j])
                         for j in range(self.states.shape[1])])


def _grid(T: float, dt: float):
    if not (0 < dt <= T):
        raise InvalidModelError(f"dt must lie in (0, T], got {dt} for T={T}")
    n = max(1, int(round(T / dt)))
    return n, T / n


def euler_maruyama(spec: DiffusionSpec, dt: float, seed: int = 0,
                   stream: int = 0) -> DiffusionPath:
    """Single Euler-Maruyama path of ``spec`` with step close to ``dt``."""
    n, h = _grid(spec.T, dt)
    rng = derived_rng(seed, 2000 + stream)
    states = np.empty((n + 1, spec.d))
    states[0] = spec.x0
    cur = spec.x0[None, :]
    sq = math.sqrt(h)
    for k in range(n):
        z = _standard_normals(rng, (1, spec.d))
        cur = cur + spec.drift(cur) * h + sq * np.einsum("mij,mj->mi", spec.sigma(cur), z)
        states[k + 1] = cur[0]
    if not np.all(np.isfinite(states)):
        raise NumericError("integrator produced a non-finite state")
    return DiffusionPath(times=np.arange(n + 1) * h, states=states, dt=h)


def euler_maruyama_ensemble(spec: DiffusionSpec, dt: float, n_paths: int,
                            seed: int = 0, chunk: int = 65536) -> np.ndarray:
    """Terminal states of ``n_paths`` independent integrator paths.

    Chunked over paths like the scheme ensemble; chunk ``k`` uses the
    derived stream ``(seed, 3000 + k)``.
    """
    if n_paths < 1:
        raise InvalidModelError("n_paths must be at least 1")
    n, h = _grid(spec.T, dt)
    sq = math.sqrt(h)
    out = np.empty((n_paths, spec.d))
    done = 0
    chunk_id = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        rng = derived_rng(seed, 3000 + chunk_id)
        cur = np.broadcast_to(spec.x0, (m, spec.d)).copy()
        for _ in range(n):
            z = _standard_normals(rng, (m, spec.d))
            cur = cur + spec.drift(cur) * h + sq * np.einsum("mij,mj->mi", spec.sigma(cur), z)
        out[done : done + m] = cur
        done += m
        chunk_id += 1
    if not np.all(np.isfinite(out)):
        raise NumericError("integrator ensemble produced non-finite terminal states")
    return out


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov distances


def _clean_samples(a) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise InvalidModelError("empty sample array")
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite values in sample array")
    return a


def ks_distance(a, b) -> float:
    """Two-sample KS statistic ``sup_x |F_a(x) - F_b(x)|``."""
    a = np.sort(_clean_samples(a))
    b = np.sort(_clean_samples(b))
    grid = np.concatenate([a, b])
    grid.sort(kind="mergesort")
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_distance_to_cdf(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample KS statistic of ``samples`` against a continuous CDF."""
    x = np.sort(_clean_samples(samples))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower))


def ks_by_coordinate(A, B) -> dict:
    """Two-sample KS per coordinate plus the Euclidean norm coordinate.

    ``A`` and ``B`` are ``(n, d)`` ensembles.  Returns a dict with keys
    ``"x0"..`` and ``"norm"``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise InvalidModelError("ensembles must be (n, d) with matching d")
    out = {}
    for j in range(A.shape[1]):
        out[f"x{j}"] = ks_distance(A[:, j], B[:, j])
    out["norm"] = ks_distance(np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1))
    return out


def atomic_law_cdf_ks(atoms, probs, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Exact KS distance between an atomic law and a continuous CDF.

    The supremum of ``|F_atomic - F|`` over the line is attained at atom
    locations, approached from the left or the right; both one-sided
    gaps are evaluated at every atom.
    """
    atoms = np.asarray(atoms, dtype=float).reshape(-1)
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if atoms.shape != probs.shape:
        raise InvalidModelError("atoms and probs must have matching shapes")
    if np.any(probs < -1e-15) or abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidModelError("probs must be a probability vector")
    order = np.argsort(atoms)
    atoms = atoms[order]
    probs = probs[order]
    cum = np.cumsum(probs)
    f = np.asarray(cdf(atoms), dtype=float)
    gap_right = np.max(np.abs(cum - f))
    gap_left = np.max(np.abs(np.concatenate([[0.0], cum[:-1]]) - f))
    return float(max(gap_right, gap_left))
