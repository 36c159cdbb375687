"""Stationary noise models driving the discrete scheme.

Two concrete models are provided:

``rademacher_iid(d)``
    i.i.d. vectors with independent +/-1 coordinates (optionally scaled),
    the canonical independent driver.  Mixing bound is exactly zero from
    lag one on.

``two_state_markov(p)``
    a stationary two-state Markov chain on {+1, -1} with flip probability
    ``p``, the simplest genuinely dependent driver.  Its uniform mixing
    coefficient decays geometrically, so all moment constants are finite
    and the averaged limit coefficients pick up nontrivial corrections.

Both models expose their finite support together with the joint law of
``(xi(0), xi(r))`` at every lag, which is what the analytic coefficient
series consumes, and a vectorised path sampler for ensembles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidModelError, UnsupportedModeError

__all__ = [
    "MixingProfile",
    "FiniteSupport",
    "NoiseModel",
    "rademacher_iid",
    "two_state_markov",
    "phi_bound",
    "moment_constant_D",
    "noise_from_config",
]


@dataclass(frozen=True)
class MixingProfile:
    """Declared upper bound on the uniform (phi) mixing coefficient.

    ``phi(0)`` is 1 (past and future overlap at lag zero); for ``u >= 1``
    the bound is ``min(rate**u, cap)`` with ``rate = 0`` meaning exact
    independence beyond lag zero.  ``cap = 1/2`` is safe for the models
    shipped here: the sharp coefficient of a two-state chain is
    ``|1-2p|**u / 2``, so the capped geometric envelope stays an upper
    bound for every flip probability.
    """

    rate: float
    cap: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.rate < 1.0):
            raise InvalidModelError(f"mixing rate must lie in [0, 1), got {self.rate}")
        if not (0.0 < self.cap <= 1.0):
            raise InvalidModelError(f"mixing cap must lie in (0, 1], got {self.cap}")

    def phi(self, u: int) -> float:
        """Declared bound at integer lag ``u >= 0``."""
        u = _check_lag(u)
        if u == 0:
            return 1.0
        if self.rate == 0.0:
            return 0.0
        return min(self.rate**u, self.cap)

    def tail_sum(self, n: int) -> float:
        """``sum_{r > n} phi(r)``, evaluated in closed form."""
        n = _check_lag(n)
        if self.rate == 0.0:
            return 0.0
        q = self.rate
        # first lag at which the geometric part drops below the cap
        u0 = 1 if q <= self.cap else math.ceil(math.log(self.cap) / math.log(q))
        if q**u0 > self.cap:  # guard against log rounding
            u0 += 1
        m = max(n + 1, u0)
        capped = max(0, m - (n + 1)) * self.cap
        return capped + q**m / (1.0 - q)

    def lag_weighted_tail(self) -> float:
        """``sum_{r >= 1} r * phi(r)``, used by certified window bounds."""
        if self.rate == 0.0:
            return 0.0
        q = self.rate
        u0 = 1 if q <= self.cap else math.ceil(math.log(self.cap) / math.log(q))
        if q**u0 > self.cap:
            u0 += 1
        capped = self.cap * (u0 - 1) * u0 / 2.0
        geom = q**u0 * (u0 * (1.0 - q) + q) / (1.0 - q) ** 2
        return capped + geom

    def moment_constant(self, M: int) -> float:
        """Moment constant ``D = sup_u phi(u) (u**(2M) + u**4)``.

        The supremum is over integer lags.  For the independent profile
        every ``u >= 1`` term vanishes and the ``u = 0`` factor is zero,
        so ``D = 0``.
        """
        if M < 1 or M != int(M):
            raise InvalidModelError(f"moment order M must be a positive integer, got {M}")
        if self.rate == 0.0:
            return 0.0
        q = self.rate
        k = max(2 * int(M), 4)
        # integer scan comfortably past the continuous maximiser k/ln(1/q)
        u_hi = int(2 * k / math.log(1.0 / q)) + 200
        best = 0.0
        for u in range(1, u_hi + 1):
            val = self.phi(u) * (u ** (2 * int(M)) + u**4)
            if val > best:
                best = val
        return best


def _check_lag(u) -> int:
    if u != int(u) or u < 0:
        raise InvalidModelError(f"lag must be a nonnegative integer, got {u!r}")
    return int(u)


@dataclass(frozen=True)
class FiniteSupport:
    """Atoms and probabilities of a finite-support marginal law."""

    atoms: np.ndarray  # (k, d)
    probs: np.ndarray  # (k,)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 2 or probs.ndim != 1 or atoms.shape[0] != probs.shape[0]:
            raise InvalidModelError("support atoms must be (k, d) with matching (k,) probs")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise InvalidModelError("support probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]


@dataclass
class NoiseModel:
    """A stationary, mean-zero noise sequence with declared mixing bound.

    Concrete models are built through :func:`rademacher_iid` and
    :func:`two_state_markov`; the class itself carries the declared
    moments, the mixing profile and (when available) the finite support
    with joint lag laws.  Instances are immutable by convention once
    constructed.
    """

    kind: str
    d: int
    params: dict
    mean: np.ndarray
    covariance: np.ndarray
    mixing: MixingProfile
    iid: bool
    support: Optional[FiniteSupport] = None
    _transition: Optional[np.ndarray] = field(default=None, repr=False)

    # -- sampling ------------------------------------------------------

    def sample_paths(self, n_paths: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n_paths`` independent sequences of length ``n_steps``.

        Returns an array of shape ``(n_paths, n_steps, d)``.  Stationary
        initial law; fully vectorised.
        """
        if n_paths < 1 or n_steps < 0:
            raise InvalidModelError("need n_paths >= 1 and n_steps >= 0")
        if self.kind in ("rademacher",):
            scale = self.params.get("scale", 1.0)
            signs = rng.integers(0, 2, size=(n_paths, n_steps, self.d)) * 2 - 1
            return signs.astype(float) * scale
        if self.kind == "markov2":
            p = self.params["p"]
            idx = np.empty((n_paths, n_steps), dtype=np.int64)
            if n_steps == 0:
                return np.empty((n_paths, 0, 1))
            idx[:, 0] = rng.integers(0, 2, size=n_paths)
            if n_steps > 1:
                flips = rng.random(size=(n_paths, n_steps - 1)) < p
                idx[:, 1:] = (idx[:, :1] + np.cumsum(flips, axis=1)) % 2
            return (1.0 - 2.0 * idx)[:, :, None]
        raise UnsupportedModeError(f"no sampler for noise kind {self.kind!r}")

    def sample(self, n_steps: int, rng: np.random.Generator) -> np.ndarray:
        """Single sequence of shape ``(n_steps, d)``."""
        return self.sample_paths(1, n_steps, rng)[0]

    # -- exact laws ----------------------------------------------------

    def joint_lag_probs(self, r: int) -> np.ndarray:
        """Joint law of ``(xi(0), xi(r))`` over the support atoms.

        Entry ``[i, j]`` is ``P(xi(0) = atom_i, xi(r) = atom_j)``.  By
        stationarity this depends on the lag only.
        """
        r = _check_lag(r)
        if self.support is None:
            raise UnsupportedModeError(f"noise kind {self.kind!r} has no finite support")
        probs = self.support.probs
        if r == 0:
            return np.diag(probs)
        if self.iid:
            return np.outer(probs, probs)
        if self._transition is not None:
            powr = np.linalg.matrix_power(self._transition, r)
            return probs[:, None] * powr
        raise UnsupportedModeError(f"no joint law for noise kind {self.kind!r}")

    def autocovariance(self, r: int) -> np.ndarray:
        """``E[xi(r) xi(0)^T]`` as a (d, d) matrix (mean is zero)."""
        joint = self.joint_lag_probs(r)
        atoms = self.support.atoms
        # sum_{i,j} P[i,j] atom_j atom_i^T  (row index = time 0)
        return np.einsum("ij,jm,in->mn", joint, atoms, atoms)

    # -- serialisation -------------------------------------------------

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        cfg.update(self.params)
        if self.kind == "rademacher":
            cfg["d"] = self.d
        return cfg


def rademacher_iid(d: int, scale: float = 1.0) -> NoiseModel:
    """i.i.d. noise with independent ``+/-scale`` coordinates.

    Parameters
    ----------
    d : int
        Dimension, at least 1.
    scale : float, optional
        Coordinate magnitude.  The default 1.0 gives identity covariance;
        ``scale = 1/d`` reproduces the low-variance variant sometimes used
        for worked examples (covariance ``scale**2 * I``).

    The support has ``2**d`` atoms, materialised eagerly; keep ``d``
    moderate when the support is actually consumed.
    """
    if d != int(d) or d < 1:
        raise InvalidModelError(f"dimension must be a positive integer, got {d!r}")
    if scale <= 0:
        raise InvalidModelError(f"scale must be positive, got {scale}")
    d = int(d)
    if d > 20:
        raise InvalidModelError("rademacher support with d > 20 is not materialisable")
    atoms = scale * np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    probs = np.full(2**d, 2.0**-d)
    params = {"scale": scale} if scale != 1.0 else {}
    return NoiseModel(
        kind="rademacher",
        d=d,
        params=params,
        mean=np.zeros(d),
        covariance=scale**2 * np.eye(d),
        mixing=MixingProfile(rate=0.0),
        iid=True,
        support=FiniteSupport(atoms=atoms, probs=probs),
    )


def two_state_markov(p: float) -> NoiseModel:
    """Stationary two-state chain on {+1, -1} with flip probability ``p``.

    ``p`` must lie strictly inside (0, 1); the boundary values freeze or
    alternate the chain deterministically.  Lag-``r`` autocovariance is
    ``(1-2p)**r`` and the declared mixing bound decays like ``|1-2p|**u``.
    """
    if not (0.0 < p < 1.0):
        raise InvalidModelError(f"flip probability must lie in (0, 1), got {p}")
    atoms = np.array([[1.0], [-1.0]])
    probs = np.array([0.5, 0.5])
    transition = np.array([[1.0 - p, p], [p, 1.0 - p]])
    return NoiseModel(
        kind="markov2",
        d=1,
        params={"p": float(p)},
        mean=np.zeros(1),
        covariance=np.eye(1),
        mixing=MixingProfile(rate=abs(1.0 - 2.0 * p)),
        iid=False,
        support=FiniteSupport(atoms=atoms, probs=probs),
        _transition=transition,
    )


def phi_bound(model: NoiseModel, u: int) -> float:
    """Declared mixing bound of ``model`` at integer lag ``u``."""
    return model.mixing.phi(u)


def moment_constant_D(model: NoiseModel, M: int) -> float:
    """Moment constant ``sup_u phi(u) (u**(2M) + u**4)`` for ``model``."""
    return model.mixing.moment_constant(M)


def noise_from_config(cfg: dict) -> NoiseModel:
    """Build a noise model from its JSON-style config dict.

    Recognised forms: ``{"kind": "rademacher", "d": 2}`` (optional
    ``"scale"``) and ``{"kind": "markov2", "p": 0.25}``.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise InvalidModelError(f"noise config must be a dict with a 'kind', got {cfg!r}")
    kind = cfg["kind"]
    if kind == "rademacher":
        return rademacher_iid(cfg.get("d", 1), scale=cfg.get("scale", 1.0))
    if kind == "markov2":
        if "p" not in cfg:
            raise InvalidModelError("markov2 noise config needs a flip probability 'p'")
        return two_state_markov(cfg["p"])
    raise InvalidModelError(f"unknown noise kind {kind!r}")
