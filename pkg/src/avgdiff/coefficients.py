"""Averaged limit coefficients of the slow motion.

For a field ``B(x, xi)`` driven by stationary mean-zero noise, the slow
recursion homogenises to a diffusion whose coefficients are

* the mean drift ``b_bar(x) = E b(x, xi(0))``,
* the correction drift built from lagged gradient-field correlations,
  ``c(x) = sum_{r>=1} E[ grad_x B(x, xi(r)) B(x, xi(0)) ]``,
* the covariance ``A(x) = E[B B^T](lag 0) + sum_{r>=1} (a_hat(r) +
  a_hat(r)^T)`` with ``a_hat(r) = E[B(x, xi(r)) B(x, xi(0))^T]``,
* the symmetric PSD square root ``sigma(x)`` of ``A(x)``.

The one-sided lag series are the stationary reduction of the defining
Cesaro double averages; truncation at ``n_max`` lags carries the
certified tail bound ``2 L^2 sum_{r > n_max} phi(r)`` for ``c`` (each
summand is bounded by ``2 L^2 phi(r)``) and twice that for ``A`` (two
lagged terms per ``r``).

Expectations are evaluated either exactly over the noise support and its
joint lag laws (``mode="analytic"``) or by Monte Carlo over sampled
noise sequences with reported standard errors (``mode="empirical"``).

All field callables follow a batched convention: ``x`` and ``xi`` are
``(m, d)`` arrays (broadcast-compatible shapes are fine) and return
``(m, d)`` for values, ``(m, d, d)`` for gradients with entry
``[s, i, j] = dB_i/dx_j``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidModelError, NumericError, UnsupportedModeError
from .noise import MixingProfile, NoiseModel
from .rng import derived_rng

__all__ = [
    "FieldSpec",
    "scalar_field",
    "matrix_field",
    "field_from_config",
    "MeanEstimate",
    "SeriesEstimate",
    "drift_mean",
    "drift_correction",
    "diffusion_matrix",
    "symmetric_sqrt",
    "default_truncation_lag",
    "LimitCoefficients",
    "build_limit_coefficients",
    "audit_field",
]


# ---------------------------------------------------------------------------
# field specification


@dataclass
class FieldSpec:
    """Coefficient field of the discrete scheme.

    ``B`` is the fast (order epsilon) field, ``b`` the slow (order
    epsilon^2) drift, ``grad_B`` the x-gradient of ``B``.  ``bound_L``
    is a declared uniform bound on ``|B|``, ``|b|`` and ``|grad_B|``
    over the relevant x-range and the noise support; step-size and
    reachable-region estimates rely on it.
    """

    d: int
    B: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_B: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound_L: float
    kind: str = "custom"
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.d != int(self.d) or self.d < 1:
            raise InvalidModelError(f"field dimension must be a positive integer, got {self.d!r}")
        if not (self.bound_L > 0):
            raise InvalidModelError(f"bound_L must be positive, got {self.bound_L}")
        self.d = int(self.d)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        cfg.update(self.params)
        return cfg


def _as_batch(x, d: int) -> np.ndarray:
    xb = np.asarray(x, dtype=float)
    if xb.ndim == 0:
        xb = xb.reshape(1)
    if xb.ndim == 1:
        if xb.shape[0] != d:
            raise InvalidModelError(f"point has dimension {xb.shape[0]}, field expects {d}")
        return xb[None, :]
    if xb.ndim == 2 and xb.shape[1] == d:
        return xb
    raise InvalidModelError(f"cannot interpret array of shape {xb.shape} as points in R^{d}")


def scalar_field(sigma, dsigma=None, drift=None, *, bound_L=None,
                 kind: str = "scalar", params: Optional[dict] = None) -> FieldSpec:
    """One-dimensional field ``B(x, xi) = sigma(x) xi`` with drift ``b(x)``.

    Parameters
    ----------
    sigma : callable or float
        Diffusion-scale map applied elementwise, or a constant.
    dsigma : callable or float, optional
        Derivative of ``sigma``.  Required when ``sigma`` is callable.
    drift : callable or float, optional
        Noise-independent slow drift; defaults to zero.
    bound_L : float, optional
        Declared uniform bound.  Computed automatically for constant
        coefficients, mandatory otherwise.
    """
    const_sigma = not callable(sigma)
    const_drift = not callable(drift)
    if callable(sigma) and dsigma is None:
        raise InvalidModelError("callable sigma needs its derivative dsigma")

    def sig(v):
        return sigma(v) if callable(sigma) else np.full_like(v, float(sigma))

    def dsig(v):
        if callable(sigma):
            return dsigma(v) if callable(dsigma) else np.full_like(v, float(dsigma or 0.0))
        return np.zeros_like(v)

    def dri(v):
        if drift is None:
            return np.zeros_like(v)
        return drift(v) if callable(drift) else np.full_like(v, float(drift))

    def B(x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        return sig(x[..., 0])[..., None] * xi

    def b(x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        return np.broadcast_to(dri(x[..., 0])[..., None], x.shape).copy()

    def grad_B(x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        return (dsig(x[..., 0]) * xi[..., 0])[..., None, None]

    if bound_L is None:
        if const_sigma and const_drift:
            bound_L = max(abs(float(sigma)), abs(float(drift or 0.0)))
            if bound_L == 0.0:
                bound_L = 1.0
        else:
            raise InvalidModelError("bound_L must be given for non-constant coefficients")
    return FieldSpec(d=1, B=B, b=b, grad_B=grad_B, bound_L=float(bound_L),
                     kind=kind, params=params or {})


def matrix_field(sigma, grad_sigma, drift=None, *, d: int, bound_L: float,
                 kind: str = "matrix", params: Optional[dict] = None) -> FieldSpec:
    """General field ``B(x, xi) = sigma(x) xi`` in dimension ``d``.

    ``sigma`` maps ``(m, d) -> (m, d, d)``; ``grad_sigma`` maps
    ``(m, d) -> (m, d, d, d)`` with entry ``[s, i, j, k] =
    d sigma_ij / dx_k``; ``drift`` maps ``(m, d) -> (m, d)`` (zero when
    omitted).
    """

    def B(x, xi):
        x = np.asarray(x, float)
        xi = np.broadcast_to(np.asarray(xi, float), x.shape)
        return np.einsum("mij,mj->mi", sigma(x), xi)

    def b(x, xi):
        x = np.asarray(x, float)
        if drift is None:
            return np.zeros_like(x)
        return drift(x)

    def grad_B(x, xi):
        x = np.asarray(x, float)
        xi = np.broadcast_to(np.asarray(xi, float), x.shape)
        return np.einsum("mijk,mj->mik", grad_sigma(x), xi)

    return FieldSpec(d=d, B=B, b=b, grad_B=grad_B, bound_L=float(bound_L),
                     kind=kind, params=params or {})


def field_from_config(cfg: dict) -> FieldSpec:
    """Build a field from its JSON-style config dict.

    Recognised kinds:

    ``{"kind": "constant", "sigma": 0.2, "b": -0.02}``
        constant scale and drift (d = 1).
    ``{"kind": "sin", "base": 1.0, "amp": 0.1, "freq": 1.0, "b": 0.0}``
        ``sigma(x) = base + amp * sin(freq x)`` with constant drift.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise InvalidModelError(f"field config must be a dict with a 'kind', got {cfg!r}")
    kind = cfg["kind"]
    if kind == "constant":
        sig = float(cfg.get("sigma", 1.0))
        b0 = float(cfg.get("b", 0.0))
        return scalar_field(sig, drift=b0, kind="constant",
                            params={"sigma": sig, "b": b0})
    if kind == "sin":
        base = float(cfg.get("base", 1.0))
        amp = float(cfg.get("amp", 0.1))
        freq = float(cfg.get("freq", 1.0))
        b0 = float(cfg.get("b", 0.0))
        L = max(abs(base) + abs(amp), abs(amp * freq), abs(b0), 1e-12)
        return scalar_field(
            lambda v: base + amp * np.sin(freq * v),
            lambda v: amp * freq * np.cos(freq * v),
            drift=b0, bound_L=L, kind="sin",
            params={"base": base, "amp": amp, "freq": freq, "b": b0})
    raise InvalidModelError(f"unknown field kind {kind!r}")


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class MeanEstimate:
    """Mean drift value with Monte Carlo standard error (None if exact)."""

    value: np.ndarray
    stderr: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SeriesEstimate:
    """Truncated lag-series value with its certified tail bound.

    ``stderr`` is populated in empirical mode only; ``tail_bound`` is the
    mixing-based bound on the discarded lags, not a statistical error.
    """

    value: np.ndarray
    tail_bound: float
    n_max: int
    stderr: Optional[np.ndarray] = None


def default_truncation_lag(mixing: MixingProfile, bound_L: float, tol: float = 1e-8) -> int:
    """Smallest ``n >= 1`` with ``2 L^2 sum_{r>n} phi(r) < tol``."""
    if tol <= 0:
        raise InvalidModelError("tolerance must be positive")
    n = 1
    while 2.0 * bound_L**2 * mixing.tail_sum(n) >= tol:
        n += 1
        if n > 1_000_000:
            raise UnsupportedModeError("mixing decays too slowly for a usable truncation lag")
    return n


def _require_support(noise: NoiseModel, what: str):
    if noise.support is None:
        raise UnsupportedModeError(f"analytic {what} needs finite noise support")


def _atom_values(field: FieldSpec, xb: np.ndarray, noise: NoiseModel):
    atoms = noise.support.atoms
    shape = xb.shape
    B_at = [field.B(xb, np.broadcast_to(a, shape)) for a in atoms]
    g_at = [field.grad_B(xb, np.broadcast_to(a, shape)) for a in atoms]
    return B_at, g_at


def drift_mean(field: FieldSpec, noise: NoiseModel, x, mode: str = "analytic",
               n_samples: int = 100_000, seed: int = 0) -> MeanEstimate:
    """Mean slow drift ``b_bar(x) = E b(x, xi(0))``.

    Analytic mode sums over the support atoms; empirical mode averages
    over samples of ``xi(0)`` and reports the standard error.
    """
    xb = _as_batch(x, field.d)
    single = np.asarray(x).ndim <= 1
    if mode == "analytic":
        _require_support(noise, "drift_mean")
        sup = noise.support
        val = np.zeros_like(xb)
        for a, p in zip(sup.atoms, sup.probs):
            val += p * field.b(xb, np.broadcast_to(a, xb.shape))
        return MeanEstimate(value=val[0] if single else val)
    if mode == "empirical":
        rng = derived_rng(seed, 101)
        xi = noise.sample_paths(n_samples, 1, rng)[:, 0, :]
        if xb.shape[0] != 1:
            raise UnsupportedModeError("empirical drift_mean takes a single point")
        vals = field.b(np.broadcast_to(xb[0], xi.shape), xi)
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(n_samples)
        return MeanEstimate(value=mean, stderr=se)
    raise UnsupportedModeError(f"unknown estimator mode {mode!r}")


def _joint_tables(noise: NoiseModel, n_max: int):
    return [noise.joint_lag_probs(r) for r in range(n_max + 1)]


def drift_correction(field: FieldSpec, noise: NoiseModel, x, n_max: Optional[int] = None,
                     mode: str = "analytic", n_samples: int = 200_000,
                     seed: int = 0) -> SeriesEstimate:
    """Correction drift ``c(x)``, truncated at ``n_max`` lags.

    ``c(x) = sum_{r=1}^{n_max} E[grad_B(x, xi(r)) B(x, xi(0))]`` with
    tail bound ``2 L^2 sum_{r > n_max} phi(r)``.  For independent noise
    every lagged term factorises through the zero mean, so the series is
    exactly zero.
    """
    if n_max is None:
        n_max = default_truncation_lag(noise.mixing, field.bound_L)
    if n_max < 1 or n_max != int(n_max):
        raise InvalidModelError(f"n_max must be a positive integer, got {n_max!r}")
    n_max = int(n_max)
    tail = 2.0 * field.bound_L**2 * noise.mixing.tail_sum(n_max)
    xb = _as_batch(x, field.d)
    single = np.asarray(x).ndim <= 1

    if mode == "analytic":
        _require_support(noise, "drift_correction")
        B_at, g_at = _atom_values(field, xb, noise)
        val = np.zeros_like(xb)
        for r in range(1, n_max + 1):
            joint = noise.joint_lag_probs(r)
            for i in range(joint.shape[0]):
                for j in range(joint.shape[1]):
                    w = joint[i, j]
                    if w == 0.0:
                        continue
                    val += w * np.einsum("mab,mb->ma", g_at[j], B_at[i])
        return SeriesEstimate(value=val[0] if single else val, tail_bound=tail, n_max=n_max)

    if mode == "empirical":
        if xb.shape[0] != 1:
            raise UnsupportedModeError("empirical drift_correction takes a single point")
        rng = derived_rng(seed, 102)
        xi = noise.sample_paths(n_samples, n_max + 1, rng)
        x_rep = np.broadcast_to(xb[0], (n_samples, field.d))
        B0 = field.B(x_rep, xi[:, 0, :])
        per_sample = np.zeros((n_samples, field.d))
        for r in range(1, n_max + 1):
            g = field.grad_B(x_rep, xi[:, r, :])
            per_sample += np.einsum("mab,mb->ma", g, B0)
        mean = per_sample.mean(axis=0)
        se = per_sample.std(axis=0, ddof=1) / np.sqrt(n_samples)
        return SeriesEstimate(value=mean, tail_bound=tail, n_max=n_max, stderr=se)

    raise UnsupportedModeError(f"unknown estimator mode {mode!r}")


def diffusion_matrix(field: FieldSpec, noise: NoiseModel, x, n_max: Optional[int] = None,
                     mode: str = "analytic", n_samples: int = 200_000,
                     seed: int = 0) -> SeriesEstimate:
    """Limit covariance ``A(x)``, truncated at ``n_max`` lags.

    ``A(x) = E[B B^T](lag 0) + sum_{r=1}^{n_max} (a_hat(r) + a_hat(r)^T)``
    with ``a_hat(r) = E[B(x, xi(r)) B(x, xi(0))^T]``; the reported tail
    bound is ``4 L^2 sum_{r > n_max} phi(r)`` (two lagged terms per lag).
    The returned matrix is symmetrised exactly.
    """
    if n_max is None:
        n_max = default_truncation_lag(noise.mixing, field.bound_L)
    if n_max < 0 or n_max != int(n_max):
        raise InvalidModelError(f"n_max must be a nonnegative integer, got {n_max!r}")
    n_max = int(n_max)
    tail = 4.0 * field.bound_L**2 * noise.mixing.tail_sum(n_max)
    xb = _as_batch(x, field.d)
    single = np.asarray(x).ndim <= 1
    m, d = xb.shape

    if mode == "analytic":
        _require_support(noise, "diffusion_matrix")
        sup = noise.support
        B_at, _ = _atom_values(field, xb, noise)
        val = np.zeros((m, d, d))
        for i, p in enumerate(sup.probs):
            val += p * np.einsum("ma,mb->mab", B_at[i], B_at[i])
        for r in range(1, n_max + 1):
            joint = noise.joint_lag_probs(r)
            for i in range(joint.shape[0]):
                for j in range(joint.shape[1]):
                    w = joint[i, j]
                    if w == 0.0:
                        continue
                    cross = np.einsum("ma,mb->mab", B_at[j], B_at[i])
                    val += w * (cross + cross.transpose(0, 2, 1))
        val = 0.5 * (val + val.transpose(0, 2, 1))
        return SeriesEstimate(value=val[0] if single else val, tail_bound=tail, n_max=n_max)

    if mode == "empirical":
        if m != 1:
            raise UnsupportedModeError("empirical diffusion_matrix takes a single point")
        rng = derived_rng(seed, 103)
        xi = noise.sample_paths(n_samples, n_max + 1, rng)
        x_rep = np.broadcast_to(xb[0], (n_samples, d))
        B0 = field.B(x_rep, xi[:, 0, :])
        per_sample = np.einsum("ma,mb->mab", B0, B0)
        for r in range(1, n_max + 1):
            Br = field.B(x_rep, xi[:, r, :])
            cross = np.einsum("ma,mb->mab", Br, B0)
            per_sample += cross + cross.transpose(0, 2, 1)
        mean = per_sample.mean(axis=0)
        se = per_sample.std(axis=0, ddof=1) / np.sqrt(n_samples)
        mean = 0.5 * (mean + mean.T)
        return SeriesEstimate(value=mean, tail_bound=tail, n_max=n_max, stderr=se)

    raise UnsupportedModeError(f"unknown estimator mode {mode!r}")


# ---------------------------------------------------------------------------
# matrix square root


def symmetric_sqrt(A: np.ndarray, eig_floor: float = -1e-10) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Accepts a single ``(d, d)`` matrix or a stack ``(m, d, d)``.
    Eigenvalues are required to be at least ``eig_floor``; tiny negative
    values inside the floor are clamped to zero.  Raises
    :class:`InvalidModelError` for asymmetric input and
    :class:`NumericError` for genuinely indefinite input.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidModelError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericError("non-finite entries in matrix handed to symmetric_sqrt")
    asym = np.max(np.abs(A - np.swapaxes(A, -1, -2)))
    if asym > 1e-8:
        raise InvalidModelError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    w, V = np.linalg.eigh(A)
    if np.min(w) < eig_floor:
        raise NumericError(f"matrix is not PSD within tolerance (min eigenvalue {np.min(w):.3e})")
    w = np.clip(w, 0.0, None)
    root = (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (root + np.swapaxes(root, -1, -2))


# ---------------------------------------------------------------------------
# audit


def audit_field(field: FieldSpec, noise: NoiseModel, n_probes: int = 40,
                radius: float = 2.0, seed: int = 0, atol: float = 1e-9) -> dict:
    """Spot-check the declared field contracts on sampled points.

    Verifies ``|B| <= L``, ``|b| <= L``, ``|grad_B| <= L`` on sampled
    ``(x, xi)`` pairs, checks the gradient against central differences,
    and checks the mean-zero requirement ``E B(x, xi(0)) = 0`` (exact
    atom sums when the support is available, Monte Carlo within three
    standard errors otherwise).  Returns a report dict; raises
    :class:`InvalidModelError` when the mean-zero requirement fails.
    """
    rng = derived_rng(seed, 104)
    xs = rng.uniform(-radius, radius, size=(n_probes, field.d))
    if noise.support is not None:
        xis = noise.support.atoms[rng.integers(0, noise.support.size, size=n_probes)]
    else:
        xis = noise.sample_paths(n_probes, 1, rng)[:, 0, :]
    L = field.bound_L
    maxB = float(np.max(np.abs(field.B(xs, xis))))
    maxb = float(np.max(np.abs(field.b(xs, xis))))
    maxg = float(np.max(np.abs(field.grad_B(xs, xis))))

    # central-difference check of grad_B on a few probes
    h = 1e-6
    fd_err = 0.0
    for s in range(min(n_probes, 8)):
        x0 = xs[s : s + 1]
        xi0 = xis[s : s + 1]
        g = field.grad_B(x0, xi0)[0]
        for j in range(field.d):
            dx = np.zeros((1, field.d))
            dx[0, j] = h
            fd = (field.B(x0 + dx, xi0) - field.B(x0 - dx, xi0))[0] / (2 * h)
            fd_err = max(fd_err, float(np.max(np.abs(fd - g[:, j]))))

    if noise.support is not None:
        sup = noise.support
        mz = np.zeros_like(xs)
        for a, p in zip(sup.atoms, sup.probs):
            mz += p * field.B(xs, np.broadcast_to(a, xs.shape))
        mean_zero_err = float(np.max(np.abs(mz)))
        if mean_zero_err > atol:
            raise InvalidModelError(
                f"field is not mean-zero over the noise support (max |E B| = {mean_zero_err:.3e})")
    else:
        n_mc = 200_000
        xi = noise.sample_paths(n_mc, 1, rng)[:, 0, :]
        worst = 0.0
        for s in range(min(n_probes, 5)):
            vals = field.B(np.broadcast_to(xs[s], xi.shape), xi)
            mean = vals.mean(axis=0)
            se = vals.std(axis=0, ddof=1) / np.sqrt(n_mc) + 1e-15
            worst = max(worst, float(np.max(np.abs(mean) / (3.0 * se))))
        mean_zero_err = worst
        if worst > 1.0:
            raise InvalidModelError("field fails the Monte Carlo mean-zero check at 3 sigma")

    return {
        "max_abs_B": maxB,
        "max_abs_b": maxb,
        "max_abs_grad_B": maxg,
        "bound_L": L,
        "bound_ok": bool(max(maxB, maxb, maxg) <= L + 1e-12),
        "grad_fd_error": fd_err,
        "mean_zero_err": mean_zero_err,
    }


# ---------------------------------------------------------------------------
# bundled limit coefficients


@dataclass
class LimitCoefficients:
    """Callable bundle of the averaged coefficients of one model.

    Maps accept single points ``(d,)`` or batches ``(m, d)``.  ``at``
    caches per-point results behind a lock so concurrent valuation and
    reporting code can share one instance.
    """

    field: FieldSpec
    noise: NoiseModel
    n_max: int
    mode: str
    c_tail_bound: float
    A_tail_bound: float
    audit: dict
    n_samples: int = 200_000
    seed: int = 0
    _cache: dict = dc_field(default_factory=dict, repr=False)
    _lock: threading.Lock = dc_field(default_factory=threading.Lock, repr=False)

    def b_bar(self, x) -> np.ndarray:
        return drift_mean(self.field, self.noise, x, mode=self.mode,
                          n_samples=self.n_samples, seed=self.seed).value

    def c(self, x) -> np.ndarray:
        return drift_correction(self.field, self.noise, x, n_max=self.n_max,
                                mode=self.mode, n_samples=self.n_samples,
                                seed=self.seed).value

    def A(self, x) -> np.ndarray:
        return diffusion_matrix(self.field, self.noise, x, n_max=self.n_max,
                                mode=self.mode, n_samples=self.n_samples,
                                seed=self.seed).value

    def sigma(self, x) -> np.ndarray:
        return symmetric_sqrt(self.A(x))

    def drift(self, x) -> np.ndarray:
        """Total limit drift ``b_bar + c`` (what the diffusion uses)."""
        return self.b_bar(x) + self.c(x)

    def at(self, x) -> dict:
        """All coefficients at one point, cached."""
        xv = np.asarray(x, dtype=float).reshape(-1)
        key = xv.tobytes()
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        A = self.A(xv)
        entry = {
            "x": xv,
            "b_bar": self.b_bar(xv),
            "c": self.c(xv),
            "A": A,
            "sigma": symmetric_sqrt(A),
            "c_tail_bound": self.c_tail_bound,
            "A_tail_bound": self.A_tail_bound,
        }
        with self._lock:
            self._cache[key] = entry
        return entry

    def tabulated(self, lo: float, hi: float, n: int = 4001):
        """Fast 1-D interpolants ``(drift_fn, sigma_fn)`` on ``[lo, hi]``.

        Both returned callables map ``(m, 1) -> (m, 1)`` (sigma returns
        the scalar root, not the matrix); intended for feeding ensemble
        integrators where per-step series evaluation would dominate.
        """
        if self.field.d != 1:
            raise UnsupportedModeError("tabulation is one-dimensional only")
        grid = np.linspace(lo, hi, n)
        pts = grid[:, None]
        drift_tab = self.drift(pts)[:, 0]
        sig_tab = np.sqrt(np.clip(self.A(pts)[:, 0, 0], 0.0, None))
        inv_h = (n - 1) / (hi - lo)

        # uniform spacing lets a direct index computation replace the
        # binary search np.interp would run on every query
        def _lookup(tab, x):
            f = np.clip((np.asarray(x, float)[..., 0] - lo) * inv_h, 0.0, n - 1.000001)
            i = f.astype(np.int64)
            w = f - i
            return ((1.0 - w) * tab[i] + w * tab[i + 1])[..., None]

        def drift_fn(x):
            return _lookup(drift_tab, x)

        def sigma_fn(x):
            return _lookup(sig_tab, x)

        return drift_fn, sigma_fn


def build_limit_coefficients(field: FieldSpec, noise: NoiseModel, *,
                             n_max: Optional[int] = None, mode: str = "analytic",
                             n_samples: int = 200_000, seed: int = 0,
                             probes: Optional[np.ndarray] = None) -> LimitCoefficients:
    """Validate a model and bundle its averaged coefficient maps.

    Runs the field audit (mean-zero is enforced), fixes the truncation
    lag, and checks at probe points that ``A`` is symmetric PSD and that
    ``sigma sigma - A`` stays below 1e-10 in Frobenius norm.  The audit
    report is attached to the returned bundle.
    """
    if mode not in ("analytic", "empirical"):
        raise UnsupportedModeError(f"unknown estimator mode {mode!r}")
    if mode == "analytic":
        _require_support(noise, "build_limit_coefficients")
    if field.d != noise.d:
        raise InvalidModelError(f"field dimension {field.d} != noise dimension {noise.d}")
    if n_max is None:
        n_max = default_truncation_lag(noise.mixing, field.bound_L)
    report = audit_field(field, noise, seed=seed)
    c_tail = 2.0 * field.bound_L**2 * noise.mixing.tail_sum(n_max)
    A_tail = 4.0 * field.bound_L**2 * noise.mixing.tail_sum(n_max)
    lc = LimitCoefficients(field=field, noise=noise, n_max=int(n_max), mode=mode,
                           c_tail_bound=c_tail, A_tail_bound=A_tail, audit=report,
                           n_samples=n_samples, seed=seed)
    if probes is None:
        base = np.array([0.0, 0.5, -0.5, 1.5, -1.5])
        probes = np.repeat(base[:, None], field.d, axis=1)
    probes = np.asarray(probes, dtype=float).reshape(-1, field.d)
    A = lc.A(probes)
    sig = symmetric_sqrt(A)
    resid = np.sqrt(np.sum((sig @ sig - A) ** 2, axis=(-2, -1)))
    report["probe_sqrt_residual"] = float(np.max(resid))
    report["probe_min_eigenvalue"] = float(np.min(np.linalg.eigvalsh(A)))
    if report["probe_sqrt_residual"] > 1e-10:
        raise NumericError("square-root residual above 1e-10 at probe points")
    return lc
