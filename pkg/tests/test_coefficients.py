"""Coefficient maps against closed forms and a literal double-sum oracle.

The oracle below rebuilds the averaged sums from the two-state chain's
transition matrix alone, so it shares no code path with the module
under test.
"""

import numpy as np
import numpy.testing as npt
import pytest

from avgdiff import (InvalidModelError, NumericError, UnsupportedModeError,
                     build_limit_coefficients, default_truncation_lag,
                     diffusion_matrix, drift_correction, drift_mean,
                     field_from_config, rademacher_iid, scalar_field,
                     symmetric_sqrt, two_state_markov)
from avgdiff.rng import derived_rng

P_FLIP = 0.25
SIG = lambda v: 1.0 + 0.1 * np.sin(v)
DSIG = lambda v: 0.1 * np.cos(v)


def pair_second_moment(p, r):
    """E[xi(0) xi(r)] for the symmetric two-state chain, by matrix power."""
    if r == 0:
        return 1.0
    P = np.array([[1.0 - p, p], [p, 1.0 - p]])
    Pr = np.linalg.matrix_power(P, r)
    atoms = np.array([1.0, -1.0])
    return float(sum(0.5 * Pr[i, j] * atoms[i] * atoms[j]
                     for i in range(2) for j in range(2)))


def second_moments(p, r_max):
    moments = np.empty(r_max + 1)
    moments[0] = 1.0
    P = np.array([[1.0 - p, p], [p, 1.0 - p]])
    Pr = np.eye(2)
    atoms = np.array([1.0, -1.0])
    for r in range(1, r_max + 1):
        Pr = Pr @ P
        moments[r] = 0.5 * (atoms[:, None] * atoms[None, :] * Pr).sum()
    return moments


def cesaro_c_literal(x, n, p):
    """(1/n) sum_{l=0..n} sum_{m=-n..l-1} E[dB(x,xi(l)) B(x,xi(m))]."""
    total = 0.0
    for l in range(0, n + 1):
        for m in range(-n, l):
            total += DSIG(x) * SIG(x) * pair_second_moment(p, l - m)
    return total / n


def cesaro_c_weighted(x, n, p):
    m2 = second_moments(p, 2 * n)
    r = np.arange(1, 2 * n + 1)
    w = np.minimum(n + 1, 2 * n - r + 1)
    return DSIG(x) * SIG(x) * float((w * m2[1:]).sum()) / n


def cesaro_a_literal(x, n, p):
    total = 0.0
    for l in range(0, n + 1):
        for m in range(0, n + 1):
            total += SIG(x) ** 2 * pair_second_moment(p, abs(l - m))
    return total / n


def cesaro_a_weighted(x, n, p):
    m2 = second_moments(p, n)
    r = np.arange(1, n + 1)
    lag0 = (n + 1) * m2[0]
    lagged = 2.0 * ((n + 1 - r) * m2[1:]).sum()
    return SIG(x) ** 2 * float(lag0 + lagged) / n


def sin_field():
    return field_from_config(
        {"kind": "sin", "base": 1.0, "amp": 0.1, "freq": 1.0, "b": 0.0})


# ---------------------------------------------------------------------------
# oracle self-consistency


def test_weighted_cesaro_forms_match_literal_loops():
    for n in (3, 11, 40):
        assert cesaro_c_weighted(0.7, n, P_FLIP) == pytest.approx(
            cesaro_c_literal(0.7, n, P_FLIP), rel=1e-12)
        assert cesaro_a_weighted(0.7, n, P_FLIP) == pytest.approx(
            cesaro_a_literal(0.7, n, P_FLIP), rel=1e-12)


# ---------------------------------------------------------------------------
# drift_mean


def test_drift_mean_constant():
    fld = scalar_field(1.0, drift=0.7)
    est = drift_mean(fld, rademacher_iid(1), [0.3])
    npt.assert_allclose(est.value, [0.7])
    assert est.stderr is None


def test_drift_mean_odd_in_noise_is_zero():
    from avgdiff.coefficients import FieldSpec

    def b(x, xi):
        return x * xi

    base = scalar_field(1.0)
    custom = FieldSpec(d=1, B=base.B, b=b, grad_B=base.grad_B, bound_L=5.0,
                       params={})
    est = drift_mean(custom, rademacher_iid(1), [2.0])
    assert est.value[0] == 0.0


def test_drift_mean_atom_sum():
    from avgdiff.coefficients import FieldSpec

    def b(x, xi):
        return np.sin(x) + xi**2

    base = scalar_field(1.0)
    custom = FieldSpec(d=1, B=base.B, b=b, grad_B=base.grad_B, bound_L=5.0,
                       params={})
    est = drift_mean(custom, rademacher_iid(1), [0.4])
    npt.assert_allclose(est.value, [np.sin(0.4) + 1.0], rtol=1e-15)


def test_drift_mean_empirical_reports_stderr():
    fld = scalar_field(1.0, drift=0.25)
    est = drift_mean(fld, two_state_markov(0.25), [0.0], mode="empirical",
                     n_samples=20_000, seed=3)
    assert est.stderr is not None
    assert abs(est.value[0] - 0.25) <= 3.0 * est.stderr[0] + 1e-12


# ---------------------------------------------------------------------------
# drift_correction


def test_correction_iid_exactly_zero():
    fld = sin_field()
    est = drift_correction(fld, rademacher_iid(1), [1.3], n_max=50)
    assert est.value[0] == 0.0


def test_correction_constant_sigma_is_zero():
    fld = scalar_field(2.0)
    est = drift_correction(fld, two_state_markov(0.25), [0.5])
    assert est.value[0] == 0.0


def test_correction_markov_closed_form():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    for x in (-1.2, 0.0, 0.7, 2.5):
        est = drift_correction(fld, noise, [x])
        closed = DSIG(x) * SIG(x) * (1 - 2 * P_FLIP) / (2 * P_FLIP)
        assert abs(est.value[0] - closed) <= est.tail_bound + 1e-12
        assert abs(est.value[0] - closed) < 1e-6


def test_correction_against_cesaro_window():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    x = 0.7
    n = 10_000
    oracle = cesaro_c_weighted(x, n, P_FLIP)
    est = drift_correction(fld, noise, [x])
    # certified window error of the Cesaro form:
    # (2 L^2 / n) sum phi + 2 L^2 tail(n), phi(r) = 0.5^r here
    L = fld.bound_L
    window = 2.0 * L**2 / n * 1.0 + 2.0 * L**2 * 0.5**n
    assert abs(est.value[0] - oracle) <= window + est.tail_bound


def test_correction_empirical_mode():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    est = drift_correction(fld, noise, [0.7], n_max=25, mode="empirical",
                           n_samples=150_000, seed=11)
    closed = DSIG(0.7) * SIG(0.7) * (1 - 2 * P_FLIP) / (2 * P_FLIP)
    assert est.stderr is not None
    assert abs(est.value[0] - closed) <= 5.0 * est.stderr[0] + est.tail_bound


def test_correction_rejects_bad_lag():
    fld = sin_field()
    with pytest.raises(InvalidModelError):
        drift_correction(fld, two_state_markov(0.25), [0.0], n_max=0)


# ---------------------------------------------------------------------------
# diffusion_matrix


def test_diffusion_iid_is_sigma_squared():
    fld = sin_field()
    noise = rademacher_iid(1)
    for x in (-2.0, 0.1, 1.9):
        est = diffusion_matrix(fld, noise, [x], n_max=30)
        npt.assert_allclose(est.value, [[SIG(x) ** 2]], atol=1e-12)


def test_diffusion_zero_field():
    zero = scalar_field(0.0)
    est = diffusion_matrix(zero, two_state_markov(0.25), [0.0])
    npt.assert_allclose(est.value, [[0.0]], atol=1e-15)


def test_diffusion_markov_closed_form():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    for x in (-1.2, 0.0, 0.7, 2.5):
        est = diffusion_matrix(fld, noise, [x])
        closed = SIG(x) ** 2 * (1 - P_FLIP) / P_FLIP
        assert abs(est.value[0, 0] - closed) <= est.tail_bound + 1e-12
        assert abs(est.value[0, 0] - closed) < 1e-6
        npt.assert_array_equal(est.value, est.value.T)


def test_diffusion_against_cesaro_window():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    x = 0.7
    n = 10_000
    oracle = cesaro_a_weighted(x, n, P_FLIP)
    est = diffusion_matrix(fld, noise, [x])
    L = fld.bound_L
    # lag-0 window part L^2/n, lag-weighted part (4 L^2 / n) sum r phi(r),
    # truncation 4 L^2 tail(n); sum r 0.5^r = 2
    window = L**2 / n + 4.0 * L**2 / n * 2.0 + 4.0 * L**2 * 0.5**n
    assert abs(est.value[0, 0] - oracle) <= window + est.tail_bound


def test_diffusion_empirical_mode():
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    est = diffusion_matrix(fld, noise, [0.7], n_max=25, mode="empirical",
                           n_samples=150_000, seed=12)
    closed = SIG(0.7) ** 2 * (1 - P_FLIP) / P_FLIP
    assert abs(est.value[0, 0] - closed) <= 5.0 * est.stderr[0, 0] + est.tail_bound


def test_long_run_variance_cross_check():
    # variance of partial sums of sigma(x) xi(n) over long windows
    # approaches A(x); statistical agreement, not equality
    fld = sin_field()
    noise = two_state_markov(P_FLIP)
    x = 0.7
    est = diffusion_matrix(fld, noise, [x])
    rng = derived_rng(21, 2)
    n_win, n_rep = 2000, 4000
    xi = noise.sample_paths(n_rep, n_win, rng)[:, :, 0]
    sums = (SIG(x) * xi).sum(axis=1) / np.sqrt(n_win)
    var = sums.var(ddof=1)
    se = var * np.sqrt(2.0 / (n_rep - 1))
    assert abs(var - est.value[0, 0]) < 6.0 * se + 0.05


# ---------------------------------------------------------------------------
# symmetric square root


def test_sqrt_identity():
    npt.assert_array_equal(symmetric_sqrt(np.eye(3)), np.eye(3))


def test_sqrt_diagonal():
    npt.assert_allclose(symmetric_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]),
                        atol=1e-14)


def test_sqrt_dense():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    s = symmetric_sqrt(A)
    npt.assert_allclose(s, s.T, atol=1e-14)
    npt.assert_allclose(s @ s, A, atol=1e-12)


def test_sqrt_random_psd_batch():
    rng = derived_rng(77, 3)
    for _ in range(200):
        d = int(rng.integers(1, 7))
        M = rng.normal(size=(d, d))
        A = M @ M.T
        s = symmetric_sqrt(A)
        npt.assert_allclose(s, s.T, atol=1e-10)
        assert np.linalg.norm(s @ s - A) < 1e-10 * max(1.0, np.linalg.norm(A))


def test_sqrt_clamps_tiny_negative_eigenvalue():
    A = np.diag([1.0, -5e-11])
    s = symmetric_sqrt(A)
    assert s[1, 1] == 0.0


def test_sqrt_rejects_asymmetric():
    with pytest.raises(InvalidModelError):
        symmetric_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_sqrt_rejects_indefinite():
    with pytest.raises(NumericError):
        symmetric_sqrt(np.diag([1.0, -0.5]))


# ---------------------------------------------------------------------------
# truncation lag and bundle


def test_default_truncation_lag_iid():
    assert default_truncation_lag(rademacher_iid(1).mixing, 1.0) == 1


def test_default_truncation_lag_matches_definition():
    mix = two_state_markov(P_FLIP).mixing
    L = 1.1
    n = default_truncation_lag(mix, L)
    assert 2 * L**2 * mix.tail_sum(n) < 1e-8
    assert 2 * L**2 * mix.tail_sum(n - 1) >= 1e-8


def test_build_limit_coefficients_iid_zero_correction():
    lc = build_limit_coefficients(sin_field(), rademacher_iid(1))
    xs = np.array([[-1.0], [0.0], [2.0]])
    npt.assert_array_equal(lc.c(xs), np.zeros((3, 1)))
    npt.assert_allclose(lc.A(xs)[:, 0, 0], SIG(xs[:, 0]) ** 2, atol=1e-12)


def test_build_limit_coefficients_sigma_squares_back():
    lc = build_limit_coefficients(sin_field(), two_state_markov(P_FLIP))
    x = np.array([[0.7]])
    A = lc.A(x)
    s = lc.sigma(x)
    npt.assert_allclose(np.einsum("mij,mjk->mik", s, s), A, atol=1e-10)


def test_limit_coefficients_cache():
    lc = build_limit_coefficients(sin_field(), two_state_markov(P_FLIP))
    first = lc.at([0.7])
    second = lc.at([0.7])
    assert first is second
    assert "sigma" in first and "c_tail_bound" in first


def test_build_rejects_dimension_mismatch():
    with pytest.raises(InvalidModelError):
        build_limit_coefficients(sin_field(), rademacher_iid(2))


def test_build_rejects_non_mean_zero_field():
    from avgdiff.coefficients import FieldSpec

    base = scalar_field(1.0)

    def shifted_B(x, xi):
        return base.B(x, xi) + 0.5

    bad = FieldSpec(d=1, B=shifted_B, b=base.b, grad_B=base.grad_B, bound_L=2.0,
                    params={})
    with pytest.raises(InvalidModelError):
        build_limit_coefficients(bad, rademacher_iid(1))


def test_analytic_mode_needs_finite_support():
    class NoSupport:
        pass

    import dataclasses

    noise = two_state_markov(0.25)
    stripped = dataclasses.replace(noise, support=None)
    with pytest.raises(UnsupportedModeError):
        drift_correction(sin_field(), stripped, [0.0], n_max=5)


def test_tabulated_lookup_matches_direct():
    lc = build_limit_coefficients(sin_field(), two_state_markov(P_FLIP))
    drift_fn, sigma_fn = lc.tabulated(-5.0, 5.0, 2001)
    xs = np.linspace(-4.5, 4.5, 17)[:, None]
    direct_drift = lc.drift(xs)
    direct_sigma = np.sqrt(lc.A(xs)[:, 0, 0])
    npt.assert_allclose(drift_fn(xs)[:, 0], direct_drift[:, 0], atol=5e-5)
    npt.assert_allclose(sigma_fn(xs)[:, 0], direct_sigma, atol=5e-5)


def test_field_from_config_rejects_unknown_kind():
    with pytest.raises(InvalidModelError):
        field_from_config({"kind": "tanh"})


def test_scalar_field_requires_bound_for_callables():
    with pytest.raises(InvalidModelError):
        scalar_field(lambda v: np.exp(v))
