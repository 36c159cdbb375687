import numpy as np
import numpy.testing as npt
import pytest
import scipy.stats

from avgdiff import (DiffusionSpec, InvalidModelError, atomic_law_cdf_ks,
                     euler_maruyama, euler_maruyama_ensemble,
                     ks_by_coordinate, ks_distance, ks_distance_to_cdf,
                     reference_dt)
from avgdiff.rng import derived_rng


def test_deterministic_drift():
    spec = DiffusionSpec.scalar(lambda x: np.ones_like(x),
                                lambda x: np.zeros_like(x), 0.0, 1.0)
    path = euler_maruyama(spec, 1e-3, seed=0)
    npt.assert_allclose(path.states[-1], [1.0], atol=1e-12)


def test_constant_sigma_gaussian_moments():
    s, T, n_paths = 0.7, 1.0, 100_000
    spec = DiffusionSpec.scalar(lambda x: np.zeros_like(x),
                                lambda x: np.full_like(x, s), 0.5, T)
    finals = euler_maruyama_ensemble(spec, 1e-2, n_paths, seed=31)
    assert finals.shape == (n_paths, 1)
    var_exact = s**2 * T
    se_mean = np.sqrt(var_exact / n_paths)
    assert abs(finals[:, 0].mean() - 0.5) < 3 * se_mean
    se_var = var_exact * np.sqrt(2.0 / (n_paths - 1))
    assert abs(finals[:, 0].var(ddof=1) - var_exact) < 3 * se_var


def test_two_dimensional_components_uncorrelated():
    spec = DiffusionSpec(
        d=2, x0=np.zeros(2), T=1.0,
        drift=lambda x: np.zeros_like(x),
        sigma=lambda x: np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)))
    finals = euler_maruyama_ensemble(spec, 1e-2, 50_000, seed=5)
    corr = np.corrcoef(finals[:, 0], finals[:, 1])[0, 1]
    assert abs(corr) < 3.0 / np.sqrt(50_000)


def test_path_accessor_interpolates():
    spec = DiffusionSpec.scalar(lambda x: np.ones_like(x),
                                lambda x: np.zeros_like(x), 0.0, 1.0)
    path = euler_maruyama(spec, 0.25, seed=0)
    npt.assert_allclose(path.at(0.375), [0.375], atol=1e-12)
    with pytest.raises(InvalidModelError):
        path.at(1.5)


def test_euler_rejects_bad_dt():
    spec = DiffusionSpec.scalar(lambda x: np.zeros_like(x),
                                lambda x: np.ones_like(x), 0.0, 1.0)
    with pytest.raises(InvalidModelError):
        euler_maruyama(spec, 0.0)
    with pytest.raises(InvalidModelError):
        euler_maruyama(spec, 2.0)


def _ou_euler_moments(x0, s, T, dt):
    # the Euler chain for dX = -X dt + s dW is linear, so its first two
    # moments follow exact recursions
    n = round(T / dt)
    a = 1.0 - dt
    m = x0 * a**n
    m2 = x0**2 * a ** (2 * n) + s**2 * dt * (1 - a ** (2 * n)) / (1 - a**2)
    return m, m2


def test_weak_error_shrinks_linearly_in_dt():
    s, x0, T = 1.0, 1.0, 1.0
    spec = DiffusionSpec.scalar(lambda x: -x, lambda x: np.full_like(x, s),
                                x0, T)
    # tie the integrator to the exact chain moments at one dt
    dt0 = 1e-2
    finals = euler_maruyama_ensemble(spec, dt0, 200_000, seed=60)
    _, m2_chain = _ou_euler_moments(x0, s, T, dt0)
    m2_hat = np.mean(finals[:, 0] ** 2)
    se = np.std(finals[:, 0] ** 2, ddof=1) / np.sqrt(finals.shape[0])
    assert abs(m2_hat - m2_chain) < 4 * se
    # then check the chain's weak error against the SDE moments is
    # linear in dt (exact arithmetic, no sampling noise)
    m2_exact = 0.5 * (1 - np.exp(-2 * T)) + np.exp(-2 * T) * x0**2
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    errs = [abs(_ou_euler_moments(x0, s, T, dt)[1] - m2_exact) for dt in dts]
    assert errs[0] > errs[1] > errs[2]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 0.9 < slope < 1.1


def test_ks_distance_matches_scipy():
    rng = derived_rng(90, 0)
    a = rng.normal(size=500)
    b = rng.normal(0.3, 1.0, size=700)
    ours = ks_distance(a, b)
    ref = scipy.stats.ks_2samp(a, b, method="asymp").statistic
    assert ours == pytest.approx(ref, abs=1e-12)


def test_ks_distance_identical_samples():
    a = np.array([0.1, -2.0, 0.4, 7.0])
    assert ks_distance(a, a.copy()) == 0.0


def test_ks_distance_same_law_small():
    rng = derived_rng(91, 0)
    a = rng.normal(size=100_000)
    b = rng.normal(size=100_000)
    assert ks_distance(a, b) < 0.02


def test_ks_distance_shifted_normals():
    rng = derived_rng(92, 0)
    a = rng.normal(size=200_000)
    b = rng.normal(1.0, 1.0, size=200_000)
    # sup_x |Phi(x) - Phi(x-1)| = Phi(1/2) - Phi(-1/2)
    target = scipy.stats.norm.cdf(0.5) - scipy.stats.norm.cdf(-0.5)
    assert abs(ks_distance(a, b) - target) < 0.01


def test_ks_distance_rejects_empty():
    with pytest.raises(InvalidModelError):
        ks_distance([], [1.0])


def test_ks_by_coordinate_keys():
    rng = derived_rng(93, 0)
    a = rng.normal(size=(1000, 2))
    b = rng.normal(size=(1200, 2))
    out = ks_by_coordinate(a, b)
    assert set(out) == {"x0", "x1", "norm"}
    assert all(0.0 <= v <= 1.0 for v in out.values())


def test_ks_distance_to_cdf():
    rng = derived_rng(94, 0)
    a = rng.normal(size=100_000)
    d = ks_distance_to_cdf(a, scipy.stats.norm.cdf)
    assert d < 0.01
    d_shift = ks_distance_to_cdf(a + 1.0, scipy.stats.norm.cdf)
    target = scipy.stats.norm.cdf(0.5) - scipy.stats.norm.cdf(-0.5)
    assert abs(d_shift - target) < 0.01


def test_atomic_law_cdf_ks_hand_case():
    # fair coin at {-1, +1} against the standard normal:
    # sup gap sits just left of +1 where the atom cdf is 1/2
    atoms = np.array([-1.0, 1.0])
    probs = np.array([0.5, 0.5])
    d = atomic_law_cdf_ks(atoms, probs, scipy.stats.norm.cdf)
    expected = scipy.stats.norm.cdf(1.0) - 0.5
    assert d == pytest.approx(expected, abs=1e-12)


def test_atomic_law_cdf_ks_degenerate_atom():
    d = atomic_law_cdf_ks(np.array([0.0]), np.array([1.0]),
                          scipy.stats.norm.cdf)
    assert d == pytest.approx(0.5, abs=1e-12)


def test_reference_dt_formula():
    assert reference_dt(0.5) == pytest.approx(0.5**2 * 0.5)
    assert reference_dt(2.0) == pytest.approx(4.0)
    assert reference_dt(0.05) == pytest.approx(0.05**3)


def test_ensemble_replay():
    spec = DiffusionSpec.scalar(lambda x: np.zeros_like(x),
                                lambda x: np.ones_like(x), 0.0, 1.0)
    a = euler_maruyama_ensemble(spec, 1e-2, 1000, seed=7)
    b = euler_maruyama_ensemble(spec, 1e-2, 1000, seed=7)
    npt.assert_array_equal(a, b)
