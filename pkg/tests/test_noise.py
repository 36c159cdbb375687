import numpy as np
import numpy.testing as npt
import pytest

from avgdiff import (InvalidModelError, MixingProfile, moment_constant_D,
                     noise_from_config, phi_bound, rademacher_iid,
                     two_state_markov)
from avgdiff.rng import derived_rng


def test_rademacher_support_d1():
    m = rademacher_iid(1)
    assert m.iid
    npt.assert_allclose(sorted(m.support.atoms[:, 0]), [-1.0, 1.0])
    npt.assert_allclose(m.support.probs, [0.5, 0.5])
    npt.assert_allclose(m.mean, 0.0)


def test_rademacher_covariance_d2():
    m = rademacher_iid(2)
    npt.assert_allclose(m.covariance, np.eye(2))
    assert m.support.size == 4
    npt.assert_allclose(m.support.probs.sum(), 1.0)


def test_rademacher_invalid_dimension():
    with pytest.raises(InvalidModelError):
        rademacher_iid(0)


def test_phi_bound_iid_vanishes_beyond_zero():
    m = rademacher_iid(1)
    assert phi_bound(m, 1) == 0.0
    assert phi_bound(m, 50) == 0.0
    assert phi_bound(m, 0) <= 1.0


def test_markov_phi_values():
    m = two_state_markov(0.25)
    assert phi_bound(m, 2) == pytest.approx(0.25)
    assert phi_bound(m, 3) == pytest.approx(0.125)
    assert phi_bound(m, 0) <= 1.0


def test_phi_bound_capped_at_half():
    # mixing coefficients of any pair of sigma-algebras never exceed 1/2
    m = two_state_markov(0.05)
    assert phi_bound(m, 1) == pytest.approx(0.5)


def test_phi_monotone_in_lag():
    for m in (rademacher_iid(1), two_state_markov(0.25), two_state_markov(0.4)):
        vals = [phi_bound(m, u) for u in range(101)]
        assert all(b <= a + 1e-15 for a, b in zip(vals, vals[1:]))


def test_moment_constant_iid_is_zero():
    assert moment_constant_D(rademacher_iid(1), 1) == 0.0
    assert moment_constant_D(rademacher_iid(3), 4) == 0.0


def test_moment_constant_markov_frozen():
    # sup over u of 0.5^u (u^2 + u^4) is attained at u=6
    assert moment_constant_D(two_state_markov(0.25), 1) == pytest.approx(20.8125)


def test_markov_autocovariance_closed_form():
    m = two_state_markov(0.25)
    for r in range(6):
        npt.assert_allclose(m.autocovariance(r), 0.5**r, atol=1e-14)


def test_markov_near_half_is_iid_like():
    m = two_state_markov(0.5 - 1e-12)
    assert abs(m.autocovariance(1)[0, 0]) < 1e-11


def test_markov_invalid_probability():
    for p in (0.0, 1.0, -0.2, 1.3):
        with pytest.raises(InvalidModelError):
            two_state_markov(p)


def test_joint_lag_probs_stationary():
    m = two_state_markov(0.3)
    j1 = m.joint_lag_probs(1)
    npt.assert_allclose(j1.sum(), 1.0)
    # marginals of the pair law both equal the stationary law
    npt.assert_allclose(j1.sum(axis=0), m.support.probs)
    npt.assert_allclose(j1.sum(axis=1), m.support.probs)


def test_markov_empirical_autocovariance():
    m = two_state_markov(0.25)
    rng = derived_rng(123, 7)
    xs = m.sample_paths(2000, 400, rng)[:, :, 0]
    for r in range(1, 6):
        prods = xs[:, :-r or None][:, : 400 - r] * xs[:, r:]
        est = prods.mean()
        se = prods.std() / np.sqrt(prods.size)
        assert abs(est - 0.5**r) < 3.0 * se + 1e-3


def test_rademacher_empirical_covariance():
    m = rademacher_iid(2)
    rng = derived_rng(9, 0)
    xs = m.sample_paths(5000, 200, rng).reshape(-1, 2)
    cov = xs.T @ xs / xs.shape[0]
    npt.assert_allclose(cov, np.eye(2), atol=0.01)


def test_sampling_is_deterministic_per_seed():
    m = two_state_markov(0.25)
    a = m.sample_paths(16, 50, derived_rng(42, 1))
    b = m.sample_paths(16, 50, derived_rng(42, 1))
    npt.assert_array_equal(a, b)


def test_config_round_trip():
    for m in (rademacher_iid(2), two_state_markov(0.25)):
        again = noise_from_config(m.to_config())
        assert again.kind == m.kind
        npt.assert_allclose(again.covariance, m.covariance)


def test_noise_from_config_rejects_unknown():
    with pytest.raises(InvalidModelError):
        noise_from_config({"kind": "levy"})


def test_mixing_profile_tail_sums():
    prof = MixingProfile(rate=0.5)
    brute = sum(prof.phi(u) for u in range(11, 3000))
    assert prof.tail_sum(10) == pytest.approx(brute, rel=1e-12)
    brute_weighted = sum(u * prof.phi(u) for u in range(1, 5000))
    assert prof.lag_weighted_tail() == pytest.approx(brute_weighted, rel=1e-10)


def test_mixing_profile_tail_sum_with_cap():
    # cap keeps early lags at 1/2 before the geometric decay takes over
    prof = MixingProfile(rate=0.9)
    brute = sum(prof.phi(u) for u in range(3, 5000))
    assert prof.tail_sum(2) == pytest.approx(brute, rel=1e-9)
