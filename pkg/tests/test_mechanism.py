import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import random_dataset
from oracles import plr_params_mp, pstf_params_mp, rel_err
from dpstack.mechanism import (
    BudgetRejected, bound_terms, expected_noise_norm, group_noise_levels, noise_audit, plr_params,
    pstf_params, recover_noise, sample_noise, sample_noise_norms,
)
from dpstack.numerics import ObjectiveSpec, Regularizer, minimize


def test_plr_params_first_branch_example():
    p = plr_params(1.0, 1500, 0.01)
    assert p.first_branch and p.delta == 0.0
    assert p.eps_prime == pytest.approx(0.96694139609757887284, rel=1e-13)


def test_plr_params_fallback_example():
    p = plr_params(0.01, 10, 0.5)
    assert not p.first_branch
    assert p.eps_prime == 0.005
    assert p.delta == pytest.approx(9.4875052083327905906, rel=1e-12)


def test_plr_params_large_n_lambda():
    p = plr_params(1.0, 10**9, 10.0)
    assert p.eps_prime == pytest.approx(1.0, abs=1e-9) and p.delta == 0.0


def test_pstf_params_rejection():
    # fallback delta_k ~ q_k / (n eps) - lambda_k is negative for a tiny q_k
    with pytest.raises(BudgetRejected):
        pstf_params(0.01, 2000, [1e-4, 1e-4], [1e-4, 1 - 1e-4])


def test_plr_params_rejects_invalid():
    for args in [(0.0, 10, 1.0), (-1.0, 10, 1.0), (1.0, 0, 1.0), (1.0, 10, 0.0)]:
        with pytest.raises(ValueError):
            plr_params(*args)


def test_plr_params_infinite_budget():
    p = plr_params(math.inf, 10, 0.1)
    assert math.isinf(p.eps_prime) and p.delta == 0.0


def test_plr_fallback_never_rejects():
    # the fallback runs when e^{eps/2} <= 1 + 1/(4 n lam); then also
    # e^{eps/4} <= 1 + 1/(4 n lam), i.e. delta >= 0
    rng = np.random.default_rng(0)
    for _ in range(2000):
        eps = 10 ** rng.uniform(-3, 1)
        n = int(10 ** rng.uniform(0, 3))
        lam = 10 ** rng.uniform(-6, 0)
        plr_params(eps, n, lam)


def test_pstf_example():
    p = pstf_params(1.0, 1000, [0.01, 0.01], [0.5, 0.5])
    assert p.first_branch
    assert p.eps_prime == pytest.approx(0.97507780099745570362, rel=1e-13)
    assert p.group_rates == (p.eps_prime, p.eps_prime)


@pytest.mark.parametrize("eps,n,lam", [(1.0, 1500, 0.01), (0.01, 10, 0.5), (0.3, 50, 1e-3)])
def test_pstf_single_group_equals_plr(eps, n, lam):
    a, b = plr_params(eps, n, lam), pstf_params(eps, n, [lam], [1.0])
    assert a.eps_prime == b.eps_prime and a.first_branch == b.first_branch
    assert b.group_deltas[0] == a.delta
    assert b.group_rates[0] == a.eps_prime


@pytest.mark.parametrize("eps,n,lam", [(1.0, 1000, 0.01), (0.01, 10, 0.5)])
def test_pstf_zero_weight_group_vanishes(eps, n, lam):
    a, b = plr_params(eps, n, lam), pstf_params(eps, n, [lam, lam], [1.0, 0.0])
    assert b.eps_prime == a.eps_prime
    assert b.group_deltas == (a.delta, 0.0)
    assert math.isinf(b.group_rates[1])


def test_pstf_validates():
    with pytest.raises(ValueError):
        pstf_params(1.0, 10, [0.1, 0.1], [0.6, 0.6])
    with pytest.raises(ValueError):
        pstf_params(1.0, 10, [0.1, -0.1], [0.5, 0.5])


def test_budget_arithmetic_matches_mpmath():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(1000):
        eps = 10 ** rng.uniform(-2, 1)
        n = int(10 ** rng.uniform(0.5, 4))
        if i % 2 == 0:
            lam = 10 ** rng.uniform(-4, 1)
            ep, dl, first = plr_params_mp(eps, n, lam)
            p = plr_params(eps, n, lam)
            assert p.first_branch == first
            worst = max(worst, rel_err(p.eps_prime, ep), rel_err(p.delta, dl))
        else:
            K = int(rng.integers(1, 6))
            q = rng.dirichlet(np.ones(K))
            lams = 10 ** rng.uniform(-4, 1, K)
            ep, dls, first = pstf_params_mp(eps, n, lams, q)
            try:
                p = pstf_params(eps, n, lams, q)
            except BudgetRejected:
                assert not first and min(dls) < 0
                continue
            assert p.first_branch == first
            worst = max(worst, rel_err(p.eps_prime, ep), *(rel_err(a, b) for a, b in zip(p.group_deltas, dls)))
    assert worst <= 1e-12


@settings(max_examples=200)
@given(st.floats(0.01, 10), st.integers(1, 10_000), st.floats(1e-5, 10))
def test_branch_exclusivity(eps, n, lam):
    p = plr_params(eps, n, lam)
    if p.first_branch:
        assert p.eps_prime > 0 and p.delta == 0.0
    else:
        assert p.eps_prime == eps / 2 and p.delta >= 0


def test_eps_prime_monotone_in_first_branch():
    base = plr_params(1.0, 500, 0.01).eps_prime
    assert plr_params(1.5, 500, 0.01).eps_prime > base
    assert plr_params(1.0, 600, 0.01).eps_prime > base
    assert plr_params(1.0, 500, 0.02).eps_prime > base


def test_sample_noise_basics():
    rng = np.random.default_rng(0)
    b = sample_noise(5, 1.0, rng)
    assert b.shape == (5,) and np.linalg.norm(b) > 0
    np.testing.assert_array_equal(sample_noise(3, math.inf, rng), np.zeros(3))
    b1 = sample_noise(4, 2.0, np.random.default_rng(9))
    b2 = sample_noise(4, 2.0, np.random.default_rng(9))
    np.testing.assert_array_equal(b1, b2)
    with pytest.raises(ValueError):
        sample_noise(0, 1.0, rng)


def test_noise_one_dimensional_mean_and_sign():
    rng = np.random.default_rng(1)
    draws = np.array([sample_noise(1, 2.0, rng)[0] for _ in range(20_000)])
    assert abs(np.abs(draws).mean() - 1.0) < 3 * 1.0 / math.sqrt(20_000)
    assert 0.48 < (draws > 0).mean() < 0.52


def test_noise_direction_is_centred():
    rng = np.random.default_rng(2)
    dirs = np.array([b / np.linalg.norm(b) for b in (sample_noise(3, 1.0, rng) for _ in range(20_000))])
    assert np.all(np.abs(dirs.mean(axis=0)) < 0.02)


def test_scalar_and_vectorised_sampler_agree_in_law():
    rng = np.random.default_rng(3)
    a = np.array([np.linalg.norm(sample_noise(10, 1.0, rng)) for _ in range(3000)])
    b = sample_noise_norms(10, 1.0, 3000, rng)
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_noise_audit_example():
    audit = noise_audit(100, 1.0, 10_000, np.random.default_rng(4))
    assert audit["expected_norm"] == 200.0
    assert abs(audit["mean_norm"] - 200) < 0.6
    assert audit["passed"]
    assert noise_audit(1, 1.0, 100, np.random.default_rng(0))["expected_norm"] == 2.0
    assert audit == noise_audit(100, 1.0, 10_000, np.random.default_rng(4))


def test_expected_norm_and_group_levels():
    assert expected_noise_norm(10, 0.5) == 40.0
    assert group_noise_levels([10, 5], [0.5, 0.0], 2.0) == [20.0, math.inf]


def test_recover_noise_at_zero():
    rng = np.random.default_rng(5)
    ds = random_dataset(rng, 30, 3)
    b = recover_noise(np.zeros(3), ds.X, ds.y, 0.7, 0.0)
    np.testing.assert_allclose(b, 0.5 * ds.y @ ds.X, rtol=1e-13)


@pytest.mark.parametrize("seed", range(20))
def test_recover_noise_round_trip(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 50, 4)
    X = ds.X / np.linalg.norm(ds.X, axis=1).max()
    b = rng.standard_normal(4) * 5
    reg = Regularizer.offset_l2(rng.standard_normal(4)) if seed % 3 == 0 else Regularizer()
    lam, delta = 10 ** rng.uniform(-3, 0), rng.random() * (seed % 2)
    w = minimize(ObjectiveSpec(X, ds.y, b, delta, lam, reg)).w
    np.testing.assert_allclose(recover_noise(w, X, ds.y, lam, delta, reg), b, atol=1e-6)


def _ball(rng, n, d, q):
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * q * rng.random((n, 1)) ** (1 / d)


def test_neighbouring_noise_bound():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(2, 20)), int(rng.integers(1, 6))
        q = rng.uniform(0.05, 1.0)
        X = _ball(rng, n, d, q)
        y = rng.uniform(-1, 1, n)
        X2, y2 = X.copy(), y.copy()
        X2[-1] = _ball(rng, 1, d, q)[0]
        y2[-1] = rng.uniform(-1, 1)
        w = rng.standard_normal(d) * 3
        lam, delta = rng.uniform(0.01, 1), rng.uniform(0, 1)
        diff = recover_noise(w, X, y, lam, delta) - recover_noise(w, X2, y2, lam, delta)
        worst = max(worst, np.linalg.norm(diff) - 2 * q)
    assert worst <= 1e-9


def test_bound_terms_examples():
    t3 = bound_terms("single", 1.0, 100, 0.1, 1.0, 0.05)
    t5 = bound_terms("part", 1.0, 100, 0.1, 1.0, 0.05, K=5, q=0.2)
    assert t5[1] == pytest.approx(5991.4645471079816543, rel=1e-13)
    assert t5[1] / t3[1] == pytest.approx(math.log(400) / math.log(2000), rel=1e-12)
    for reading in ("adjusted", "raw"):
        assert bound_terms("part", 1.0, 100, 0.1, 1.0, 0.05, K=1, q=1.0, reading=reading) == t3
    with pytest.raises(ValueError):
        bound_terms("eq4", 1.0, 100, 0.1, 1.0, 0.05)


@pytest.mark.parametrize("K", [2, 4, 10, 50])
def test_bound_middle_term_shrinks_with_uniform_q(K):
    t3 = bound_terms("single", 2.0, 100, 0.2, 0.5, 0.1)
    t5 = bound_terms("part", 2.0, 100, 0.2, 0.5, 0.1, K=K, q=1 / K)
    assert t5[1] < t3[1]
