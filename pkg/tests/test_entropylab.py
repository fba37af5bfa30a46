import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipreg.entropylab import (
    PackingConfig,
    build_packing,
    fourth_moment_check,
    gradient_energy,
    kl_observations,
    lipschitz_quotients,
    m_subsets,
    minimax_lower_bound,
    multilinear_eval,
    multilinear_features,
    sample_thetas,
    truncate,
    truncation_distance,
)
from lipreg.errors import InputError, UnsupportedOperationError
from lipreg.measures import GAUSSIAN, LAPLACE, MeasureSpec, sample
from lipreg.polybasis import PolyInBasis, enumerate_indices, ou_apply

from oracles import gaussian_quartic_multilinear_m2


def test_theta_moments():
    th = sample_thetas(435, 200, 1)
    sq = np.sum(th**2, axis=1)
    assert abs(sq.mean() - 1) <= 4 * math.sqrt(2 / 435) / math.sqrt(200)
    diff = np.sum((th[:100] - th[100:]) ** 2, axis=1)
    assert abs(diff.mean() - 2) <= 4 * 2 * math.sqrt(2 / 435) / math.sqrt(100)
    scal = sample_thetas(1, 2, 1)
    assert scal.shape == (2, 1)
    assert np.array_equal(sample_thetas(435, 3, 1), th[:3])


def test_subsets_lexicographic():
    assert m_subsets(4, 2).tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]
    assert len(m_subsets(40, 2)) == 780


def test_one_hot_at_ones():
    S = m_subsets(9, 3)
    for k in (0, 17, len(S) - 1):
        theta = np.zeros(len(S))
        theta[k] = 1.0
        assert multilinear_eval(theta, np.ones(9), S) == 1.0


def test_multilinear_refuses_large_m():
    with pytest.raises(InputError):
        multilinear_eval(np.ones(3), np.ones(3), m_subsets(3, 2))
    with pytest.raises(InputError):
        PackingConfig(d=8, m=3)


def test_norm_is_theta_norm():
    d, m = 10, 2
    S = m_subsets(d, m)
    theta = sample_thetas(len(S), 1, 2)[0]
    v = multilinear_eval(theta, sample(MeasureSpec(GAUSSIAN, d), 2 * 10**5, 3).X, S) ** 2
    assert abs(v.mean() - theta @ theta) <= 4 * v.std() / math.sqrt(v.size)


def test_gradient_energy():
    d, m = 8, 2
    S = m_subsets(d, m)
    theta = sample_thetas(len(S), 1, 4)[0]
    e = gradient_energy(theta, MeasureSpec(GAUSSIAN, d), S, 10**5, 5)
    assert abs(e.value - m * theta @ theta) <= 4 * e.stderr


def test_fourth_moment_linear_is_three():
    d = 4
    theta = np.array([[0.5, -0.5, 0.5, 0.5]])
    fm = fourth_moment_check(theta, MeasureSpec(GAUSSIAN, d), 10**6, 6)
    assert abs(fm.per_theta[0] - 3) <= 4 * fm.stderr[0]
    zero = fourth_moment_check(np.zeros((1, 4)), MeasureSpec(GAUSSIAN, d), 1000, 6)
    assert zero.per_theta[0] == 0.0


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31))
def test_fourth_moment_matches_cumulant_oracle(seed):
    d = 6
    S = m_subsets(d, 2)
    theta = sample_thetas(len(S), 1, seed)
    fm = fourth_moment_check(theta, MeasureSpec(GAUSSIAN, d), 4 * 10**5, seed)
    assert abs(fm.per_theta[0] - gaussian_quartic_multilinear_m2(theta[0], d)) <= 4 * fm.stderr[0]


def test_fourth_moment_bound_small():
    d, m = 16, 2
    th = sample_thetas(math.comb(d, m), 20, 7)
    fm = fourth_moment_check(th, MeasureSpec(GAUSSIAN, d), 50_000, 7)
    assert fm.average <= fm.bound(d, m) + 4 * fm.average_stderr


def test_truncation_examples():
    const = truncate(lambda X: np.full(X.shape[0], 2.0), 1.0)
    assert np.all(const(np.zeros((5, 3))) == 0.0)
    P = truncate(lambda X: X[:, 0] * 10, 3.0)
    assert np.max(np.abs(P(sample(MeasureSpec(GAUSSIAN, 2), 1000, 0).X))) <= 3.0
    with pytest.raises(InputError):
        truncate(lambda X: X[:, 0], 0.0)
    d = 9
    S = m_subsets(d, 2)
    th = sample_thetas(len(S), 3, 8)
    tc = truncation_distance(th, MeasureSpec(GAUSSIAN, d), S, 1e9, 20_000, 8)
    assert np.all(tc.distance == 0.0) and np.all(tc.tail_prob == 0.0)
    small = truncation_distance(th, MeasureSpec(GAUSSIAN, d), S, 1.0, 20_000, 8)
    # Cauchy-Schwarz: |P 1{|P|>lam}|_2 <= (E P^4)^{1/4} P(|P| > lam)^{1/4}
    assert np.all(small.distance <= small.cs_bound + 4 * small.stderr)


def test_l2_decay_exact():
    # |T_t P|^2 = e^{-2tm} |theta|^2 >= (1 - 2tm) |theta|^2 for multilinear P of degree m
    mu = MeasureSpec(GAUSSIAN, 5)
    idx = enumerate_indices(5, 2)
    rng = np.random.default_rng(0)
    for m in (1, 2):
        mask = idx.degrees == m
        mask &= np.array([max(a) <= 1 for a in idx.as_tuples()])
        c = np.where(mask, rng.standard_normal(len(idx)), 0.0)
        p = PolyInBasis(idx, c, mu)
        for t in np.linspace(0, 1 / (2 * m), 7):
            sm = ou_apply(p, t).norm() ** 2
            assert sm == pytest.approx(math.exp(-2 * t * m) * p.norm() ** 2, rel=1e-12)
            assert sm >= (1 - 2 * t * m) * p.norm() ** 2 - 1e-12


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_lipschitz_smoothing_law(t):
    # |T_t f|_Lip <= |f|_inf / sqrt(t) for bounded f
    d = 3
    S = m_subsets(d, 1)
    sign = lambda X: np.sign(X[:, :1])
    trunc = lambda X: np.clip(multilinear_features(X, S) @ np.ones((3, 1)), -1.0, 1.0)
    f = lambda X: np.hstack([sign(X), trunc(X)])
    q, se = lipschitz_quotients(f, t, d, 10**4, 64, 0.25, 9)
    assert np.all(q <= 1 / math.sqrt(t) + 4 * se)


def test_packing_degenerate_and_unsmoothed():
    one = build_packing(PackingConfig(d=9, m=2, N=1, n_outer=64, n_inner=16, n_pairs=4, n_inner_lipschitz=16,
                                      n_mc_moments=2000))
    assert one.flags["degenerate"] and not one.certified
    assert one.flags["theta_separated"] and one.flags["smoothed_separated"]
    raw = build_packing(PackingConfig(d=9, m=2, N=3, t=0.0, n_outer=256, n_mc_moments=2000))
    assert raw.flags["lipschitz_skipped"] and not raw.flags["lipschitz_ok"]
    assert math.isinf(raw.lipschitz_bound)
    with pytest.raises(UnsupportedOperationError):
        PackingConfig(d=9, m=2, measure_kind=LAPLACE)


def test_packing_small_certifies():
    cfg = PackingConfig(d=16, m=2, N=6, n_outer=1000, n_inner=128, n_pairs=100, n_inner_lipschitz=256,
                        n_mc_moments=10_000, seed=3)
    res = build_packing(cfg)
    assert res.t == 1 / 64 and res.lipschitz_bound == pytest.approx(4 * math.sqrt(2) * res.lam * math.sqrt(2))
    assert res.lipschitz_bound == res.lam / math.sqrt(res.t)
    assert res.lam == 16 * math.sqrt(2) * math.sqrt(res.C0_hat)
    assert res.smoothed_stderr.shape == (6, 6) and np.all(res.smoothed_stderr[np.triu_indices(6, 1)] > 0)
    assert res.certified, res.flags
    assert res.pairs_csv().count("\n") == 1 + 15
    back = PackingConfig.from_dict(cfg.to_dict())
    assert back == cfg


def test_packing_deterministic_across_workers():
    kw = dict(d=9, m=2, N=4, n_outer=200, n_inner=32, n_pairs=10, n_inner_lipschitz=32, n_mc_moments=2000)
    a = build_packing(PackingConfig(workers=1, **kw))
    b = build_packing(PackingConfig(workers=3, **kw))
    assert a.pairs_csv() == b.pairs_csv()
    assert a.to_json() == b.to_json()


def test_kl_examples():
    mu = MeasureSpec(GAUSSIAN, 2)
    p = PolyInBasis.basis_element((1, 0), mu)
    q = PolyInBasis.basis_element((0, 2), mu)
    assert kl_observations(p, p, 10, 1.0, mu, 1000, 0).value == 0.0
    kl = kl_observations(p, q, 10, 1.0, mu, 10**5, 1)
    assert abs(kl.value - 10) <= 4 * kl.stderr
    kl2 = kl_observations(p, q, 20, 1.0, mu, 10**5, 1)
    assert kl2.value == 2 * kl.value
    kl3 = kl_observations(p, q, 10, 0.5, mu, 10**5, 1)
    assert kl3.value == 4 * kl.value
    with pytest.raises(InputError):
        kl_observations(p, q, 10, 0.0, mu, 100, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 1000), st.floats(0.1, 10))
def test_kl_monotone(n, sigma):
    mu = MeasureSpec(GAUSSIAN, 1)
    p = PolyInBasis.basis_element((1,), mu)
    zero = lambda X: np.zeros(X.shape[0])
    a = kl_observations(p, zero, n, sigma, mu, 2000, 0).value
    assert kl_observations(p, zero, n + 1, sigma, mu, 2000, 0).value > a
    assert kl_observations(p, zero, n, sigma * 1.1, mu, 2000, 0).value < a


def test_minimax_examples():
    b = minimax_lower_bound(100, 100, 1.0)
    assert b.delta2 == pytest.approx(1.0) and b.applicable
    b4 = minimax_lower_bound(100.0**4, 100, 1.0)
    assert b4.delta2 == pytest.approx(0.25)
    d = 10**4
    # the edge exp(d^{1/2} log d) is exactly 10^400; exact integers sidestep float overflow
    assert minimax_lower_bound(10**399, d, 1.0).n_in_range
    assert not minimax_lower_bound(10**401, d, 1.0).n_in_range
    assert not minimax_lower_bound(100, 100, 20.0).applicable  # sigma^2 > n
    assert minimax_lower_bound(100, 100, 0.5, kappa=1.0).applicable
    assert minimax_lower_bound(100, 100, 1.0, kappa=1.0).delta2 == pytest.approx(0.5)
    with pytest.raises(InputError):
        minimax_lower_bound(1, 10, 1.0)
