import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from lipreg.errors import CapacityError, InputError
from lipreg.estimators import (
    LS_REGIME_1,
    OUT_OF_RANGE,
    PROJ_REGIME_1,
    PROJ_REGIME_2,
    floor_log_ratio,
    ls_estimate,
    monomial_matrix,
    predicted_footprint,
    projection_estimate,
    select_degree_ls,
    select_degree_projection,
)
from lipreg.measures import GAUSSIAN, KINDS, UNIFORM, MeasureSpec
from lipreg.polybasis import PolyInBasis, enumerate_indices
from lipreg.simulate import euclidean_norm_target, make_dataset, polynomial_target


def test_projection_rule_examples():
    s = select_degree_projection(10**10, 100)
    assert (s.m0, s.regime, s.m) == (5, PROJ_REGIME_1, 1)
    s = select_degree_projection(1024, 4)
    assert (s.m0, s.m) == (5, 1)
    s = select_degree_projection(3, 5)
    assert (s.m0, s.m, s.regime, s.clamped) == (0, 0, OUT_OF_RANGE, True)


def test_projection_second_regime():
    # d = 100: regime 2 spans log n in [46.05, 230.3]
    s = select_degree_projection(10**30, 100)
    assert s.regime == PROJ_REGIME_2 and s.m0 == 15
    assert s.params["p"] == math.ceil(4 * math.log(15) / math.log(100 / 15))
    assert s.m == 15 - s.params["p"]


@pytest.mark.parametrize("d", [2, 3, 10, 100, 1000])
def test_ls_rule_at_d5(d):
    s = select_degree_ls(d**5, d)
    assert (s.m0, s.m) == (5, 1)


def test_ls_rule_large_d_and_regimes():
    s = select_degree_ls(10**10, 10**4)
    assert s.params["alpha"] == pytest.approx(math.log(math.log(1e10)) / math.log(1e4))
    assert s.m == 0 and s.clamped
    assert select_degree_ls(3**5, 3).regime == LS_REGIME_1
    with pytest.raises(InputError):
        select_degree_ls(100, 10, c0=0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**40), st.integers(2, 10**4))
def test_floor_log_ratio_matches_counting(n, d):
    assert floor_log_ratio(n, d) == oracles.m0_by_counting(n, d)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10**30), st.integers(2, 500))
def test_degree_rules_match_oracle(n, d):
    s = select_degree_projection(n, d)
    assert (s.regime, s.m) == oracles.projection_rule(n, d)
    s = select_degree_ls(n, d)
    assert (s.regime, s.m) == oracles.ls_rule(n, d)
    assert 0 <= s.m <= max(s.m0, 0)


def _poly_target(kind, d, m, seed=0):
    mu = MeasureSpec(kind, d)
    idx = enumerate_indices(d, m)
    c = np.random.default_rng(seed).standard_normal(len(idx))
    return mu, PolyInBasis(idx, c, mu)


@pytest.mark.parametrize("basis", ["orthonormal", "monomial"])
def test_ls_exact_recovery(kind, basis):
    mu, p = _poly_target(kind, 2, 2)
    ds = make_dataset(mu, polynomial_target(p), 100, 0.0, 1)
    est = ls_estimate(ds, 2, basis=basis).estimate
    assert np.max(np.abs(est.coeffs - p.coeffs)) < 1e-8


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(KINDS), st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**31))
def test_ls_recovers_any_in_span_polynomial(kind, d, m, seed):
    mu, p = _poly_target(kind, d, m, seed)
    n = 3 * len(p.coeffs) + 20
    ds = make_dataset(mu, polynomial_target(p), n, 0.0, seed)
    rep = ls_estimate(ds, m)
    assert np.allclose(rep.estimate.coeffs, p.coeffs, atol=1e-8)
    diag = rep.diagnostics
    assert 1 - diag["opnorm_deviation"] <= diag["lambda_min"] + 1e-12
    assert rep.estimate.degree <= m


def test_ls_underdetermined_min_norm():
    mu, p = _poly_target(GAUSSIAN, 2, 3)
    ds = make_dataset(mu, polynomial_target(p), 6, 0.0, 2)
    rep = ls_estimate(ds, 3)
    assert rep.diagnostics["underdetermined"] and rep.diagnostics["rank"] == 6
    # interpolates the data
    assert np.allclose(rep.estimate(ds.X.X), ds.Y)


def test_monomial_matrix():
    idx = enumerate_indices(2, 2)
    M = monomial_matrix(np.array([[2.0, 3.0]]), idx)
    assert M.tolist() == [[1, 2, 3, 4, 6, 9]]


def test_projection_estimate_unbiased_coefficient():
    mu = MeasureSpec(GAUSSIAN, 2)
    p = PolyInBasis.basis_element((1, 1), mu, m=2)
    ds = make_dataset(mu, polynomial_target(p), 10**5, 0.0, 3)
    est = projection_estimate(ds, 2).estimate
    k = p.index_set.position((1, 1))
    assert abs(est.coeffs[k] - 1) <= 4 * est.stderr[k]


def test_projection_constant_is_sample_mean():
    mu = MeasureSpec(UNIFORM, 3)
    ds = make_dataset(mu, euclidean_norm_target(), 1000, 0.2, 4)
    rep = projection_estimate(ds, 2)
    assert rep.ahat == rep.estimate.coeffs[0] == pytest.approx(ds.Y.mean())
    naive = projection_estimate(ds, 2, naive=True)
    assert naive.method == "projection-naive"
    assert not np.allclose(naive.estimate.coeffs[1:], rep.estimate.coeffs[1:])


def test_memory_cap():
    mu = MeasureSpec(GAUSSIAN, 3)
    ds = make_dataset(mu, euclidean_norm_target(), 1000, 0.1, 0)
    with pytest.raises(CapacityError):
        ls_estimate(ds, 4, memory_cap=1000)
    D, nbytes = predicted_footprint(10**10, 100, 1)
    assert D == 101 and nbytes == 8 * 10**10 * 101
