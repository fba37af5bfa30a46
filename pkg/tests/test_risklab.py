import math

import numpy as np
import pytest

from lipreg.measures import EXPONENTIAL, GAUSSIAN, KINDS, MeasureSpec
from lipreg.polybasis import PolyInBasis, enumerate_indices
from lipreg.risklab import (
    RISK_COLUMNS,
    SweepConfig,
    approx_curve,
    approx_oracle,
    SweepRow,
    estimation_error,
    fit_projection_constant,
    l2_risk,
    loglog_slope,
    risk_sweep,
    rows_to_csv,
)
from lipreg.simulate import (
    BUILTIN_LIPSCHITZ_TARGETS,
    abs_coordinate_target,
    euclidean_norm_target,
    polynomial_target,
    target_centered,
)

G2 = MeasureSpec(GAUSSIAN, 2)


def test_l2_risk_examples():
    p = PolyInBasis.basis_element((1, 1), G2, m=2)
    t = polynomial_target(p)
    exact = l2_risk(p, t, G2, 10**4, 1)
    assert exact.point == 0.0 and exact.stderr == 0.0
    zero = l2_risk(p.with_coeffs(np.zeros(6)), t, G2, 10**5, 1)
    assert abs(zero.point - 1) <= 4 * zero.stderr
    half = l2_risk(p.with_coeffs(0.5 * p.coeffs), t, G2, 10**5, 1)
    assert abs(half.point - 0.25) <= 4 * half.stderr
    with pytest.raises(ValueError):
        l2_risk(p, t, G2, 999, 1)


def test_approx_oracle_abs_value():
    est = approx_oracle(abs_coordinate_target(), MeasureSpec(GAUSSIAN, 1), 1, 10**6, 2)
    assert abs(est.value - (1 - 2 / math.pi)) <= 4 * est.stderr
    assert est.value <= 0.5


def test_approx_oracle_polynomials():
    p = PolyInBasis.basis_element((1, 1), G2, m=2)
    inside = approx_oracle(polynomial_target(p), G2, 2, 10**5, 3)
    assert inside.value <= 4 * inside.stderr + 1e-12
    outside = approx_oracle(polynomial_target(p), G2, 1, 10**5, 3)
    assert abs(outside.value - 1) <= 4 * outside.stderr


def test_approx_curve_is_prefix_consistent_and_monotone():
    t = target_centered(euclidean_norm_target(), G2)
    curve = approx_curve(t, G2, range(0, 5), 2 * 10**5, 4)
    assert curve.degrees == [0, 1, 2, 3, 4]
    assert curve.is_monotone()
    single = approx_oracle(t, G2, 2, 2 * 10**5, 4)
    assert single.value == pytest.approx(curve.at(2).value, rel=1e-12)


@pytest.mark.parametrize("name", ["abs-coordinate", "euclidean-norm-centered", "max-coordinate"])
def test_gaussian_rate_small(name):
    mu = MeasureSpec(GAUSSIAN, 2)
    t = target_centered(BUILTIN_LIPSCHITZ_TARGETS[name](), mu, 10**5)
    curve = approx_curve(t, mu, range(7), 2 * 10**5, 5)
    for e in curve.estimates:
        assert e.value <= 1 / (e.m + 1) + 4 * e.stderr


def _normalization_cases():
    for name in sorted(BUILTIN_LIPSCHITZ_TARGETS):
        for kind in KINDS:
            if (name, kind) == ("max-coordinate", EXPONENTIAL):
                yield pytest.param(name, kind, marks=pytest.mark.xfail(
                    strict=True, reason="max of three Exp(1) coordinates has variance 49/36 > 1"))
            else:
                yield name, kind


@pytest.mark.parametrize("name,kind", list(_normalization_cases()))
def test_variance_normalization(name, kind):
    # Var f <= 1 for 1-Lipschitz f, the normalization Psi(0) = 1
    mu = MeasureSpec(kind, 3)
    e0 = approx_oracle(BUILTIN_LIPSCHITZ_TARGETS[name](), mu, 0, 10**5, 6)
    assert e0.value <= 1 + 4 * e0.stderr


def test_normalization_counterexample_exact():
    # max of d i.i.d. Exp(1) has variance sum_{k<=d} 1/k^2; shifting does not change it
    mu = MeasureSpec(EXPONENTIAL, 3)
    e0 = approx_oracle(BUILTIN_LIPSCHITZ_TARGETS["max-coordinate"](), mu, 0, 10**6, 7)
    assert abs(e0.value - 49 / 36) <= 4 * e0.stderr


def test_estimation_error_is_parseval():
    idx = enumerate_indices(2, 2)
    ref = PolyInBasis(idx, np.arange(6.0), G2, np.zeros(6))
    fhat = PolyInBasis(idx, np.arange(6.0) + 0.5, G2)
    assert estimation_error(fhat, ref) == pytest.approx(6 * 0.25)
    # a lower-degree estimate compares against the prefix only
    assert estimation_error(fhat.truncated(1), ref) == pytest.approx(3 * 0.25)


def _sweep(**kw):
    base = dict(measure=MeasureSpec(GAUSSIAN, 2), target=target_centered(euclidean_norm_target(), G2, 10**5),
                n_grid=(500, 5000), m_grid=(1, 2), sigma_grid=(0.0, 0.5, 1.0), reps=8, seed=1, n_ref=2 * 10**5)
    base.update(kw)
    return SweepConfig(**base)


def test_risk_sweep_table_and_sigma_monotone():
    rows = risk_sweep(_sweep())
    assert len(rows) == 2 * 2 * 2 * 3
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(RISK_COLUMNS)
    assert "\r" not in text
    for est in ("projection", "ls"):
        for n in (500, 5000):
            for m in (1, 2):
                cell = [r for r in rows if (r.estimator, r.n, r.m) == (est, n, m)]
                cell.sort(key=lambda r: r.sigma)
                for a, b in zip(cell, cell[1:]):
                    assert b.risk >= a.risk - 4 * math.hypot(a.est_err_stderr, b.est_err_stderr)
                if est == "projection":
                    # risk(sigma) - risk(0) is linear in sigma^2 with positive slope
                    s2 = np.array([r.sigma**2 for r in cell])
                    excess = np.array([r.risk - cell[0].risk for r in cell])
                    assert np.polyfit(s2, excess, 1)[0] > 0


def test_risk_sweep_deterministic_across_workers():
    a = rows_to_csv(risk_sweep(_sweep(workers=1)))
    b = rows_to_csv(risk_sweep(_sweep(workers=3)))
    assert a == b


def test_risk_tracks_approx_at_large_n():
    mu = MeasureSpec(GAUSSIAN, 2)
    cfg = _sweep(n_grid=(10**6,), m_grid=(0, 1, 2, 3), sigma_grid=(0.0,), reps=2, estimators=("projection",),
                 n_ref=2 * 10**6)
    for r in risk_sweep(cfg):
        assert abs(r.risk - r.approx_err) <= max(4 * r.stderr, 2e-3)


def test_loglog_slope():
    n = np.array([1e3, 1e4, 1e5])
    assert loglog_slope(n, 3 / n) == pytest.approx(-1.0)


def test_constant_fit_recovers_synthetic_constant():
    rows = []
    for n in (1000, 10000):
        for m in (1, 2, 3):
            for sigma in (0.0, 0.5):
                D = math.comb(2 + m, m)
                est = (0.7 * m * m + 4 * sigma**2) * D / n
                rows.append(SweepRow("projection", n, 2, m, sigma, est, 0.0, 0.0, 5, est, 1e-6))
    rows.append(SweepRow("ls", 1000, 2, 1, 0.0, 9.0, 0.0, 0.0, 5, 9.0, 0.0))
    fit = fit_projection_constant(rows)
    assert fit.C == pytest.approx(0.7) and fit.cells == 12 and fit.stderr > 0
    with pytest.raises(ValueError):
        fit_projection_constant(rows[-1:])


def test_constant_fit_on_sweep_is_finite():
    fit = fit_projection_constant(risk_sweep(_sweep(estimators=("projection",), reps=4)))
    assert math.isfinite(fit.C) and fit.stderr >= 0 and fit.cells == 2 * 2 * 3
