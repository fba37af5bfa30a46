"""Monte Carlo L2(mu) risk, empirical approximation rates and risk sweeps."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .estimators import ls_estimate, projection_estimate
from .measures import MeasureSpec, draw_block
from .polybasis import PolyInBasis, enumerate_indices, projection_moments
from .simulate import TargetFunction, make_dataset, target_eval

RISK_COLUMNS = ("estimator", "n", "d", "m", "sigma", "risk", "stderr", "approx_err", "reps")
BAND = 4.0


@dataclass(frozen=True)
class RiskEstimate:
    point: float
    stderr: float
    n_eval: int
    replications: int = 1


@dataclass(frozen=True)
class ApproxEstimate:
    """Squared L2 distance from the target to polynomials of degree <= m."""

    m: int
    value: float
    stderr: float
    clamped: bool = False


@dataclass(frozen=True)
class ApproxRateCurve:
    measure: MeasureSpec
    target: TargetFunction
    estimates: list = field(default_factory=list)
    reference: PolyInBasis | None = None

    @property
    def degrees(self):
        return [e.m for e in self.estimates]

    def at(self, m):
        for e in self.estimates:
            if e.m == m:
                return e
        raise KeyError(m)

    def is_monotone(self, band=BAND):
        vals = self.estimates
        return all(
            b.value <= a.value + band * math.hypot(a.stderr, b.stderr) for a, b in zip(vals, vals[1:])
        )


def l2_risk(fhat, target, measure: MeasureSpec, n_eval: int, seed: int) -> RiskEstimate:
    """Fresh-sample Monte Carlo of E (f(X) - fhat(X))^2."""
    if n_eval < 1000:
        raise ValueError("l2_risk needs n_eval >= 1000")
    total = 0.0
    total_sq = 0.0
    for b, lo, hi in rng.blocks(n_eval):
        X = draw_block(measure, hi - lo, seed, "risk-eval", b)
        r = (target_eval(target, X) - fhat(X)) ** 2
        total += r.sum()
        total_sq += (r * r).sum()
    mean = total / n_eval
    var = max(total_sq / n_eval - mean * mean, 0.0) * n_eval / (n_eval - 1)
    return RiskEstimate(float(mean), math.sqrt(var / n_eval), n_eval, 1)


def approx_curve(target, measure: MeasureSpec, degrees, n_mc: int, seed: int) -> ApproxRateCurve:
    """Bias-corrected E_m^2 = |f|^2 - sum_{|alpha|<=m} f_alpha^2 for each m in ``degrees``.

    A single Monte Carlo pass at the largest degree serves every smaller one
    (graded order makes lower-degree bases a prefix).  Standard errors come
    from the delta method on the per-sample vector (f^2, f p_alpha).
    """
    degrees = sorted(set(int(m) for m in degrees))
    idx = enumerate_indices(measure.dimension, degrees[-1])
    mom = projection_moments(lambda X: target_eval(target, X), measure, idx, n_mc, seed, purpose="approx")
    var_coef = np.clip(np.diag(mom.cov)[1:], 0, None) / n_mc
    out = []
    for m in degrees:
        k = len(idx.truncated(m))
        c = mom.coeffs[:k]
        raw = mom.mean_f2 - np.sum(c * c - var_coef[:k])
        grad = np.concatenate([[1.0], -2.0 * c])
        cov = mom.cov[: k + 1, : k + 1]
        se = math.sqrt(max(grad @ cov @ grad, 0.0) / n_mc)
        out.append(ApproxEstimate(m, float(max(raw, 0.0)), se, bool(raw < 0)))
    ref = PolyInBasis(idx, mom.coeffs, measure, np.sqrt(var_coef))
    return ApproxRateCurve(measure, target, out, ref)


def approx_oracle(target, measure: MeasureSpec, m: int, n_mc: int, seed: int) -> ApproxEstimate:
    return approx_curve(target, measure, [m], n_mc, seed).at(m)


def estimation_error(fhat: PolyInBasis, reference: PolyInBasis) -> float:
    """|P_m f - fhat|^2 by Parseval, debiased for the reference's Monte Carlo error.

    ``reference`` holds Monte Carlo coefficients of f on an index set that
    contains fhat's; only the common prefix is used.
    """
    k = len(fhat.coeffs)
    ref = reference.coeffs[:k]
    se = reference.stderr[:k] if reference.stderr is not None else np.zeros(k)
    return float(np.sum((fhat.coeffs - ref) ** 2) - np.sum(se**2))


@dataclass(frozen=True)
class SweepConfig:
    measure: MeasureSpec
    target: TargetFunction
    n_grid: tuple
    m_grid: tuple
    sigma_grid: tuple
    reps: int = 20
    seed: int = 0
    estimators: tuple = ("projection", "ls")
    n_ref: int = 10**6
    workers: int = 1


@dataclass(frozen=True)
class SweepRow:
    estimator: str
    n: int
    d: int
    m: int
    sigma: float
    risk: float
    stderr: float
    approx_err: float
    reps: int
    est_err: float = 0.0
    est_err_stderr: float = 0.0

    def as_csv_row(self):
        return [self.estimator, self.n, self.d, self.m, repr(self.sigma), repr(self.risk),
                repr(self.stderr), repr(self.approx_err), self.reps]


_ESTIMATORS = {"projection": projection_estimate, "ls": ls_estimate}


def _one_rep(cfg: SweepConfig, n, rep, ref):
    """Estimation errors for every (estimator, m, sigma) on one replication's data.

    Design and standard noise are shared across m, sigma and estimator (common
    random numbers), keyed by (seed, n, rep).
    """
    seed = rng.child_seed(cfg.seed, "sweep", n, rep)
    out = {}
    for s_i, sigma in enumerate(cfg.sigma_grid):
        data = make_dataset(cfg.measure, cfg.target, n, sigma, seed)
        for m in cfg.m_grid:
            for name in cfg.estimators:
                rep_est = _ESTIMATORS[name](data, m)
                out[(name, m, s_i)] = estimation_error(rep_est.estimate, ref)
    return out


def risk_sweep(cfg: SweepConfig) -> list[SweepRow]:
    """Risk over the (estimator, n, m, sigma) grid.

    Risk is assembled as approx_err(m) + |P_m f - fhat|^2, which is exact by
    orthogonality; both parts use one shared high-accuracy reference
    projection of the target.
    """
    curve = approx_curve(cfg.target, cfg.measure, cfg.m_grid, cfg.n_ref, rng.child_seed(cfg.seed, "reference"))
    ref = curve.reference
    jobs = [(n, r) for n in cfg.n_grid for r in range(cfg.reps)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda job: _one_rep(cfg, job[0], job[1], ref), jobs))
    else:
        results = [_one_rep(cfg, n, r, ref) for n, r in jobs]
    by_job = dict(zip(jobs, results))
    rows = []
    d = cfg.measure.dimension
    for name in cfg.estimators:
        for n in cfg.n_grid:
            for m in cfg.m_grid:
                approx = curve.at(m)
                for s_i, sigma in enumerate(cfg.sigma_grid):
                    errs = np.array([by_job[(n, r)][(name, m, s_i)] for r in range(cfg.reps)])
                    est = float(errs.mean())
                    est_se = float(errs.std(ddof=1) / math.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0
                    risk = max(approx.value + est, 0.0)
                    se = math.hypot(approx.stderr, est_se)
                    rows.append(SweepRow(name, n, d, m, float(sigma), risk, se, approx.value, cfg.reps, est, est_se))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RISK_COLUMNS)
    for r in rows:
        w.writerow(r.as_csv_row())
    return buf.getvalue()


def loglog_slope(x, y):
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class ConstantFit:
    C: float
    stderr: float
    cells: int

    def to_dict(self):
        return {"C": self.C, "stderr": self.stderr, "cells": self.cells}


def fit_projection_constant(rows) -> ConstantFit:
    """Fit C in est_err ~ (C m^2 + 4 sigma^2) D / n over the projection cells with m >= 1.

    Least squares through the origin in m^2; the standard error propagates
    the per-cell estimation-error bands.  The constant is reported, never
    asserted.
    """
    cells = [r for r in rows if r.estimator == "projection" and r.m >= 1]
    if not cells:
        raise ValueError("no projection cells with m >= 1")
    x = np.array([r.m**2 for r in cells], float)
    scale = np.array([r.n / math.comb(r.d + r.m, r.m) for r in cells])
    y = np.array([r.est_err for r in cells]) * scale - 4 * np.array([r.sigma**2 for r in cells])
    s = np.array([r.est_err_stderr for r in cells]) * scale
    sxx = float(np.sum(x * x))
    return ConstantFit(float(np.sum(x * y) / sxx), float(np.sqrt(np.sum((x * s) ** 2)) / sxx), len(cells))
