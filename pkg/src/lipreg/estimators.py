"""Projection and least-squares polynomial estimators, with their degree rules."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import CapacityError, InputError
from .polybasis import PolyInBasis, basis_size, design_matrix, enumerate_indices
from .simulate import Dataset

PROJ_REGIME_1 = "proj-regime-1"
PROJ_REGIME_2 = "proj-regime-2"
LS_REGIME_1 = "ls-regime-1"
LS_REGIME_2 = "ls-regime-2"
OUT_OF_RANGE = "out-of-range"

DEFAULT_MEMORY_CAP = 2 * 1024**3
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DegreeSelection:
    m0: int
    regime: str
    m: int
    clamped: bool = False
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"m0": self.m0, "regime": self.regime, "m": self.m, "clamped": self.clamped, "params": dict(self.params)}


def floor_log_ratio(n: int, d: int) -> int:
    """floor(log n / log d) computed with integer powers, so exact powers of d are not misrounded."""
    if n < 1 or d < 2:
        raise InputError("need n >= 1 and d >= 2")
    n = int(n)
    k = max(int(math.log(n) / math.log(d)) - 1, 0)
    while d ** (k + 1) <= n:
        k += 1
    while k > 0 and d**k > n:
        k -= 1
    return k


def _clamp(m):
    return (m, False) if m >= 0 else (0, True)


def select_degree_projection(n: int, d: int, offset: int = 4) -> DegreeSelection:
    """Degree rule for the projection estimator.

    Regime 1 (d^5 <= n <= e^{sqrt(d) log d}) takes m = m0 - offset; regime 2
    (up to e^{d log d / 2}) takes m = m0 - ceil(4 log m0 / log(d / m0)).
    ``offset`` is 4 by default; 12 is the sharper-error variant.
    """
    if n < 2 or d < 2:
        raise InputError("need n, d >= 2")
    m0 = floor_log_ratio(n, d)
    logn, logd = math.log(n), math.log(d)
    if n >= d**5 and logn <= math.sqrt(d) * logd:
        m, clamped = _clamp(m0 - offset)
        return DegreeSelection(m0, PROJ_REGIME_1, m, clamped, {"p": offset})
    if math.sqrt(d) * logd <= logn <= d * logd / 2 and m0 >= 1:
        p = math.ceil(4 * math.log(m0) / math.log(d / m0))
        m, clamped = _clamp(m0 - p)
        return DegreeSelection(m0, PROJ_REGIME_2, m, clamped, {"p": p})
    m, clamped = _clamp(m0 - offset)
    return DegreeSelection(m0, OUT_OF_RANGE, m, clamped, {"p": offset})


def select_degree_ls(n: int, d: int, c0: float = 1.0, C0: float = 1.0) -> DegreeSelection:
    """Degree rule for the least-squares estimator.

    Regime 1: d^5 <= n <= exp(c0 log^2 d / log log d), m = m0 - 4.  Regime 2:
    n >= exp(c0 log^2 d / log log d) with a = log(C0 log n) / log d < 1/2,
    m = m0 - 4 - floor(2 a m0).  Anything else is out of range with m = m0 - 4.
    """
    if n < 2 or d < 2:
        raise InputError("need n, d >= 2")
    if c0 <= 0 or C0 <= 0:
        raise InputError("c0 and C0 must be positive")
    m0 = floor_log_ratio(n, d)
    logn, logd = math.log(n), math.log(d)
    loglogd = math.log(logd)
    # exp(c0 log^2 d / log log d) is below 1 when log log d < 0, so regime 1 is empty there
    log_b1 = c0 * logd**2 / loglogd
    alpha = math.log(C0 * logn) / logd if C0 * logn > 0 else math.inf
    params = {"alpha": alpha, "log_regime1_upper": log_b1, "c0": c0, "C0": C0}
    if n >= d**5 and logn <= log_b1:
        m, clamped = _clamp(m0 - 4)
        return DegreeSelection(m0, LS_REGIME_1, m, clamped, params)
    if logn >= log_b1 and alpha < 0.5:
        m, clamped = _clamp(m0 - 4 - math.floor(2 * alpha * m0))
        return DegreeSelection(m0, LS_REGIME_2, m, clamped, params)
    m, clamped = _clamp(m0 - 4)
    return DegreeSelection(m0, OUT_OF_RANGE, m, clamped, params)


@dataclass(frozen=True, eq=False)
class EstimatorReport:
    estimate: PolyInBasis
    ahat: float
    method: str
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "ahat": self.ahat,
            "estimate": self.estimate.to_dict(),
            "diagnostics": self.diagnostics,
            "timings": self.timings,
        }


def _check_memory(n, D, cap):
    if 8 * n * D > cap:
        raise CapacityError(f"design matrix of {n} x {D} doubles exceeds the memory cap of {cap} bytes")


def projection_estimate(data: Dataset, m: int, naive: bool = False, memory_cap=DEFAULT_MEMORY_CAP) -> EstimatorReport:
    """Empirical coefficients in the measure's orthonormal basis.

    The constant coefficient is the sample mean of Y; the others average
    (Y_i - mean Y) p_alpha(X_i).  With ``naive`` the responses are not centered.
    """
    t0 = time.perf_counter()
    measure = data.measure
    idx = enumerate_indices(measure.dimension, m)
    _check_memory(data.n, len(idx), memory_cap)
    A = design_matrix(data.X.X, idx, measure)
    Y = np.asarray(data.Y)
    ahat = float(Y.mean())
    resp = Y if naive else Y - ahat
    W = A * resp[:, None]
    coeffs = W.mean(axis=0)
    se = W.std(axis=0, ddof=1) / math.sqrt(data.n) if data.n > 1 else np.zeros(len(idx))
    coeffs[0] = ahat
    se[0] = Y.std(ddof=1) / math.sqrt(data.n) if data.n > 1 else 0.0
    elapsed = time.perf_counter() - t0
    return EstimatorReport(
        PolyInBasis(idx, coeffs, measure, se),
        ahat,
        "projection-naive" if naive else "projection",
        {"n": data.n, "D": len(idx), "m": m},
        {"total_s": elapsed},
    )


def monomial_matrix(X, idx):
    """Raw monomials x^alpha for each alpha in ``idx``."""
    X = np.atleast_2d(X)
    P = np.ones((X.shape[0], len(idx)))
    for j in range(idx.d):
        col = idx.indices[:, j]
        active = np.nonzero(col)[0]
        if active.size:
            P[:, active] *= X[:, j : j + 1] ** col[active]
    return P


def _solve(A, b):
    """Least squares via QR, falling back to a minimum-norm SVD solve when rank deficient."""
    n, D = A.shape
    if n >= D:
        Q, R = linalg.qr(A, mode="economic")
        s = linalg.svdvals(R)
    else:
        s = linalg.svdvals(A)
    rank = int(np.sum(s > s[0] * RANK_RTOL)) if s.size and s[0] > 0 else 0
    if n >= D and rank == D:
        return linalg.solve_triangular(R, Q.T @ b), s, rank
    x, *_ = np.linalg.lstsq(A, b, rcond=RANK_RTOL)
    return x, s, rank


def ls_estimate(data: Dataset, m: int, basis: str = "orthonormal", memory_cap=DEFAULT_MEMORY_CAP) -> EstimatorReport:
    """Minimizer of sum_i (P(X_i) - Y_i)^2 over polynomials of total degree <= m.

    The returned polynomial is always expressed in the orthonormal basis of the
    measure.  ``basis="monomial"`` solves in raw monomials and converts, which
    changes nothing but the numerics.
    """
    t0 = time.perf_counter()
    measure = data.measure
    idx = enumerate_indices(measure.dimension, m)
    D = len(idx)
    _check_memory(data.n, D, memory_cap)
    A = design_matrix(data.X.X, idx, measure)
    Y = np.asarray(data.Y, dtype=float)
    if basis == "orthonormal":
        coeffs, s, rank = _solve(A, Y)
    elif basis == "monomial":
        M = monomial_matrix(data.X.X, idx)
        beta, _, _ = _solve(M, Y)
        coeffs, s, rank = _solve(A, M @ beta)
    else:
        raise InputError(f"unknown basis {basis!r}")
    t1 = time.perf_counter()
    n = data.n
    ev = s**2 / n  # eigenvalues of C_n = A^T A / n
    lam_min = float(ev[-1]) if (ev.size == D and n >= D) else 0.0
    lam_max = float(ev[0]) if ev.size else 0.0
    diagnostics = {
        "n": n,
        "D": D,
        "m": m,
        "lambda_min": lam_min,
        "opnorm_deviation": float(max(abs(lam_max - 1.0), abs(lam_min - 1.0))),
        "condition_number": lam_max / lam_min if lam_min > 0 else math.inf,
        "rank": rank,
        "rank_deficient": rank < D,
        "underdetermined": D > n,
    }
    ahat = float(Y.mean())
    return EstimatorReport(PolyInBasis(idx, coeffs, measure), ahat, "least-squares", diagnostics, {"total_s": t1 - t0})


def predicted_footprint(n, d, m):
    """(D, bytes of the n x D design matrix) without enumerating anything."""
    D = basis_size(d, m)
    return D, 8 * n * D
