"""Independent reference computations used as test oracles."""
import math

import mpmath
import numpy as np


def m0_by_counting(n, d):
    """Largest k with d^k <= n, by repeated multiplication."""
    k, p = 0, d
    while p <= n:
        k += 1
        p *= d
    return k


def _ln(x):
    return mpmath.log(mpmath.mpf(x))


def projection_rule(n, d, offset=4):
    """(regime, m) for the projection degree rule, in 50-digit arithmetic."""
    with mpmath.workdps(50):
        m0 = m0_by_counting(n, d)
        ln_n, ln_d = _ln(n), _ln(d)
        if d**5 <= n and ln_n <= mpmath.sqrt(d) * ln_d:
            return "proj-regime-1", max(m0 - offset, 0)
        if mpmath.sqrt(d) * ln_d <= ln_n <= d * ln_d / 2 and m0 >= 1:
            p = int(mpmath.ceil(4 * _ln(m0) / _ln(mpmath.mpf(d) / m0)))
            return "proj-regime-2", max(m0 - p, 0)
        return "out-of-range", max(m0 - offset, 0)


def ls_rule(n, d, c0=1.0, C0=1.0):
    with mpmath.workdps(50):
        m0 = m0_by_counting(n, d)
        ln_n, ln_d = _ln(n), _ln(d)
        upper = c0 * ln_d**2 / mpmath.log(ln_d)
        a = _ln(C0 * ln_n) / ln_d
        if d**5 <= n and ln_n <= upper:
            return "ls-regime-1", max(m0 - 4, 0)
        if ln_n >= upper and a < mpmath.mpf(1) / 2:
            return "ls-regime-2", max(m0 - 4 - int(mpmath.floor(2 * a * m0)), 0)
        return "out-of-range", max(m0 - 4, 0)


def selection_grid():
    """200 (n, d) pairs covering both regimes of both rules and the out-of-range cases."""
    ds = [2, 3, 5, 10, 20, 50, 100, 300, 1000, 10**4]
    ns = [10**k for k in range(1, 41, 2)]
    return [(n, d) for d in ds for n in ns]


def gaussian_quartic_multilinear_m2(theta, d):
    """E P^4 for P = sum_{i<j} theta_ij x_i x_j under N(0, I), by cumulants.

    P = x^T B x with B symmetric, zero diagonal, B_ij = theta_ij / 2; for a
    Gaussian quadratic form k2 = 2 tr B^2, k4 = 48 tr B^4 and E P^4 = k4 + 3 k2^2.
    """
    B = np.zeros((d, d))
    k = 0
    for i in range(d):
        for j in range(i + 1, d):
            B[i, j] = B[j, i] = theta[k] / 2
            k += 1
    B2 = B @ B
    k2 = 2 * np.trace(B2)
    k4 = 48 * np.trace(B2 @ B2)
    return k4 + 3 * k2 * k2


def ncomb(n, k):
    return math.comb(n, k)
