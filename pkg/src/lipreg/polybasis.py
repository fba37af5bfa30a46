"""Total-degree multi-indices, tensorized orthonormal bases and the Ornstein-Uhlenbeck semigroup."""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre

from . import rng
from .errors import CapacityError, InputError, UnsupportedOperationError
from .measures import MeasureSpec, coordinate_recurrence, draw_block

DEFAULT_SIZE_CAP = 10**7
CHUNK_ROWS = rng.BLOCK_ROWS


def basis_size(d, m):
    return math.comb(d + m, m)


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """All alpha in N^d with |alpha| <= m, in graded order.

    Within a degree the order is lexicographic on the sorted variable word, so
    for d = 2: 1, x1, x2, x1^2, x1 x2, x2^2.  Position 0 is the constant.
    """

    d: int
    m: int
    indices: np.ndarray

    def __post_init__(self):
        self.indices.setflags(write=False)

    def __len__(self):
        return self.indices.shape[0]

    @cached_property
    def degrees(self):
        return self.indices.sum(axis=1)

    @cached_property
    def positions(self):
        return {tuple(int(v) for v in a): i for i, a in enumerate(self.indices)}

    def position(self, alpha):
        return self.positions[tuple(alpha)]

    def truncated(self, m):
        """The leading block of degree <= m (a prefix, thanks to graded order)."""
        if m > self.m:
            raise InputError("cannot truncate to a larger degree")
        return MultiIndexSet(self.d, m, self.indices[: basis_size(self.d, m)].copy())

    def as_tuples(self):
        return [tuple(int(v) for v in a) for a in self.indices]


def enumerate_indices(d: int, m: int, size_cap: int = DEFAULT_SIZE_CAP) -> MultiIndexSet:
    if d < 1 or m < 0:
        raise InputError("need d >= 1 and m >= 0")
    size = basis_size(d, m)
    if size > size_cap:
        raise CapacityError(f"C(d+m, m) = {size} exceeds the size cap {size_cap}")
    out = np.zeros((size, d), dtype=np.int64)
    row = 0
    for k in range(m + 1):
        for word in itertools.combinations_with_replacement(range(d), k):
            for j in word:
                out[row, j] += 1
            row += 1
    return MultiIndexSet(d, m, out)


def coordinate_values(X, measure, m):
    """Array ``V[i, j, k] = p_k(X[i, j])`` for the per-coordinate orthonormal basis."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite input coordinate")
    return coordinate_recurrence(measure, m).evaluate(X, m)


def design_matrix(X, idx: MultiIndexSet, measure: MeasureSpec) -> np.ndarray:
    """``A[i, k] = p_{alpha_k}(X_i)`` with p_alpha the product of 1-d orthonormal polynomials."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != idx.d:
        raise InputError(f"points have {X.shape[1]} coordinates, index set has {idx.d}")
    V = coordinate_values(X, measure, idx.m)
    A = np.ones((X.shape[0], len(idx)))
    for j in range(idx.d):
        col = idx.indices[:, j]
        active = np.nonzero(col)[0]
        if active.size:
            A[:, active] *= V[:, j, col[active]]
    return A


def eval_basis(x, idx: MultiIndexSet, measure: MeasureSpec) -> np.ndarray:
    """Basis values at one point (1-d input) or at each row of a 2-d input."""
    x = np.asarray(x, dtype=float)
    A = design_matrix(x.reshape(-1, idx.d), idx, measure)
    return A[0] if x.ndim == 1 else A


@dataclass(frozen=True, eq=False)
class PolyInBasis:
    """Polynomial ``sum_k coeffs[k] p_{alpha_k}`` in the orthonormal basis of ``measure``.

    ``stderr`` is set when the coefficients are sample averages (Monte Carlo or empirical).
    """

    index_set: MultiIndexSet
    coeffs: np.ndarray
    measure: MeasureSpec
    stderr: np.ndarray | None = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (len(self.index_set),):
            raise InputError("coefficient vector does not match the index set")
        object.__setattr__(self, "coeffs", coeffs)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(eval_basis(X, self.index_set, self.measure) @ self.coeffs)
        out = np.empty(X.shape[0])
        for _, lo, hi in rng.blocks(X.shape[0], CHUNK_ROWS):
            out[lo:hi] = design_matrix(X[lo:hi], self.index_set, self.measure) @ self.coeffs
        return out

    @property
    def degree(self):
        nz = np.nonzero(self.coeffs)[0]
        return int(self.index_set.degrees[nz].max()) if nz.size else 0

    def norm(self):
        """L2(mu) norm, exact by Parseval."""
        return float(np.linalg.norm(self.coeffs))

    def with_coeffs(self, coeffs):
        return PolyInBasis(self.index_set, coeffs, self.measure)

    def truncated(self, m):
        idx = self.index_set.truncated(m)
        se = None if self.stderr is None else self.stderr[: len(idx)]
        return PolyInBasis(idx, self.coeffs[: len(idx)], self.measure, se)

    def to_dict(self):
        return {
            "measure": self.measure.to_dict(),
            "d": self.index_set.d,
            "m": self.index_set.m,
            "ordering": "graded-lex",
            "coeffs": self.coeffs.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        if data.get("ordering", "graded-lex") != "graded-lex":
            raise InputError(f"unknown coefficient ordering {data['ordering']!r}")
        measure = MeasureSpec.from_dict(data["measure"])
        return cls(enumerate_indices(int(data["d"]), int(data["m"])), np.array(data["coeffs"], float), measure)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def basis_element(cls, alpha, measure, m=None):
        alpha = tuple(int(a) for a in alpha)
        idx = enumerate_indices(len(alpha), sum(alpha) if m is None else m)
        c = np.zeros(len(idx))
        c[idx.position(alpha)] = 1.0
        return cls(idx, c, measure)


def basis_csv(path, X, idx, measure):
    """Debug dump of basis evaluations, one row per point."""
    A = design_matrix(X, idx, measure)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha=" + "-".join(map(str, a)) for a in idx.as_tuples()])
        w.writerows(A.tolist())


@dataclass(frozen=True)
class ProjectionMoments:
    """Raw Monte Carlo sums behind a projection; enough for delta-method errors."""

    n: int
    mean_f2: float
    coeffs: np.ndarray
    # covariance of the per-sample vector (f^2, f p_0, ..., f p_{D-1})
    cov: np.ndarray


def projection_moments(f, measure, idx, n_mc, seed, purpose="project") -> ProjectionMoments:
    """Stream ``n_mc`` draws in blocks and accumulate first and second moments of (f^2, f p)."""
    D = len(idx)
    s1 = np.zeros(D + 1)
    s2 = np.zeros((D + 1, D + 1))
    for b, lo, hi in rng.blocks(n_mc, CHUNK_ROWS):
        X = draw_block(measure, hi - lo, seed, purpose, b)
        fx = np.asarray(f(X), dtype=float)
        W = np.empty((hi - lo, D + 1))
        W[:, 0] = fx * fx
        W[:, 1:] = design_matrix(X, idx, measure) * fx[:, None]
        s1 += W.sum(axis=0)
        s2 += W.T @ W
    mean = s1 / n_mc
    cov = (s2 - n_mc * np.outer(mean, mean)) / (n_mc - 1)
    return ProjectionMoments(n_mc, float(mean[0]), mean[1:], cov)


def project_mc(f, measure: MeasureSpec, m: int, n_mc: int, seed: int) -> PolyInBasis:
    """Monte Carlo estimate of <f, p_alpha> for all |alpha| <= m, with standard errors."""
    if n_mc < 1000:
        raise InputError("project_mc needs n_mc >= 1000")
    idx = enumerate_indices(measure.dimension, m)
    mom = projection_moments(f, measure, idx, n_mc, seed)
    se = np.sqrt(np.clip(np.diag(mom.cov)[1:], 0, None) / n_mc)
    return PolyInBasis(idx, mom.coeffs, measure, se)


def _require_gaussian(measure, what):
    if not measure.is_gaussian:
        raise UnsupportedOperationError(f"{what} is only implemented for the standard Gaussian measure")


def ou_apply(p: PolyInBasis, t: float) -> PolyInBasis:
    """Ornstein-Uhlenbeck semigroup on Hermite coefficients: c_alpha -> e^{-t|alpha|} c_alpha."""
    _require_gaussian(p.measure, "ou_apply")
    if t < 0:
        raise InputError("t must be non-negative")
    return p.with_coeffs(p.coeffs * np.exp(-t * p.index_set.degrees))


@dataclass(frozen=True)
class MCValue:
    value: float | np.ndarray
    stderr: float | np.ndarray
    n: int


def mehler_points(x, t, g):
    """e^{-t} x + sqrt(1 - e^{-2t}) g, broadcasting points against Gaussian draws."""
    delta = math.exp(-t)
    return delta * x + math.sqrt(-math.expm1(-2 * t)) * g


def ou_smooth_eval(f, t: float, x, n_mc: int, seed: int, bound: float | None = None) -> MCValue:
    """Mehler-formula Monte Carlo of T_t f at ``x`` (a point or rows of points).

    All points share the same Gaussian draws.  ``bound`` is the caller's
    sup-norm bound on f; when given, the reported standard error is capped by
    bound / sqrt(n_mc).
    """
    if t <= 0:
        raise InputError("smoothing time must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x.reshape(-1, x.shape[-1])
    d = pts.shape[1]
    g = rng.stream(seed, "mehler").standard_normal((n_mc, d))
    vals = np.empty((pts.shape[0], n_mc))
    for i, p in enumerate(pts):
        vals[i] = f(mehler_points(p, t, g))
    mean = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / math.sqrt(n_mc) if n_mc > 1 else np.zeros_like(mean)
    if bound is not None:
        se = np.minimum(se, bound / math.sqrt(n_mc))
    if single:
        return MCValue(float(mean[0]), float(se[0]), n_mc)
    return MCValue(mean, se, n_mc)


def legendre_derivative_identity_check(n: int, m: int) -> float:
    """Integral of P_n' P_m' (1 - x^2) over [-1, 1] for unnormalized Legendre P_k."""
    if n > 40 or m > 40 or n < 0 or m < 0:
        raise InputError("degrees must lie in 0..40")
    x, w = legendre.leggauss(max(n + m, 2) // 2 + 2)
    dn = legendre.Legendre.basis(n).deriv()(x)
    dm = legendre.Legendre.basis(m).deriv()(x)
    return float(np.sum(w * dn * dm * (1 - x * x)))
