"""Isotropic log-concave product measures: sampling and 1-d orthonormal recurrences."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import special

from . import rng
from .errors import ConfigurationError, DegradationError, InputError

GAUSSIAN = "standard-gaussian"
LAPLACE = "two-sided-exponential"
EXPONENTIAL = "one-sided-exponential"
UNIFORM = "uniform-cube"
KINDS = (GAUSSIAN, LAPLACE, EXPONENTIAL, UNIFORM)

MAX_MOMENT_DEGREE = 60

# raw variable u -> isotropic x = (u - shift) / scale
_AFFINE = {
    GAUSSIAN: (0.0, 1.0),
    LAPLACE: (0.0, math.sqrt(2.0)),
    EXPONENTIAL: (1.0, 1.0),
    UNIFORM: (0.0, 1.0 / math.sqrt(3.0)),
}

_RAW_SUPPORT = {
    GAUSSIAN: (-math.inf, math.inf),
    LAPLACE: (-math.inf, math.inf),
    EXPONENTIAL: (0.0, math.inf),
    UNIFORM: (-1.0, 1.0),
}


@dataclass(frozen=True)
class MeasureSpec:
    """Product of ``dimension`` copies of a 1-d log-concave law.

    With ``isotropic`` set each coordinate is affinely mapped to mean 0 and
    variance 1; otherwise the raw law is used (standard Gaussian, density
    e^{-|x|}/2, Exp(1), uniform on [-1, 1]).
    """

    kind: str
    dimension: int
    isotropic: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unsupported measure kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ConfigurationError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "dimension", int(self.dimension))

    @property
    def affine(self):
        return _AFFINE[self.kind] if self.isotropic else (0.0, 1.0)

    @property
    def support(self):
        lo, hi = _RAW_SUPPORT[self.kind]
        shift, scale = self.affine
        return ((lo - shift) / scale, (hi - shift) / scale)

    @property
    def is_gaussian(self):
        return self.kind == GAUSSIAN

    def with_dimension(self, d):
        return MeasureSpec(self.kind, d, self.isotropic)

    def to_dict(self):
        return {"kind": self.kind, "dimension": self.dimension, "isotropic": self.isotropic}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["kind"], data["dimension"], bool(data.get("isotropic", True)))
        except KeyError as exc:
            raise ConfigurationError(f"measure description missing field {exc}") from None


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    X: np.ndarray
    measure: MeasureSpec
    seed: int

    def __post_init__(self):
        self.X.setflags(write=False)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(self.d)])
            w.writerows(self.X.tolist())


def _raw_draw(kind, g, rows, d):
    if kind == GAUSSIAN:
        return g.standard_normal((rows, d))
    if kind == LAPLACE:
        return g.laplace(0.0, 1.0, (rows, d))
    if kind == EXPONENTIAL:
        return g.standard_exponential((rows, d))
    return g.uniform(-1.0, 1.0, (rows, d))


def draw_block(measure: MeasureSpec, rows: int, seed: int, purpose: str, block: int) -> np.ndarray:
    """Rows of block ``block`` of the ``(seed, purpose)`` stream."""
    shift, scale = measure.affine
    u = _raw_draw(measure.kind, rng.stream(seed, purpose, block), rows, measure.dimension)
    return (u - shift) / scale if (shift or scale != 1.0) else u


def draw(measure: MeasureSpec, n: int, seed: int, purpose="design") -> np.ndarray:
    """``(n, d)`` array of i.i.d. rows; block-keyed, so any prefix is stable."""
    if n < 0:
        raise InputError("n must be non-negative")
    parts = [draw_block(measure, hi - lo, seed, purpose, b) for b, lo, hi in rng.blocks(n)]
    return np.concatenate(parts) if parts else np.empty((0, measure.dimension))


def sample(measure: MeasureSpec, n: int, seed: int) -> SampleMatrix:
    if n < 1:
        raise InputError("n must be at least 1")
    return SampleMatrix(draw(measure, n, seed), measure, int(seed))


# ---------------------------------------------------------------------------
# three-term recurrences


@dataclass(frozen=True, eq=False)
class Recurrence:
    """Jacobi-matrix coefficients of the orthonormal polynomials of a 1-d law.

    ``x p_k = b[k+1] p_{k+1} + a[k] p_k + b[k] p_{k-1}`` with ``p_0 = 1`` and
    ``b[0] = 0``.
    """

    a: np.ndarray
    b: np.ndarray
    source: str = field(default="closed-form")

    @property
    def max_degree(self):
        return len(self.a) - 1

    def evaluate(self, x, degree=None):
        """Values ``p_0(x), ..., p_degree(x)`` stacked on a new last axis."""
        degree = self.max_degree if degree is None else degree
        if degree > self.max_degree:
            raise InputError(f"recurrence only available to degree {self.max_degree}")
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (degree + 1,))
        out[..., 0] = 1.0
        if degree >= 1:
            out[..., 1] = (x - self.a[0]) / self.b[1]
        for k in range(1, degree):
            out[..., k + 1] = ((x - self.a[k]) * out[..., k] - self.b[k] * out[..., k - 1]) / self.b[k + 1]
        return out

    def gauss_rule(self, k):
        """k-point Gauss rule (Golub-Welsch) of the underlying law."""
        if k > self.max_degree + 1:
            raise InputError("not enough recurrence coefficients for this rule")
        J = np.diag(self.a[:k]) + np.diag(self.b[1:k], 1) + np.diag(self.b[1:k], -1)
        nodes, vecs = np.linalg.eigh(J)
        return nodes, vecs[0] ** 2

    def affine(self, shift, scale):
        """Recurrence for x = (u - shift) / scale, given this one in u."""
        return Recurrence((self.a - shift) / scale, self.b / scale, self.source)


def _raw_moment(kind, k):
    if kind == EXPONENTIAL:
        return mpmath.factorial(k)
    if kind == LAPLACE:
        return mpmath.factorial(k) if k % 2 == 0 else mpmath.mpf(0)
    raise ConfigurationError(f"no moment sequence for {kind}")


def chebyshev_algorithm(moments):
    """Monic recurrence (alpha_k, beta_k), k < len(moments)//2, from power moments.

    Classical modified-moment-free Chebyshev algorithm; ``moments`` should be
    mpmath numbers at a working precision that absorbs its exponential
    conditioning.
    """
    n = len(moments) // 2
    alpha = [moments[1] / moments[0]]
    beta = [moments[0]]
    prev2 = [mpmath.mpf(0)] * (2 * n)
    prev = list(moments[: 2 * n])
    for k in range(1, n):
        cur = [mpmath.mpf(0)] * (2 * n)
        for l in range(k, 2 * n - k):
            cur[l] = prev[l + 1] - alpha[k - 1] * prev[l] - beta[k - 1] * prev2[l]
        alpha.append(cur[k + 1] / cur[k] - prev[k] / prev[k - 1])
        beta.append(cur[k] / prev[k - 1])
        prev2, prev = prev, cur
    return alpha, beta


@lru_cache(maxsize=None)
def _moment_recurrence(kind):
    n = MAX_MOMENT_DEGREE + 1
    with mpmath.workdps(80 + 8 * n):
        moments = [_raw_moment(kind, k) for k in range(2 * n)]
        alpha, beta = chebyshev_algorithm(moments)
        if any(bk <= 0 for bk in beta):
            raise DegradationError(f"moment recurrence for {kind} lost positivity below degree {n}")
        a = np.array([float(x) for x in alpha])
        b = np.array([0.0] + [float(mpmath.sqrt(x)) for x in beta[1:]])
    return a, b


def _raw_recurrence(kind, degree):
    k = np.arange(degree + 1, dtype=float)
    if kind == GAUSSIAN:
        return Recurrence(np.zeros(degree + 1), np.sqrt(k))
    if kind == UNIFORM:
        b = np.zeros(degree + 1)
        b[1:] = k[1:] / np.sqrt(4 * k[1:] ** 2 - 1)
        return Recurrence(np.zeros(degree + 1), b)
    if degree > MAX_MOMENT_DEGREE:
        raise DegradationError(
            f"degree {degree} exceeds the stable range ({MAX_MOMENT_DEGREE}) of the moment-generated {kind} basis"
        )
    a, b = _moment_recurrence(kind)
    return Recurrence(a[: degree + 1].copy(), b[: degree + 1].copy(), source="moments")


def coordinate_recurrence(measure: MeasureSpec, degree: int) -> Recurrence:
    """Recurrence for the orthonormal polynomials of one coordinate of ``measure``."""
    if degree < 0:
        raise InputError("degree must be non-negative")
    rec = _raw_recurrence(measure.kind, degree)
    shift, scale = measure.affine
    if shift or scale != 1.0:
        rec = rec.affine(shift, scale)
    return rec


def reference_quadrature(measure: MeasureSpec, k=200):
    """Nodes and weights integrating one coordinate's law, built without the recurrence.

    Gauss-Hermite / Legendre / Laguerre from scipy; the two-sided law is folded
    onto two Gauss-Laguerre rules.
    """
    kind = measure.kind
    if kind == GAUSSIAN:
        u, w = special.roots_hermitenorm(k)
        w = w / math.sqrt(2 * math.pi)
    elif kind == UNIFORM:
        u, w = special.roots_legendre(k)
        w = w / 2
    elif kind == EXPONENTIAL:
        u, w = special.roots_laguerre(k)
    else:
        v, wv = special.roots_laguerre(k)
        u = np.concatenate([-v[::-1], v])
        w = np.concatenate([wv[::-1], wv]) / 2
    shift, scale = measure.affine
    return (u - shift) / scale, w


def marginal_moments(measure: MeasureSpec):
    """Exact (mean, variance) of one coordinate."""
    raw = {GAUSSIAN: (0.0, 1.0), LAPLACE: (0.0, 2.0), EXPONENTIAL: (1.0, 1.0), UNIFORM: (0.0, 1.0 / 3.0)}
    mean, var = raw[measure.kind]
    shift, scale = measure.affine
    return (mean - shift) / scale, var / scale**2
