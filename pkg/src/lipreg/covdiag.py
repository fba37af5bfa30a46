"""Random-design Gram matrices: concentration, smallest eigenvalues, small balls and moment growth."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .errors import InputError
from .measures import MeasureSpec, SampleMatrix, draw_block, sample
from .polybasis import CHUNK_ROWS, PolyInBasis, design_matrix, enumerate_indices

MAX_MOMENT_Q = 16
NORM_TOLERANCE = 0.01
DEFAULT_T_GRID = tuple(np.logspace(-3, 0, 13))


@dataclass(frozen=True)
class CovarianceDiagnostics:
    n: int
    d: int
    m: int
    D: int
    opnorm_deviation: float
    lambda_min: float
    lambda_max: float
    condition_number: float
    inverse_deviation: float

    def to_dict(self):
        return asdict(self)


def _diagnostics(eig, n, d, m):
    lo, hi = float(eig[0]), float(eig[-1])
    dev = float(np.max(np.abs(eig - 1.0)))
    inv = float(np.max(np.abs(1.0 / eig - 1.0))) if lo > 0 else math.inf
    return CovarianceDiagnostics(n, d, m, len(eig), dev, lo, hi, hi / lo if lo > 0 else math.inf, inv)


def gram(X, measure: MeasureSpec, m: int) -> np.ndarray:
    """C_n = A^T A / n, accumulated over row chunks."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    idx = enumerate_indices(X.shape[1], m)
    C = np.zeros((len(idx), len(idx)))
    for _, lo, hi in rng.blocks(X.shape[0], CHUNK_ROWS):
        A = design_matrix(X[lo:hi], idx, measure)
        C += A.T @ A
    C /= X.shape[0]
    return (C + C.T) / 2


def empirical_covariance(X: SampleMatrix, m: int, measure: MeasureSpec | None = None):
    """(C_n, CovarianceDiagnostics) for the design ``X`` in the degree-m basis."""
    measure = X.measure if measure is None else measure
    C = gram(X.X, measure, m)
    eig = np.linalg.eigvalsh(C)
    return C, _diagnostics(eig, X.n, X.d, m)


def _replicate(measure, d, m, n, seed, r):
    mu = measure.with_dimension(d)
    X = sample(mu, n, rng.child_seed(seed, "covdiag", n, r))
    return empirical_covariance(X, m)[1]


def replicate_diagnostics(measure, d, m, n, reps, seed, workers=1):
    """Diagnostics for ``reps`` independent designs; replication r is keyed by (seed, n, r)."""
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda r: _replicate(measure, d, m, n, seed, r), range(reps)))
    return [_replicate(measure, d, m, n, seed, r) for r in range(reps)]


@dataclass(frozen=True)
class DeviationCurve:
    d: int
    m: int
    D: int
    rows: list = field(default_factory=list)
    slope: float = math.nan

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "d", "m", "D", "reps", "median_dev", "q10_dev", "q90_dev", "median_inv_dev", "median_lambda_min"])
        for r in self.rows:
            w.writerow([r["n"], self.d, self.m, self.D, r["reps"]] + [repr(r[k]) for k in
                       ("median_dev", "q10_dev", "q90_dev", "median_inv_dev", "median_lambda_min")])
        return buf.getvalue()


def opnorm_deviation_curve(measure, d, m, n_grid, reps, seed, workers=1) -> DeviationCurve:
    """Median |C_n - I|_op across replications for each n, with its log-log slope in n."""
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InputError("n grid must be increasing")
    rows = []
    D = len(enumerate_indices(d, m))
    for n in n_grid:
        diags = replicate_diagnostics(measure, d, m, n, reps, seed, workers)
        dev = np.array([g.opnorm_deviation for g in diags])
        rows.append({
            "n": n,
            "reps": reps,
            "median_dev": float(np.median(dev)),
            "q10_dev": float(np.quantile(dev, 0.1)),
            "q90_dev": float(np.quantile(dev, 0.9)),
            "median_inv_dev": float(np.median([g.inverse_deviation for g in diags])),
            "median_lambda_min": float(np.median([g.lambda_min for g in diags])),
        })
    med = np.array([r["median_dev"] for r in rows])
    slope = math.nan
    if len(rows) > 1 and np.all(med > 0):
        slope = float(np.polyfit(np.log(n_grid), np.log(med), 1)[0])
    return DeviationCurve(d, m, D, rows, slope)


@dataclass(frozen=True)
class LambdaMinTail:
    n: int
    d: int
    m: int
    D: int
    values: np.ndarray
    quantiles: dict
    frac_below_half: float

    def to_dict(self):
        return {"n": self.n, "d": self.d, "m": self.m, "D": self.D, "reps": int(self.values.size),
                "quantiles": self.quantiles, "frac_below_half": self.frac_below_half,
                "min": float(self.values.min())}


def lambda_min_tail(measure, d, m, n, reps, seed, workers=1) -> LambdaMinTail:
    D = len(enumerate_indices(d, m))
    if n < D:
        raise InputError(f"need n >= D = {D}")
    diags = replicate_diagnostics(measure, d, m, n, reps, seed, workers)
    lam = np.array([g.lambda_min for g in diags])
    qs = {str(q): float(np.quantile(lam, q)) for q in (0.0, 0.01, 0.1, 0.5, 0.9)}
    return LambdaMinTail(n, d, m, D, lam, qs, float(np.mean(lam < 0.5)))


# ---------------------------------------------------------------------------
# small-ball and moment checks on a single polynomial


def _poly_samples(P, measure, n_mc, seed, purpose):
    parts = [np.asarray(P(draw_block(measure, hi - lo, seed, purpose, b)), dtype=float)
             for b, lo, hi in rng.blocks(n_mc)]
    return np.concatenate(parts)


def _degree(P, m):
    if m is not None:
        return int(m)
    if isinstance(P, PolyInBasis):
        return P.degree
    raise InputError("degree must be given for a callable polynomial")


@dataclass(frozen=True)
class SmallBallTable:
    m: int
    n_mc: int
    mc_norm: float
    rows: list

    @property
    def empirical_constant(self):
        return max(r["ratio"] for r in self.rows)

    def slope(self, t_lo=1e-3, t_hi=1e-1):
        """Log-log slope of P(|P| <= t) in t over [t_lo, t_hi]."""
        sel = [r for r in self.rows if t_lo * (1 - 1e-9) <= r["t"] <= t_hi * (1 + 1e-9) and r["prob"] > 0]
        if len(sel) < 2:
            return math.nan
        t = np.log([r["t"] for r in sel])
        p = np.log([r["prob"] for r in sel])
        return float(np.polyfit(t, p, 1)[0])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "prob", "stderr", "bound_shape", "ratio"])
        for r in self.rows:
            w.writerow([repr(r[k]) for k in ("t", "prob", "stderr", "bound_shape", "ratio")])
        return buf.getvalue()


def small_ball_check(P, measure: MeasureSpec, t_grid=DEFAULT_T_GRID, n_mc=10**6, seed=0, m=None) -> SmallBallTable:
    """Empirical P(|P(X)| <= t) against the shape m t^{1/m}.

    ``P`` must have unit L2 norm to within 1%: exactly by Parseval for a
    :class:`PolyInBasis`, by Monte Carlo otherwise.
    """
    m = _degree(P, m)
    if m < 1:
        raise InputError("small-ball check needs a polynomial of degree >= 1")
    v = np.abs(_poly_samples(P, measure, n_mc, seed, "small-ball"))
    mc_norm = float(np.sqrt(np.mean(v * v)))
    norm = P.norm() if isinstance(P, PolyInBasis) else mc_norm
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise InputError(f"polynomial norm {norm:.4f} is not within 1% of 1")
    v.sort()
    rows = []
    for t in t_grid:
        prob = np.searchsorted(v, t, side="right") / n_mc
        shape = m * t ** (1.0 / m)
        rows.append({"t": float(t), "prob": float(prob), "stderr": math.sqrt(prob * (1 - prob) / n_mc),
                     "bound_shape": shape, "ratio": float(prob / shape)})
    return SmallBallTable(m, n_mc, mc_norm, rows)


def builtin_small_ball_polys(measure_kind, d_max=4, m_max=3):
    """The built-in grid: per (d, m), the top univariate basis element, the
    multilinear product x_1...x_m (when m <= d) and the normalized sum of all
    degree-m basis elements."""
    out = []
    for d in range(1, d_max + 1):
        mu = MeasureSpec(measure_kind, d)
        for m in range(1, m_max + 1):
            out.append((f"p{m}(x1)", d, m, PolyInBasis.basis_element((m,) + (0,) * (d - 1), mu)))
            if m <= d:
                out.append((f"x1..x{m}", d, m, PolyInBasis.basis_element((1,) * m + (0,) * (d - m), mu)))
            idx = enumerate_indices(d, m)
            c = (idx.degrees == m).astype(float)
            out.append(("sum-degree-m", d, m, PolyInBasis(idx, c / np.linalg.norm(c), mu)))
    return out


@dataclass(frozen=True)
class MomentTable:
    m: int
    n_mc: int
    rows: list
    growth_exponent: float

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "ratio", "stderr"])
        for r in self.rows:
            w.writerow([repr(r["q"]), repr(r["ratio"]), repr(r["stderr"])])
        return buf.getvalue()


def moment_growth_check(P, measure: MeasureSpec, q_grid=(2, 4, 6, 8), n_mc=10**6, seed=0, m=None) -> MomentTable:
    """|P|_q / |P|_2 from one Monte Carlo sample, with delta-method bands.

    The growth exponent is the log-log slope of the ratio in q, to be read
    against the (Cq)^m law.
    """
    if max(q_grid) > MAX_MOMENT_Q:
        raise InputError(f"q above {MAX_MOMENT_Q} is beyond reliable Monte Carlo moment estimation")
    m = _degree(P, m)
    v = np.abs(_poly_samples(P, measure, n_mc, seed, "moments"))
    v2 = v * v
    M2 = v2.mean()
    rows = []
    for q in q_grid:
        vq = v**q
        Mq = vq.mean()
        r = Mq ** (1.0 / q) / math.sqrt(M2)
        cov = np.cov(np.vstack([vq, v2]))
        g = np.array([r / (q * Mq), -r / (2 * M2)])
        se = math.sqrt(max(g @ cov @ g, 0.0) / n_mc)
        rows.append({"q": float(q), "ratio": float(r), "stderr": se})
    qs = np.array([r["q"] for r in rows])
    growth = math.nan
    if len(rows) > 1:
        growth = float(np.polyfit(np.log(qs), np.log([r["ratio"] for r in rows]), 1)[0])
    return MomentTable(m, n_mc, rows, growth)
