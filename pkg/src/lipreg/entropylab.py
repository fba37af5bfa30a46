"""Random multilinear packings of Lipschitz functions and the resulting minimax calculators."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng
from .errors import InputError, UnsupportedOperationError
from .measures import GAUSSIAN, MeasureSpec, draw_block
from .polybasis import MCValue, mehler_points, ou_smooth_eval

SEPARATION_TARGET = 0.2
DEFAULT_N_CAP = 50


def m_subsets(d: int, m: int) -> np.ndarray:
    """All size-m subsets of {0..d-1} in lexicographic order, as a (C(d, m), m) array."""
    if m < 1 or m > d:
        raise InputError("need 1 <= m <= d")
    return np.array(list(itertools.combinations(range(d), m)), dtype=np.int64).reshape(-1, m)


def _check_m2(d, m):
    if m * m > d:
        raise InputError(f"multilinear packing needs m^2 <= d, got m={m}, d={d}")


def sample_thetas(D0: int, N: int, seed: int) -> np.ndarray:
    """N i.i.d. N(0, I/D0) vectors, one per row."""
    if N < 1 or D0 < 1:
        raise InputError("need N >= 1 and D0 >= 1")
    return rng.stream(seed, "thetas").standard_normal((N, D0)) / math.sqrt(D0)


def multilinear_features(X, subsets) -> np.ndarray:
    """Matrix of X_alpha = prod_{i in alpha} x_i, one column per subset."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    F = X[:, subsets[:, 0]].copy()
    for k in range(1, subsets.shape[1]):
        F *= X[:, subsets[:, k]]
    return F


def multilinear_eval(theta, x, subsets, d=None):
    """P_theta(x) = sum_alpha theta_alpha X_alpha at a point or at each row.

    ``theta`` may hold several vectors (one per row); the result then has one
    column per vector.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] if d is None else d
    _check_m2(d, subsets.shape[1])
    theta = np.asarray(theta, dtype=float)
    out = multilinear_features(x.reshape(-1, d), subsets) @ theta.T
    return out[0] if x.ndim == 1 else out


def multilinear_grad(theta, X, subsets, d):
    """Gradient of a single P_theta at each row of X, shape (n, d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G = np.zeros((X.shape[0], d))
    m = subsets.shape[1]
    for pos in range(m):
        rest = np.delete(subsets, pos, axis=1)
        vals = multilinear_features(X, rest) * theta if m > 1 else np.broadcast_to(theta, (X.shape[0], len(theta)))
        S = np.zeros((len(subsets), d))
        S[np.arange(len(subsets)), subsets[:, pos]] = 1.0
        G += vals @ S
    return G


def _stream_mean(fn, measure, n_mc, seed, purpose):
    """Mean and standard error (per column) of fn(X) over n_mc draws."""
    s1 = s2 = 0.0
    for b, lo, hi in rng.blocks(n_mc, 1 << 13):
        v = fn(draw_block(measure, hi - lo, seed, purpose, b))
        s1 = s1 + v.sum(axis=0)
        s2 = s2 + (v * v).sum(axis=0)
    mean = s1 / n_mc
    var = np.clip(s2 / n_mc - mean * mean, 0, None) * n_mc / (n_mc - 1)
    return mean, np.sqrt(var / n_mc)


def gradient_energy(theta, measure, subsets, n_mc, seed) -> MCValue:
    """Monte Carlo of E |grad P_theta|^2 (equal to m |theta|^2 for isotropic product measures)."""
    d = measure.dimension
    mean, se = _stream_mean(lambda X: (multilinear_grad(theta, X, subsets, d) ** 2).sum(axis=1),
                            measure, n_mc, seed, "grad-energy")
    return MCValue(float(mean), float(se), n_mc)


@dataclass(frozen=True)
class FourthMoments:
    per_theta: np.ndarray
    stderr: np.ndarray
    average: float
    average_stderr: float
    n_mc: int

    def bound(self, d, m):
        """3 exp(8 m^2 / d), the explicit bound on the theta-average."""
        return 3.0 * math.exp(8.0 * m * m / d)


def fourth_moment_check(thetas, measure: MeasureSpec, n_mc: int, seed: int, subsets=None) -> FourthMoments:
    """E P_theta^4 for each theta row, all from the same draws, and their average."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    d = measure.dimension
    if subsets is None:
        m = _m_from_size(d, thetas.shape[1])
        subsets = m_subsets(d, m)
    _check_m2(d, subsets.shape[1])
    mean, se = _stream_mean(lambda X: (multilinear_features(X, subsets) @ thetas.T) ** 4,
                            measure, n_mc, seed, "fourth-moment")
    N = thetas.shape[0]
    # across-theta spread dominates; the per-theta MC error is reported separately
    avg_se = float(np.std(mean, ddof=1) / math.sqrt(N)) if N > 1 else float(se[0])
    mc_se = float(np.sqrt(np.sum(se**2)) / N)
    return FourthMoments(mean, se, float(mean.mean()), max(avg_se, mc_se), n_mc)


def _m_from_size(d, D0):
    for m in range(1, d + 1):
        if math.comb(d, m) == D0:
            return m
    raise InputError(f"no m with C({d}, m) = {D0}")


def truncate(P, lam):
    """P * 1{|P| <= lam} as a new callable."""
    if not lam > 0:
        raise InputError("truncation level must be positive")

    def truncated(X):
        v = np.asarray(P(X), dtype=float)
        return np.where(np.abs(v) <= lam, v, 0.0)

    return truncated


@dataclass(frozen=True)
class TruncationCheck:
    distance: np.ndarray  # MC |P - P|_lam|_2 per polynomial
    stderr: np.ndarray
    tail_prob: np.ndarray
    cs_bound: np.ndarray  # (E P^4)^{1/4} P(|P| > lam)^{1/4}


def truncation_distance(thetas, measure, subsets, lam, n_mc, seed, fourth=None) -> TruncationCheck:
    thetas = np.atleast_2d(thetas)

    def fn(X):
        v = multilinear_features(X, subsets) @ thetas.T
        big = np.abs(v) > lam
        return np.hstack([v * v * big, big.astype(float)])

    mean, se = _stream_mean(fn, measure, n_mc, seed, "truncation")
    N = thetas.shape[0]
    sq, tail = mean[:N], mean[N:]
    dist = np.sqrt(sq)
    dist_se = np.where(dist > 0, se[:N] / (2 * np.maximum(dist, 1e-300)), np.sqrt(se[:N]))
    if fourth is None:
        fourth = fourth_moment_check(thetas, measure, n_mc, seed, subsets).per_theta
    return TruncationCheck(dist, dist_se, tail, fourth**0.25 * tail**0.25)


# ---------------------------------------------------------------------------
# packing construction


@dataclass(frozen=True)
class PackingConfig:
    d: int
    m: int
    N: int | None = None
    lam: float | None = None
    t: float | None = None
    seed: int = 0
    n_mc_moments: int = 20000
    n_outer: int = 4000
    n_inner: int = 256
    n_pairs: int = 1000
    n_inner_lipschitz: int = 1024
    pair_radius: float = 0.25
    band: float = 4.0
    workers: int = 1
    measure_kind: str = GAUSSIAN

    def __post_init__(self):
        if self.measure_kind != GAUSSIAN:
            raise UnsupportedOperationError("the packing construction runs only for the standard Gaussian measure")
        _check_m2(self.d, self.m)
        if self.N is not None and self.N < 1:
            raise InputError("N must be at least 1")
        if self.t is not None and self.t < 0:
            raise InputError("t must be non-negative")
        if self.lam is not None and not self.lam > 0:
            raise InputError("lam must be positive")

    @property
    def D0(self):
        return math.comb(self.d, self.m)

    @property
    def family_size(self):
        if self.N is not None:
            return self.N
        return min(math.ceil(math.exp(self.D0 / 256)), DEFAULT_N_CAP)

    @property
    def smoothing_time(self):
        return 1.0 / (32 * self.m) if self.t is None else float(self.t)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True, eq=False)
class PackingResult:
    config: PackingConfig
    thetas: np.ndarray
    theta_dists: np.ndarray
    fourth_moments: FourthMoments
    C0_hat: float
    lam: float
    t: float
    lipschitz_bound: float
    truncation: TruncationCheck
    smoothed_dists: np.ndarray
    smoothed_stderr: np.ndarray
    max_quotient: float
    max_quotient_stderr: float
    flags: dict
    entropy: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.thetas.shape[0]

    @property
    def certified(self):
        return all(self.flags[k] for k in ("theta_separated", "smoothed_separated", "lipschitz_ok")) and not self.flags["degenerate"]

    def member(self, i, n_mc=4096, seed=None):
        """f_i = T_t(P_i|_lam) as a Monte Carlo callable (points -> MCValue)."""
        subsets = m_subsets(self.config.d, self.config.m)
        P = truncate(lambda X: multilinear_features(X, subsets) @ self.thetas[i], self.lam)
        seed = self.config.seed if seed is None else seed
        if self.t == 0:
            return lambda x: MCValue(P(np.atleast_2d(x)), 0.0, 0)
        return lambda x: ou_smooth_eval(P, self.t, x, n_mc, seed)

    def to_dict(self):
        iu = np.triu_indices(self.N, 1)
        return {
            # the worker count never changes results, so it is left out of the record
            "config": {k: v for k, v in self.config.to_dict().items() if k != "workers"},
            "D0": self.config.D0,
            "N": self.N,
            "C0_hat": self.C0_hat,
            "lam": self.lam,
            "t": self.t,
            "lipschitz_bound": self.lipschitz_bound,
            "fourth_moments": self.fourth_moments.per_theta.tolist(),
            "fourth_moment_average": self.fourth_moments.average,
            "fourth_moment_average_stderr": self.fourth_moments.average_stderr,
            "truncation_distance": self.truncation.distance.tolist(),
            "min_theta_dist": float(self.theta_dists[iu].min()) if self.N > 1 else None,
            "min_smoothed_dist": float(self.smoothed_dists[iu].min()) if self.N > 1 else None,
            "max_lipschitz_quotient": self.max_quotient,
            "max_lipschitz_quotient_stderr": self.max_quotient_stderr,
            "flags": self.flags,
            "entropy": self.entropy,
            "thetas": self.thetas.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def pairs_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "theta_dist", "smoothed_dist", "stderr"])
        for i, j in zip(*np.triu_indices(self.N, 1)):
            w.writerow([int(i), int(j), repr(float(self.theta_dists[i, j])),
                        repr(float(self.smoothed_dists[i, j])), repr(float(self.smoothed_stderr[i, j]))])
        return buf.getvalue()


def _pairwise_theta(thetas):
    sq = np.sum((thetas[:, None, :] - thetas[None, :, :]) ** 2, axis=-1)
    return np.sqrt(sq)


def _smoothed_block(thetas, subsets, lam, t, d, seed, n_inner, b, rows):
    """Per-outer-point products (F1_i - F1_j)(F2_i - F2_j) summed over the block.

    F1, F2 average T_t over two disjoint halves of the inner Mehler draws, so
    the product is unbiased for (f_i - f_j)^2 at each outer point.  Inner
    draws are shared by all members (common random numbers).
    """
    mu = MeasureSpec(GAUSSIAN, d)
    x = draw_block(mu, rows, seed, "packing-outer", b)
    N = thetas.shape[0]
    if t == 0:
        v = multilinear_features(x, subsets) @ thetas.T
        v = np.where(np.abs(v) <= lam, v, 0.0)
        diff = v[:, :, None] - v[:, None, :]
        w = diff * diff
        return w.sum(axis=0), (w * w).sum(axis=0)
    g = rng.stream(seed, "packing-inner", b).standard_normal((rows, n_inner, d))
    pts = mehler_points(x[:, None, :], t, g).reshape(-1, d)
    v = multilinear_features(pts, subsets) @ thetas.T
    v = np.where(np.abs(v) <= lam, v, 0.0).reshape(rows, n_inner, N)
    half = n_inner // 2
    F1 = v[:, :half].mean(axis=1)
    F2 = v[:, half : 2 * half].mean(axis=1)
    w = (F1[:, :, None] - F1[:, None, :]) * (F2[:, :, None] - F2[:, None, :])
    return w.sum(axis=0), (w * w).sum(axis=0)


def smoothed_distances(thetas, subsets, lam, t, d, n_outer, n_inner, seed, workers=1):
    """Monte Carlo |f_i - f_j|_{L2(gamma)} for all pairs, with standard errors."""
    block = 32
    jobs = list(rng.blocks(n_outer, block))
    run = lambda job: _smoothed_block(thetas, subsets, lam, t, d, seed, n_inner, job[0], job[2] - job[1])
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    sq = s1 / n_outer
    var = np.clip(s2 / n_outer - sq * sq, 0, None) * n_outer / (n_outer - 1)
    sq_se = np.sqrt(var / n_outer)
    dist = np.sqrt(np.clip(sq, 0, None))
    # delta method away from zero, sqrt of the band at zero
    se = np.where(dist > 0, sq_se / (2 * np.maximum(dist, 1e-300)), np.sqrt(sq_se))
    np.fill_diagonal(dist, 0.0)
    np.fill_diagonal(se, 0.0)
    return dist, se


def lipschitz_quotients(f, t, d, n_pairs, n_inner, radius, seed):
    """Difference quotients of T_t f over random close pairs, with standard errors.

    ``f`` maps (k, d) points to (k, N) values; the result is (n_pairs, N).
    Pairs are x ~ gamma and y = x + radius * u with u uniform on the sphere;
    f(x) and f(y) share their Mehler draws.
    """
    mu = MeasureSpec(GAUSSIAN, d)
    g_pair = rng.stream(seed, "lip-pairs")
    x = draw_block(mu, n_pairs, seed, "lip-x", 0)
    u = g_pair.standard_normal((n_pairs, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    y = x + radius * u
    q = []
    q_se = []
    for k in range(n_pairs):
        g = rng.stream(seed, "lip-inner", k).standard_normal((n_inner, d))
        diff = f(mehler_points(x[k], t, g)) - f(mehler_points(y[k], t, g))
        diff = diff.reshape(n_inner, -1)
        q.append(np.abs(diff.mean(axis=0)) / radius)
        q_se.append(diff.std(axis=0, ddof=1) / math.sqrt(n_inner) / radius)
    return np.array(q), np.array(q_se)


def build_packing(cfg: PackingConfig) -> PackingResult:
    """Random multilinear family f_i = T_t(P_i|_lam), with separation and Lipschitz certificates.

    Certifications are recorded as flags: theta separation (> 1), smoothed
    L2 separation (>= 1/5 - band * stderr) and empirical Lipschitz quotients
    (<= lam / sqrt(t)).  With t = 0 no smoothing happens and the Lipschitz
    check is skipped.
    """
    d, m = cfg.d, cfg.m
    N = cfg.family_size
    subsets = m_subsets(d, m)
    mu = MeasureSpec(GAUSSIAN, d)
    thetas = sample_thetas(cfg.D0, N, cfg.seed)
    fm = fourth_moment_check(thetas, mu, cfg.n_mc_moments, cfg.seed, subsets)
    C0_hat = fm.average
    lam = 16 * math.sqrt(2) * math.sqrt(C0_hat) if cfg.lam is None else float(cfg.lam)
    t = cfg.smoothing_time
    lip_bound = lam / math.sqrt(t) if t > 0 else math.inf
    trunc = truncation_distance(thetas, mu, subsets, lam, cfg.n_mc_moments, cfg.seed, fm.per_theta)

    theta_d = _pairwise_theta(thetas)
    sm_d, sm_se = smoothed_distances(thetas, subsets, lam, t, d, cfg.n_outer, cfg.n_inner, cfg.seed, cfg.workers)
    iu = np.triu_indices(N, 1)
    degenerate = N < 2

    if t > 0:
        P = lambda X: np.where(np.abs(v := multilinear_features(X, subsets) @ thetas.T) <= lam, v, 0.0)
        q, q_se = lipschitz_quotients(P, t, d, cfg.n_pairs, cfg.n_inner_lipschitz, cfg.pair_radius, cfg.seed)
        k = np.unravel_index(np.argmax(q), q.shape)
        max_q, max_q_se = float(q[k]), float(q_se[k])
        lip_ok = bool(max_q <= lip_bound)
    else:
        max_q, max_q_se, lip_ok = math.nan, math.nan, False

    N1 = int(np.sum(fm.per_theta <= 2 * C0_hat))
    flags = {
        "degenerate": degenerate,
        "theta_separated": bool(degenerate or theta_d[iu].min() > 1.0),
        "smoothed_separated": bool(degenerate or np.all(sm_d[iu] >= SEPARATION_TARGET - cfg.band * sm_se[iu])),
        "lipschitz_ok": lip_ok,
        "lipschitz_skipped": t == 0,
        "norms_bounded": bool(np.all(np.sum(thetas**2, axis=1) <= 2.0)),
        "truncation_ok": bool(np.all(trunc.distance <= 0.25)),
        "N1": N1,
        "N1_at_least_third": bool(N1 >= N / 3),
    }
    ok = flags["theta_separated"] and flags["smoothed_separated"] and lip_ok and not degenerate
    min_sep = float(sm_d[iu].min()) if not degenerate else math.nan
    entropy = {
        "log_N": math.log(N),
        "D0_over_256": cfg.D0 / 256,
        "epsilon": min_sep / lip_bound if ok else math.nan,
        "entropy_check": bool(ok and math.log(N) >= cfg.D0 / 256),
        "log_N_full_family": cfg.D0 / 128,  # size of the unmaterialized family
    }
    return PackingResult(cfg, thetas, theta_d, fm, C0_hat, lam, t, lip_bound, trunc, sm_d, sm_se,
                         max_q, max_q_se, flags, entropy)


# ---------------------------------------------------------------------------
# information-theoretic calculators


def kl_observations(f1, f2, n, sigma, measure: MeasureSpec, n_mc: int, seed: int) -> MCValue:
    """KL divergence between the laws of n observations under f1 and f2: n |f1 - f2|^2 / (2 sigma^2)."""
    if not sigma > 0:
        raise InputError("sigma must be positive (the divergence is infinite at sigma = 0)")
    mean, se = _stream_mean(lambda X: (np.asarray(f1(X)) - np.asarray(f2(X))) ** 2, measure, n_mc, seed, "kl")
    factor = n / (2 * sigma**2)
    return MCValue(factor * float(mean), factor * float(se), n_mc)


@dataclass(frozen=True)
class MinimaxBound:
    delta2: float
    applicable: bool
    noise_in_range: bool
    n_in_range: bool
    log_n_max: float

    def to_dict(self):
        return asdict(self)


def minimax_lower_bound(n, d, sigma, kappa=0.0, eta=0.25, c=1.0) -> MinimaxBound:
    """delta^2 = c log d / ((1 + kappa) log n), valid for n^-kappa <= sigma^2 <= n and
    n <= exp(c d^{2 eta} log d / (1 + kappa))."""
    if n < 2 or d < 2:
        raise InputError("need n, d >= 2")
    if kappa < 0 or c <= 0 or eta <= 0:
        raise InputError("need kappa >= 0 and c, eta > 0")
    logn, logd = math.log(n), math.log(d)
    s2 = sigma * sigma
    noise_ok = -kappa * logn <= (math.log(s2) if s2 > 0 else -math.inf) <= logn
    log_n_max = c * d ** (2 * eta) * logd / (1 + kappa)
    n_ok = logn <= log_n_max
    return MinimaxBound(c * logd / ((1 + kappa) * logn), bool(noise_ok and n_ok), bool(noise_ok), bool(n_ok), log_n_max)
