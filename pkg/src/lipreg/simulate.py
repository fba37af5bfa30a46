"""Regression datasets Y = f(X) + noise and a small library of Lipschitz targets."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import special

from . import rng
from .errors import ConfigurationError, InputError
from .measures import MeasureSpec, SampleMatrix, draw, draw_block, sample
from .polybasis import PolyInBasis

TARGET_KINDS = (
    "euclidean-norm-centered",
    "max-coordinate",
    "distance-to-point",
    "soft-min",
    "linear",
    "abs-coordinate",
    "basis-polynomial",
    "custom",
)

CENTERING_SAMPLES = 10**6
CENTERING_SEED = 0x5EED


def gaussian_norm_mean(d):
    """E|G| for G standard Gaussian in R^d (mean of the chi distribution)."""
    return math.sqrt(2.0) * math.exp(special.gammaln((d + 1) / 2) - special.gammaln(d / 2))


@dataclass(frozen=True, eq=False)
class TargetFunction:
    """A regression target ``f(x) - shift`` with a declared Lipschitz constant.

    Built-in kinds and their parameters:

    * ``euclidean-norm-centered``: |x| - E|G|, Gaussian chi mean for the input dimension
    * ``max-coordinate``: max_i x_i
    * ``distance-to-point``: |x - point|
    * ``soft-min``: -log(sum_i exp(-beta x_i)) / beta
    * ``linear``: <theta, x>
    * ``abs-coordinate``: |x_coord|
    * ``basis-polynomial``: a :class:`PolyInBasis` (``poly``)
    * ``custom``: any vectorized callable (``fn``)
    """

    kind: str
    params: dict = field(default_factory=dict)
    lipschitz: float = 1.0
    lipschitz_override: bool = False
    shift: float = 0.0
    shift_stderr: float = 0.0

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigurationError(f"unknown target kind {self.kind!r}")
        if self.lipschitz > 1.0 + 1e-12 and not self.lipschitz_override:
            raise InputError(
                f"target {self.kind} has Lipschitz constant {self.lipschitz:.4g} > 1; set lipschitz_override"
            )

    def __call__(self, X):
        return target_eval(self, X)

    def to_dict(self):
        if self.kind == "custom":
            raise ConfigurationError("custom targets are not serializable")
        params = dict(self.params)
        if "poly" in params:
            params["poly"] = params["poly"].to_dict()
        for key, val in params.items():
            if isinstance(val, np.ndarray):
                params[key] = val.tolist()
        return {
            "kind": self.kind,
            "params": params,
            "lipschitz": self.lipschitz,
            "lipschitz_override": self.lipschitz_override,
            "shift": self.shift,
            "shift_stderr": self.shift_stderr,
        }

    @classmethod
    def from_dict(cls, data):
        params = dict(data.get("params", {}))
        kind = data["kind"]
        if kind == "basis-polynomial":
            params["poly"] = PolyInBasis.from_dict(params["poly"])
        lip = data.get("lipschitz")
        if lip is None:
            lip = math.inf if kind == "basis-polynomial" else 1.0
        return cls(
            kind,
            params,
            float(lip),
            bool(data.get("lipschitz_override", kind == "basis-polynomial")),
            float(data.get("shift", 0.0)),
            float(data.get("shift_stderr", 0.0)),
        )


def euclidean_norm_target():
    return TargetFunction("euclidean-norm-centered")


def max_coordinate_target():
    return TargetFunction("max-coordinate")


def abs_coordinate_target(coord=0):
    return TargetFunction("abs-coordinate", {"coord": coord})


def distance_target(point):
    return TargetFunction("distance-to-point", {"point": np.asarray(point, dtype=float)})


def soft_min_target(beta=1.0):
    return TargetFunction("soft-min", {"beta": float(beta)})


def linear_target(theta, override=False):
    theta = np.asarray(theta, dtype=float)
    return TargetFunction("linear", {"theta": theta}, float(np.linalg.norm(theta)), override)


def polynomial_target(poly: PolyInBasis):
    return TargetFunction("basis-polynomial", {"poly": poly}, math.inf, True)


def custom_target(fn: Callable, lipschitz=1.0, override=False):
    return TargetFunction("custom", {"fn": fn}, lipschitz, override)


BUILTIN_LIPSCHITZ_TARGETS = {
    "euclidean-norm-centered": euclidean_norm_target,
    "max-coordinate": max_coordinate_target,
    "abs-coordinate": abs_coordinate_target,
    "distance-to-point": lambda: distance_target([0.5]),
    "soft-min": soft_min_target,
}


def _raw_eval(target, X):
    p = target.params
    kind = target.kind
    if kind == "euclidean-norm-centered":
        return np.linalg.norm(X, axis=1) - p.get("offset", gaussian_norm_mean(X.shape[1]))
    if kind == "max-coordinate":
        return X.max(axis=1)
    if kind == "distance-to-point":
        point = np.broadcast_to(np.asarray(p["point"], dtype=float), (X.shape[1],))
        return np.linalg.norm(X - point, axis=1)
    if kind == "soft-min":
        beta = float(p.get("beta", 1.0))
        return -special.logsumexp(-beta * X, axis=1) / beta
    if kind == "linear":
        return X @ np.asarray(p["theta"], dtype=float)
    if kind == "abs-coordinate":
        return np.abs(X[:, int(p.get("coord", 0))])
    if kind == "basis-polynomial":
        return p["poly"](X)
    return np.asarray(p["fn"](X), dtype=float)


def target_eval(target: TargetFunction, X) -> np.ndarray | float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return float(_raw_eval(target, X[None, :])[0] - target.shift)
    return _raw_eval(target, X) - target.shift


def target_centered(target: TargetFunction, measure: MeasureSpec, n_mc=CENTERING_SAMPLES) -> TargetFunction:
    """Copy of ``target`` with its Monte Carlo mean under ``measure`` subtracted.

    The estimate and its standard error are recorded on the result; the
    sampling seed is fixed so centering is reproducible.
    """
    total = 0.0
    total_sq = 0.0
    for b, lo, hi in rng.blocks(n_mc):
        v = target_eval(target, draw_block(measure, hi - lo, CENTERING_SEED, "centering", b))
        total += v.sum()
        total_sq += (v * v).sum()
    mean = total / n_mc
    var = max(total_sq / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return replace(target, shift=target.shift + mean, shift_stderr=math.sqrt(var / n_mc))


@dataclass(frozen=True, eq=False)
class Dataset:
    X: SampleMatrix
    Y: np.ndarray
    sigma: float
    target: TargetFunction
    seed: int
    noise_seed: int | None = None

    def __post_init__(self):
        if self.Y.shape != (self.X.n,):
            raise InputError("Y must have one entry per design row")
        self.Y.setflags(write=False)

    @property
    def n(self):
        return self.X.n

    @property
    def measure(self):
        return self.X.measure

    def metadata(self):
        try:
            target = self.target.to_dict()
        except ConfigurationError:
            target = {"kind": "custom"}
        return {
            "measure": self.measure.to_dict(),
            "target": target,
            "sigma": self.sigma,
            "seed": self.seed,
            "noise_seed": self.noise_seed,
            "n": self.n,
        }

    def to_csv(self, csv_path, json_path=None):
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(self.X.d)] + ["y"])
            w.writerows(np.column_stack([self.X.X, self.Y]).tolist())
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.metadata(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def read_dataset(csv_path, json_path) -> Dataset:
    with open(json_path) as fh:
        meta = json.load(fh)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    measure = MeasureSpec.from_dict(meta["measure"])
    if data.shape[1] != measure.dimension + 1:
        raise InputError("CSV column count does not match the measure dimension")
    target = TargetFunction.from_dict(meta["target"]) if meta["target"]["kind"] != "custom" else None
    X = SampleMatrix(np.ascontiguousarray(data[:, :-1]), measure, int(meta["seed"]))
    return Dataset(X, np.ascontiguousarray(data[:, -1]), float(meta["sigma"]), target, int(meta["seed"]), meta.get("noise_seed"))


def make_dataset(measure, target, n, sigma, seed, noise_seed=None) -> Dataset:
    """Draw X from ``measure`` and Y = target(X) + sigma * N(0, 1).

    The design and noise streams are keyed separately; ``noise_seed`` defaults
    to ``seed``.
    """
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    if target.lipschitz > 1.0 + 1e-12 and not target.lipschitz_override:
        raise InputError("target Lipschitz constant exceeds 1 without override")
    X = sample(measure, n, seed)
    ns = seed if noise_seed is None else noise_seed
    z = draw(MeasureSpec("standard-gaussian", 1), n, ns, purpose="noise")[:, 0]
    Y = target_eval(target, X.X) + sigma * z
    return Dataset(X, Y, float(sigma), target, int(seed), noise_seed)
