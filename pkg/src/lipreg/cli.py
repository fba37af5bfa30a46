"""Config-driven experiment runner.

    lipreg run --config exp.json [--seed S] [--threads K] [--strict] [--out-dir DIR]
    lipreg validate --config exp.json

Exit codes: 0 success, 2 invalid config, 3 capacity refusal, 4 packing
certification failure under --strict.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import covdiag, entropylab, estimators, risklab
from .errors import CapacityError, ConfigurationError, InputError, LipregError
from .measures import MeasureSpec
from .polybasis import DEFAULT_SIZE_CAP, basis_size
from .simulate import TargetFunction, make_dataset, read_dataset, target_centered

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "estimate", "risk-sweep", "covdiag", "packing", "minimax")
EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_CERT = 0, 2, 3, 4

DEFAULT_CONSTANTS = {
    "c0": 1.0,  # least-squares regime constant
    "C0": 1.0,  # least-squares degree constant
    "offset": 4,  # projection degree offset in the first regime
    "eta": 0.25,  # exponent in the minimax range, product case
    "c": 1.0,  # minimax constant
    "kappa": 0.0,  # noise range exponent
}
DEFAULT_CAPS = {"memory_bytes": estimators.DEFAULT_MEMORY_CAP, "max_D": DEFAULT_SIZE_CAP, "n_mc": 10**7}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int = 0
    measure: dict = field(default_factory=lambda: {"kind": "standard-gaussian", "dimension": 1})
    target: dict = field(default_factory=lambda: {"kind": "euclidean-norm-centered"})
    center_target: bool = False
    grids: dict = field(default_factory=dict)
    reps: int = 20
    estimators: list = field(default_factory=lambda: ["projection", "ls"])
    degree: object = None  # int, or "auto" for the degree rules
    n_mc: int = 10**5
    n_ref: int = 10**6
    data: dict = field(default_factory=dict)
    packing: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    caps: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def const(self, key):
        return self.constants.get(key, DEFAULT_CONSTANTS[key])

    def cap(self, key):
        return self.caps.get(key, DEFAULT_CAPS[key])

    def measure_spec(self):
        return MeasureSpec.from_dict(self.measure)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version}")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        if "command" not in data:
            raise ConfigurationError("config needs a command")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"command must be one of {COMMANDS}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        self.measure_spec()
        for key in self.constants:
            if key not in DEFAULT_CONSTANTS:
                raise ConfigurationError(f"unknown constant {key!r}")
        for key in self.caps:
            if key not in DEFAULT_CAPS:
                raise ConfigurationError(f"unknown cap {key!r}")
        for key, vals in self.grids.items():
            if key not in ("n", "m", "sigma"):
                raise ConfigurationError(f"unknown grid {key!r}")
            if not isinstance(vals, list) or not vals:
                raise ConfigurationError(f"grid {key!r} must be a non-empty list")
        if any(s < 0 for s in self.grids.get("sigma", [])):
            raise ConfigurationError("sigma must be non-negative")
        if any(n < 1 for n in self.grids.get("n", [])):
            raise ConfigurationError("n must be positive")
        if any(int(m) != m or m < 0 for m in self.grids.get("m", [])):
            raise ConfigurationError("degrees must be non-negative integers")
        if self.reps < 1:
            raise ConfigurationError("reps must be positive")
        for name in self.estimators:
            if name not in ("projection", "ls"):
                raise ConfigurationError(f"unknown estimator {name!r}")
        simulated = self.command in ("simulate", "estimate", "risk-sweep") and not self.data
        if simulated:
            self.target_function()
        if (simulated or self.command in ("covdiag", "minimax")) and "n" not in self.grids:
            raise ConfigurationError(f"{self.command} needs grids.n")
        if self.command in ("risk-sweep", "covdiag") and "m" not in self.grids:
            raise ConfigurationError(f"{self.command} needs grids.m")
        if self.command in ("simulate", "estimate", "risk-sweep") and not self.data and "sigma" not in self.grids:
            raise ConfigurationError(f"{self.command} needs grids.sigma")
        if self.command == "estimate" and self.degree is None and "m" not in self.grids:
            raise ConfigurationError("estimate needs degree or grids.m")
        if self.command == "packing":
            try:
                self.packing_config()
            except (TypeError, InputError) as exc:
                raise ConfigurationError(f"bad packing section: {exc}") from None

    def target_function(self):
        try:
            t = TargetFunction.from_dict(self.target)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad target description: {exc}") from None
        except InputError as exc:
            raise ConfigurationError(str(exc)) from None
        return t

    def packing_config(self, workers=1):
        p = dict(self.packing)
        p.setdefault("seed", self.seed)
        p["workers"] = workers
        return entropylab.PackingConfig(**p)


def load_config(path, seed=None):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    cfg = ExperimentConfig.from_dict(data)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
        cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# atomic output


def write_atomic(path, text):
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = os.path.abspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


class Outputs:
    """Collects artifacts in memory; nothing touches disk until every table is built."""

    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.out_dir = out_dir
        self.files = {}
        self.summaries = []

    def path(self, key, default):
        return os.path.join(self.out_dir, self.cfg.outputs.get(key, default))

    def add(self, key, default, text, summary=None):
        self.files[self.path(key, default)] = text
        if summary:
            self.summaries.append(summary)

    def commit(self):
        os.makedirs(self.out_dir, exist_ok=True)
        for p, text in self.files.items():
            os.makedirs(os.path.dirname(p), exist_ok=True)
            write_atomic(p, text)


# ---------------------------------------------------------------------------
# commands


def _target(cfg, measure):
    t = cfg.target_function()
    return target_centered(t, measure) if cfg.center_target else t


def _check_capacity(cfg, n, d, m):
    D, nbytes = estimators.predicted_footprint(n, d, m)
    if D > cfg.cap("max_D"):
        raise CapacityError(f"D = {D} exceeds max_D = {cfg.cap('max_D')}")
    if nbytes > cfg.cap("memory_bytes"):
        raise CapacityError(f"design matrix needs {nbytes} bytes, cap is {cfg.cap('memory_bytes')}")
    return D


def cmd_simulate(cfg, out, workers):
    mu = cfg.measure_spec()
    target = _target(cfg, mu)
    n, sigma = int(cfg.grids["n"][0]), float(cfg.grids["sigma"][0])
    ds = make_dataset(mu, target, n, sigma, cfg.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(mu.dimension)] + ["y"])
    w.writerows(np.column_stack([ds.X.X, ds.Y]).tolist())
    out.add("csv", "dataset.csv", buf.getvalue(), f"dataset: {n} rows x {mu.dimension + 1} columns")
    out.add("data_json", "dataset.json", _json(ds.metadata()))
    return {"n": n, "d": mu.dimension}


def _degree_for(cfg, name, n, d):
    if cfg.degree == "auto":
        if name == "projection":
            sel = estimators.select_degree_projection(n, d, int(cfg.const("offset")))
        else:
            sel = estimators.select_degree_ls(n, d, cfg.const("c0"), cfg.const("C0"))
        return sel.m, sel.to_dict()
    m = int(cfg.degree if cfg.degree is not None else cfg.grids["m"][0])
    return m, None


def cmd_estimate(cfg, out, workers):
    if cfg.data:
        ds = read_dataset(cfg.data["csv"], cfg.data["json"])
    else:
        mu = cfg.measure_spec()
        ds = make_dataset(mu, _target(cfg, mu), int(cfg.grids["n"][0]), float(cfg.grids["sigma"][0]), cfg.seed)
    rows, reports = [], {}
    for name in cfg.estimators:
        m, sel = _degree_for(cfg, name, ds.n, ds.X.d)
        _check_capacity(cfg, ds.n, ds.X.d, m)
        fn = estimators.projection_estimate if name == "projection" else estimators.ls_estimate
        rep = fn(ds, m, memory_cap=cfg.cap("memory_bytes"))
        d = rep.to_dict()
        d.pop("timings")
        d["degree_selection"] = sel
        reports[name] = d
        for alpha, c in zip(rep.estimate.index_set.as_tuples(), rep.estimate.coeffs):
            rows.append([name, "-".join(map(str, alpha)), repr(float(c))])
    out.add("csv", "coefficients.csv", _csv(["estimator", "alpha", "coeff"], rows),
            f"coefficients: {len(rows)} rows over {len(reports)} estimators")
    out.add("json", "estimates.json", _json(reports))
    return {"estimators": list(reports)}


def cmd_risk_sweep(cfg, out, workers):
    mu = cfg.measure_spec()
    target = _target(cfg, mu)
    for n in cfg.grids["n"]:
        for m in cfg.grids["m"]:
            _check_capacity(cfg, int(n), mu.dimension, int(m))
    sc = risklab.SweepConfig(mu, target, tuple(int(n) for n in cfg.grids["n"]), tuple(int(m) for m in cfg.grids["m"]),
                             tuple(float(s) for s in cfg.grids["sigma"]), cfg.reps, cfg.seed,
                             tuple(cfg.estimators), cfg.n_ref, workers)
    rows = risklab.risk_sweep(sc)
    out.add("csv", "risk.csv", risklab.rows_to_csv(rows), f"risk: {len(rows)} rows")
    if "projection" in cfg.estimators and any(int(m) >= 1 for m in cfg.grids["m"]):
        fit = risklab.fit_projection_constant(rows)
        out.add("fit_json", "risk_fit.json", _json(fit.to_dict()),
                f"fitted constant C = {fit.C:.4g} +- {fit.stderr:.2g} over {fit.cells} cells")
    return {"rows": len(rows)}


def cmd_covdiag(cfg, out, workers):
    mu = cfg.measure_spec()
    d = mu.dimension
    n_grid = [int(n) for n in cfg.grids["n"]]
    parts, tails = [], []
    for m in cfg.grids["m"]:
        _check_capacity(cfg, max(n_grid), d, int(m))
        curve = covdiag.opnorm_deviation_curve(mu, d, int(m), n_grid, cfg.reps, cfg.seed, workers)
        text = curve.to_csv()
        parts.append(text if not parts else text.split("\n", 1)[1])
        D = curve.D
        tail = covdiag.lambda_min_tail(mu, d, int(m), max(50 * D, n_grid[0]), cfg.reps, cfg.seed, workers)
        tails.append({**tail.to_dict(), "opnorm_slope": curve.slope})
    csv_text = "".join(parts)
    out.add("csv", "covdiag.csv", csv_text, f"covdiag: {csv_text.count(chr(10)) - 1} rows")
    out.add("json", "covdiag.json", _json(tails), f"lambda_min tails: {len(tails)} records")
    return {"records": len(tails)}


def cmd_packing(cfg, out, workers):
    res = entropylab.build_packing(cfg.packing_config(workers))
    d = res.to_dict()
    out.add("json", "packing.json", _json(d), f"packing: N={res.N}, certified={res.certified}")
    out.add("csv", "packing_pairs.csv", res.pairs_csv(), f"packing pairs: {res.N * (res.N - 1) // 2} rows")
    return {"certified": res.certified}


def cmd_minimax(cfg, out, workers):
    d = cfg.measure_spec().dimension
    sigmas = cfg.grids.get("sigma", [1.0])
    rows = []
    for n in cfg.grids["n"]:
        for s in sigmas:
            b = entropylab.minimax_lower_bound(n, d, s, cfg.const("kappa"), cfg.const("eta"), cfg.const("c"))
            rows.append([n, d, repr(float(s)), repr(b.delta2), int(b.applicable), int(b.noise_in_range), int(b.n_in_range)])
    out.add("csv", "minimax.csv",
            _csv(["n", "d", "sigma", "delta2", "applicable", "noise_in_range", "n_in_range"], rows),
            f"minimax: {len(rows)} rows")
    return {"rows": len(rows)}


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "risk-sweep": cmd_risk_sweep,
    "covdiag": cmd_covdiag,
    "packing": cmd_packing,
    "minimax": cmd_minimax,
}


def run(cfg: ExperimentConfig, out_dir=".", workers=1, strict=False, stream=sys.stdout):
    out = Outputs(cfg, out_dir)
    result = HANDLERS[cfg.command](cfg, out, workers)
    manifest = {"config": cfg.to_dict(), "schema_version": SCHEMA_VERSION, "outputs": sorted(
        os.path.relpath(p, out_dir) for p in out.files)}
    out.add("manifest", "manifest.json", _json(manifest))
    out.commit()
    for line in out.summaries:
        print(line, file=stream)
    if strict and cfg.command == "packing" and not result["certified"]:
        print("packing certification failed", file=stream)
        return EXIT_CERT
    return EXIT_OK


def validate_report(cfg: ExperimentConfig):
    """Degree regimes, basis sizes and memory footprints the run would use, without running it."""
    warnings = []
    if cfg.command == "packing":
        p = cfg.packing_config()
        return [f"command: packing, measure: {p.measure_kind}, d = {p.d}, m = {p.m}",
                f"packing: D0 = {p.D0}, N = {p.family_size}, t = {p.smoothing_time:.6g}"], warnings
    d = cfg.measure_spec().dimension
    lines = [f"command: {cfg.command}, measure: {cfg.measure['kind']}, d = {d}"]
    n_grid = [int(n) for n in cfg.grids.get("n", [])]
    for n in n_grid:
        if n >= 2 and d >= 2:
            sp = estimators.select_degree_projection(n, d, int(cfg.const("offset")))
            sl = estimators.select_degree_ls(n, d, cfg.const("c0"), cfg.const("C0"))
            for name, sel in (("projection", sp), ("ls", sl)):
                D, nbytes = estimators.predicted_footprint(n, d, sel.m)
                lines.append(f"n = {n}: {name} {sel.regime}, m0 = {sel.m0}, m = {sel.m}, D = {D}, bytes = {nbytes}")
                if sel.regime == estimators.OUT_OF_RANGE:
                    warnings.append(f"n = {n}: {name} degree rule is out of range")
                if sel.clamped:
                    warnings.append(f"n = {n}: {name} degree clamped to 0")
        for m in cfg.grids.get("m", []):
            D, nbytes = estimators.predicted_footprint(n, d, int(m))
            lines.append(f"n = {n}, m = {m}: D = {D}, bytes = {nbytes}")
            if D > cfg.cap("max_D") or nbytes > cfg.cap("memory_bytes"):
                warnings.append(f"n = {n}, m = {m}: would be refused for capacity (D = {D}, bytes = {nbytes})")
    return lines, warnings


def build_parser():
    ap = argparse.ArgumentParser(prog="lipreg", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="action", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        if name == "run":
            p.add_argument("--threads", type=int, default=1)
            p.add_argument("--strict", action="store_true")
            p.add_argument("--out-dir", default=".")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.action == "validate":
        lines, warnings = validate_report(cfg)
        for line in lines:
            print(line)
        for w in warnings:
            print(f"warning: {w}")
        return EXIT_OK
    try:
        return run(cfg, args.out_dir, max(1, args.threads), args.strict)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ConfigurationError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LipregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
