"""Monte Carlo harness: endpoint normality, curve bands, size and power studies.

Every replication gets its own seed derived from ``(master_seed, config_id, rep)``
and replications are folded in index order, so reports do not depend on the
number of worker processes.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from scipy import stats

from .core import EvalGrid, TuningParams, as_fraction, validate_tuning
from .dgp import LogisticModel, MixtureSpec, ScedasisSpec, generate_dataset, true_integrated_curve
from .estimator import BlockEstimates
from .limit import analytic_variance_tdc
from .trendtest import trend_test

SCHEMA_VERSION = 1
KINDS = ("endpoint-normality", "curve-band", "size", "power")

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["kind", "n", "M"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": list(KINDS)},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "B": {"type": "integer", "minimum": 1},
        "k": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "h": {
            "type": "array",
            "items": {"anyOf": [{"type": "string", "pattern": r"^\s*\d+\s*(/\s*\d+\s*)?$"},
                                {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]},
            "minItems": 1,
        },
        "theta": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "minItems": 1},
        "lambda": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        "scedasis": {"type": "array", "items": {"enum": ["M1", "M2", "M3"]}, "minItems": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "grid_step": {"type": "number", "exclusiveMinimum": 0},
        "deriv_exponent": {"type": "number", "exclusiveMinimum": 0},
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int
    M: int
    B: int = 1000
    k: tuple[int, ...] = (200,)
    h: tuple[Fraction, ...] = (Fraction(1, 10),)
    theta: tuple[float, ...] = (0.5,)
    lam: tuple[float, ...] = (1.0,)
    scedasis: tuple[str, ...] = ("M1",)
    alpha: float = 0.05
    master_seed: int = 0
    T: float = 1.0
    grid_step: float = 0.1
    deriv_exponent: float = 0.2
    description: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.B < 1:
            raise ConfigError("B must be at least 1")
        object.__setattr__(self, "h", tuple(as_fraction(h) for h in self.h))
        for k, h in itertools.product(self.k, self.h):
            validate_tuning(self.n, TuningParams(k, h, self.T))
        if self.kind == "size" and any(lam != 1 for lam in self.lam):
            raise ConfigError("size experiments generate data under the null (lambda = 1)")
        if self.kind == "endpoint-normality" and any(t >= 1 for t in self.theta):
            raise ConfigError("endpoint normalisation is degenerate at theta = 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            lines = [f"/{'/'.join(str(p) for p in e.absolute_path)}: {e.message}" for e in errors]
            raise ConfigError("invalid experiment config:\n  " + "\n  ".join(lines))
        kwargs = {key: data[key] for key in ("kind", "n", "M", "B", "alpha", "master_seed", "T",
                                             "grid_step", "deriv_exponent", "description") if key in data}
        for key, attr in (("k", "k"), ("h", "h"), ("theta", "theta"), ("lambda", "lam"), ("scedasis", "scedasis")):
            if key in data:
                kwargs[attr] = tuple(data[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["h"] = [str(h) for h in self.h]
        d["lambda"] = list(d.pop("lam"))
        for key in ("k", "theta", "scedasis"):
            d[key] = list(d[key])
        return d

    def cells(self) -> list["Cell"]:
        return [
            Cell(theta, sced, lam, k, h)
            for theta, sced, lam, k, h in itertools.product(self.theta, self.scedasis, self.lam, self.k, self.h)
        ]


@dataclass(frozen=True)
class Cell:
    theta: float
    scedasis: str
    lam: float
    k: int
    h: Fraction

    @property
    def config_id(self) -> str:
        return f"theta={self.theta:g}|scedasis={self.scedasis}|lambda={self.lam:.6g}|k={self.k}|h={self.h}"

    def to_dict(self) -> dict:
        return {"config_id": self.config_id, "theta": self.theta, "scedasis": self.scedasis,
                "lambda": self.lam, "k": self.k, "h": str(self.h)}


def replication_seed(master_seed: int, config_id: str, rep: int) -> np.random.SeedSequence:
    digest = hashlib.sha256(config_id.encode()).digest()
    return np.random.SeedSequence([master_seed, int.from_bytes(digest[:8], "little"), rep])


# ---------------------------------------------------------------------------
# One replication


def _replicate(config: ExperimentConfig, cell: Cell, rep: int):
    data_ss, bridge_ss = replication_seed(config.master_seed, cell.config_id, rep).spawn(2)
    model = LogisticModel(cell.theta)
    sample = generate_dataset(config.n, model, ScedasisSpec.builtin(cell.scedasis), MixtureSpec(cell.lam), data_ss)
    params = TuningParams(cell.k, cell.h, config.T)

    if config.kind == "endpoint-normality":
        blocks = BlockEstimates(sample, params, 1.0)
        return float(blocks.average(1.0, 1.0))
    if config.kind == "curve-band":
        grid = EvalGrid.default(cell.h, config.T, config.grid_step)
        blocks = BlockEstimates(sample, params, 1.0)
        return blocks.integrate(blocks.block_values(1.0, 1.0), grid.s_points)
    grid = EvalGrid.default(cell.h, config.T, config.grid_step)
    res = trend_test(sample, params, config.B, config.alpha, np.random.default_rng(bridge_ss), grid,
                     config.deriv_exponent)
    return (res.T_sup, res.T_cvm, res.c_sup, res.c_cvm)


def _replicate_task(args):
    return _replicate(*args)


def _run_all(config: ExperimentConfig, threads: int = 1) -> list[list]:
    cells = config.cells()
    tasks = [(config, cell, rep) for cell in cells for rep in range(config.M)]
    if threads <= 1:
        flat = [_replicate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    return [flat[i * config.M:(i + 1) * config.M] for i in range(len(cells))]


# ---------------------------------------------------------------------------
# Aggregation


def _binomial(flags: np.ndarray) -> dict:
    count = int(flags.sum())
    rate = count / flags.size
    return {"rejections": count, "rate": rate, "se": math.sqrt(rate * (1 - rate) / flags.size)}


def _endpoint_record(config: ExperimentConfig, cell: Cell, values: list) -> dict:
    model = LogisticModel(cell.theta)
    mixture = MixtureSpec(cell.lam)
    truth = float(true_integrated_curve(model, mixture, 1.0))
    sigma2 = analytic_variance_tdc(cell.theta, mixture.weight)
    z = math.sqrt(cell.k) * (np.asarray(values) - truth) / math.sqrt(sigma2)
    rec = {**cell.to_dict(), "true_value": truth, "sigma2": sigma2, "normalized": z.tolist(),
           "mean_estimate": float(np.mean(values)),
           "relative_bias": float(np.mean(values) / truth - 1) if truth > 0 else None}
    if z.size > 1:
        rec.update(mean=float(z.mean()), variance=float(z.var(ddof=1)),
                   mean_se=float(z.std(ddof=1) / math.sqrt(z.size)),
                   ks_distance=float(stats.kstest(z, "norm").statistic))
    else:
        rec.update(mean=float(z[0]), variance=None, mean_se=None, ks_distance=None)
    return rec


def _jackknife_quantile_se(values: np.ndarray, q: float) -> np.ndarray:
    m = values.shape[0]
    if m < 2:
        return np.full(values.shape[1:], np.nan)
    loo = np.stack([np.quantile(np.delete(values, i, axis=0), q, axis=0) for i in range(m)])
    return np.sqrt((m - 1) / m * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


def _band_record(config: ExperimentConfig, cell: Cell, values: list) -> dict:
    grid = EvalGrid.default(cell.h, config.T, config.grid_step)
    arr = np.asarray(values)
    truth = true_integrated_curve(LogisticModel(cell.theta), MixtureSpec(cell.lam), grid.s)
    lo, hi = np.quantile(arr, 0.025, axis=0), np.quantile(arr, 0.975, axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0]) if arr.shape[0] > 1 else np.full(grid.s.size, np.nan)
    return {**cell.to_dict(), "s": list(grid.s_points), "mean": arr.mean(axis=0).tolist(),
            "mean_se": se.tolist(), "lower": lo.tolist(), "upper": hi.tolist(),
            "lower_se": _jackknife_quantile_se(arr, 0.025).tolist(),
            "upper_se": _jackknife_quantile_se(arr, 0.975).tolist(),
            "truth": np.asarray(truth).tolist(),
            "coverage": float(np.mean((lo <= truth) & (truth <= hi)))}


def _test_record(config: ExperimentConfig, cell: Cell, values: list) -> dict:
    arr = np.asarray(values)
    t_sup, t_cvm, c_sup, c_cvm = arr.T
    return {**cell.to_dict(), "M": config.M, "B": config.B, "alpha": config.alpha,
            "sup": _binomial(t_sup > c_sup), "cvm": _binomial(t_cvm > c_cvm),
            "mean_T_sup": float(t_sup.mean()), "mean_T_cvm": float(t_cvm.mean()),
            "mean_c_sup": float(c_sup.mean()), "mean_c_cvm": float(c_cvm.mean())}


_AGGREGATORS = {
    "endpoint-normality": _endpoint_record,
    "curve-band": _band_record,
    "size": _test_record,
    "power": _test_record,
}


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    records: list[dict]
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "config": self.config, "records": self.records}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def long_rows(self) -> list[tuple[str, str, float, float | None]]:
        """``(config_id, stat, value, se)`` rows for external plotting."""
        rows = []
        for rec in self.records:
            cid = rec["config_id"]
            if self.kind in ("size", "power"):
                rows.append((cid, "rate_sup", rec["sup"]["rate"], rec["sup"]["se"]))
                rows.append((cid, "rate_cvm", rec["cvm"]["rate"], rec["cvm"]["se"]))
            elif self.kind == "endpoint-normality":
                rows.append((cid, "mean", rec["mean"], rec["mean_se"]))
                rows.append((cid, "variance", rec["variance"], None))
                rows.append((cid, "ks_distance", rec["ks_distance"], None))
            else:
                for s, mean, se, lo, lo_se, hi, hi_se in zip(rec["s"], rec["mean"], rec["mean_se"], rec["lower"],
                                                              rec["lower_se"], rec["upper"], rec["upper_se"]):
                    rows.append((cid, f"mean@s={s:g}", mean, se))
                    rows.append((cid, f"lower@s={s:g}", lo, lo_se))
                    rows.append((cid, f"upper@s={s:g}", hi, hi_se))
        return rows

    def write(self, out_dir: str | Path, stem: str | None = None, svg: bool = True) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.kind
        paths = [out / f"{stem}.json", out / f"{stem}.csv", out / f"{stem}.timing.json"]
        paths[0].write_text(self.to_json() + "\n", encoding="utf-8")
        with paths[1].open("w", encoding="utf-8") as fh:
            fh.write("config_id,stat,value,se\n")
            for cid, stat, value, se in self.long_rows():
                fh.write(f"{cid},{stat},{_fmt(value)},{_fmt(se)}\n")
        paths[2].write_text(json.dumps(self.timing, indent=2) + "\n", encoding="utf-8")
        if svg:
            from .svgplot import report_svg

            path = out / f"{stem}.svg"
            path.write_text(report_svg(self), encoding="utf-8")
            paths.append(path)
        return paths


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    start = time.perf_counter()
    results = _run_all(config, threads)
    aggregate = _AGGREGATORS[config.kind]
    records = [aggregate(config, cell, values) for cell, values in zip(config.cells(), results)]
    elapsed = time.perf_counter() - start
    return ExperimentReport(config.kind, config.to_dict(), records,
                            {"seconds": elapsed, "threads": threads, "replications": config.M * len(records)})


def _require(config: ExperimentConfig, kind: str) -> None:
    if config.kind != kind:
        raise ConfigError(f"expected a {kind!r} config, got {config.kind!r}")


def run_endpoint_normality(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    _require(config, "endpoint-normality")
    return run_experiment(config, threads)


def run_curve_band(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    _require(config, "curve-band")
    return run_experiment(config, threads)


def run_size(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    _require(config, "size")
    return run_experiment(config, threads)


def run_power(config: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    _require(config, "power")
    return run_experiment(config, threads)
