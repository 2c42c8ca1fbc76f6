"""Command-line interface.

Exit codes: 0 success (no rejection for ``test``), 2 usage/validation error,
3 the trend test rejected.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    EvalGrid,
    SampleFormatError,
    TuningError,
    TuningParams,
    as_fraction,
    load_sample,
    validate_tuning,
    write_sample,
)
from .dgp import LogisticModel, MixtureSpec, ScedasisSpec, generate_dataset
from .estimator import BlockEstimates, derivative_u_max, trend_statistics
from .experiments import ConfigError, ExperimentConfig, run_experiment
from .trendtest import method_metadata, trend_test

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 2, 3

log = logging.getLogger("tailtrend")


def _unit_interval(name, low_open=True, high_open=False):
    def parse(text):
        value = float(text)
        lo_ok = value > 0 if low_open else value >= 0
        hi_ok = value < 1 if high_open else value <= 1
        if not (lo_ok and hi_ok):
            raise argparse.ArgumentTypeError(f"{name} out of range: {text}")
        return value
    return parse


def _bandwidth(text):
    try:
        h = as_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid bandwidth {text!r}") from None
    if not (0 < h <= 1):
        raise argparse.ArgumentTypeError(f"bandwidth out of range: {text}")
    return h


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailtrend", description="Time-varying tail dependence: estimation and trend tests.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a sample from the simulation design")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--theta", type=_unit_interval("theta"), required=True)
    p.add_argument("--lambda", dest="lam", type=_unit_interval("lambda", low_open=False), default=1.0)
    p.add_argument("--scedasis", choices=["m1", "m2", "m3"], type=str.lower, default="m1")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    def tuning_flags(q):
        q.add_argument("--input", type=Path, required=True)
        q.add_argument("--k", type=_positive_int, required=True)
        q.add_argument("--h", type=_bandwidth, required=True)
        q.add_argument("--T", type=float, default=1.0)
        q.add_argument("--grid-step", type=float, default=0.1)

    p = sub.add_parser("estimate", help="integrated tail copula, average surface and derivatives")
    tuning_flags(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("test", help="test for a constant tail copula")
    tuning_flags(p)
    p.add_argument("--alpha", type=_unit_interval("alpha", high_open=True), default=0.05)
    p.add_argument("--B", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--statistic", choices=["sup", "cvm", "both"], default="both")
    p.add_argument("--out", type=Path, default=None, help="also write the verdict JSON here")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override master_seed of the config")
    p.add_argument("--M", type=_positive_int, default=None, help="override the replication count")
    p.add_argument("--B", type=_positive_int, default=None, help="override the critical-value draws")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    return parser


def cmd_simulate(args) -> int:
    if args.seed is None:
        warnings.warn("no --seed given; using seed 0", stacklevel=1)
        args.seed = 0
    model = LogisticModel(args.theta)
    scedasis = ScedasisSpec.builtin(args.scedasis)
    sample = generate_dataset(args.n, model, scedasis, MixtureSpec(args.lam), args.seed)
    out = _mkdir(args.out)
    write_sample(sample, out / "sample.csv")
    meta = {"n": args.n, "theta": args.theta, "lambda": args.lam, "scedasis": scedasis.kind,
            "seed": args.seed, "marginal": "Frechet(1)", "copula": "Gumbel", "version": __version__}
    (out / "sample.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _prepare(args):
    sample = load_sample(args.input)
    params = TuningParams(args.k, args.h, args.T)
    report = validate_tuning(sample.n, params)
    for msg in report.warnings:
        log.warning(msg)
    grid = EvalGrid.default(params.h, params.T, args.grid_step)
    return sample, params, grid


def cmd_estimate(args) -> int:
    sample, params, grid = _prepare(args)
    u_max = max(derivative_u_max(params), grid.u_points[-1], grid.v_points[-1])
    blocks = BlockEstimates(sample, params, u_max)
    curve = blocks.integrated_curve(grid)
    surface = blocks.average_surface(grid.u, grid.v)
    r1, r2 = blocks.derivatives(grid.u, grid.v)
    out = _mkdir(args.out)

    with (out / "integrated_curve.csv").open("w", encoding="utf-8") as fh:
        fh.write("u,v,s,value\n")
        for iu, u in enumerate(grid.u_points):
            for iv, v in enumerate(grid.v_points):
                for i_s, s in enumerate(grid.s_points):
                    fh.write(_row(u, v, s, curve.values[iu, iv, i_s]))
    with (out / "average_surface.csv").open("w", encoding="utf-8") as fh:
        fh.write("u,v,s,value\n")
        for iu, u in enumerate(grid.u_points):
            for iv, v in enumerate(grid.v_points):
                fh.write(_row(u, v, 1.0, surface.values[iu, iv]))
            fh.write(_row(u, math.inf, 1.0, surface.u_border[iu]))
        for iv, v in enumerate(grid.v_points):
            fh.write(_row(math.inf, v, 1.0, surface.v_border[iv]))
    with (out / "derivatives.csv").open("w", encoding="utf-8") as fh:
        fh.write("u,v,r1,r2\n")
        for iu, u in enumerate(grid.u_points):
            for iv, v in enumerate(grid.v_points):
                fh.write(_row(u, v, r1[iu, iv], r2[iu, iv]))
    t_sup, t_cvm = trend_statistics(curve, params)
    meta = {**method_metadata(params, grid), "n": sample.n, "input": str(args.input),
            "T_sup": t_sup, "T_cvm": t_cvm, "version": __version__}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_test(args) -> int:
    sample, params, grid = _prepare(args)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    res = trend_test(sample, params, args.B, args.alpha, rng, grid)
    full = res.to_dict()
    keep = {"sup": ("T_sup", "c_sup", "reject_sup"), "cvm": ("T_cvm", "c_cvm", "reject_cvm")}
    chosen = ("sup", "cvm") if args.statistic == "both" else (args.statistic,)
    verdict = {key: full[key] for stat in chosen for key in keep[stat]}
    verdict.update({"alpha": args.alpha, "B": args.B, "seed": args.seed, "statistic": args.statistic,
                    "n": sample.n, **method_metadata(params, grid)})
    text = json.dumps(verdict, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        out = args.out
        if out.suffix != ".json":
            out = _mkdir(out) / "test.json"
        out.write_text(text + "\n", encoding="utf-8")
    rejected = any(verdict[f"reject_{stat}"] for stat in chosen)
    return EXIT_REJECT if rejected else EXIT_OK


def cmd_experiment(args) -> int:
    with args.config.open(encoding="utf-8") as fh:
        data = json.load(fh)
    for key, value in (("master_seed", args.seed), ("M", args.M), ("B", args.B)):
        if value is not None:
            data[key] = value
    config = ExperimentConfig.from_dict(data)
    report = run_experiment(config, threads=args.threads)
    for path in report.write(_mkdir(args.out), args.config.stem, svg=not args.no_svg):
        log.info("wrote %s", path)
    return EXIT_OK


def _row(*values) -> str:
    # plain float repr, so numpy scalars do not leak their type into the CSV
    return ",".join(repr(float(x)) for x in values) + "\n"


def _mkdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "test": cmd_test, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TuningError, SampleFormatError, ConfigError, ValueError, OSError) as exc:
        print(f"tailtrend {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
