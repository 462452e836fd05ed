"""Command-line interface.

Exit codes: 0 success, 2 usage or config error, 3 data or model error,
4 internal invariant violation. Errors are written to stderr as one JSON
object ``{"error": ..., "status": ...}``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import replace
from itertools import product

from . import kernels
from .benchmark import run_benchmark
from .metrics import MetricError, evaluate
from .search import TrainParams, alpha_grid, cross_validate, fit_with, train
from .sim import SimConfig, SimError, record_line, run_simulation, summarize
from .survival_core import DataError, IngestConfig, load_dataset, load_schema
from .tree_model import ModelError, check_schema, deserialize, objective, serialize, to_dot

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, status: int):
        super().__init__(message)
        self.status = status


# --------------------------------------------------------------------------
# helpers


def _read_text(path: str, what: str, status: int) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise CliError(f"{what} not found: {path}", status) from None
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror}", status) from None


def _read_json(path: str, what: str):
    text = _read_text(path, what, EXIT_USAGE)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} is not valid JSON: {exc.msg} (line {exc.lineno})", EXIT_USAGE) from None


def _write_text(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_data(args):
    categorical = {}
    if getattr(args, "schema", None):
        text = _read_text(args.schema, "schema", EXIT_USAGE)
        try:
            categorical = load_schema(text)
        except json.JSONDecodeError as exc:
            raise CliError(f"schema is not valid JSON: {exc.msg}", EXIT_USAGE) from None
    with_cfg = IngestConfig(args.time_col, args.event_col, categorical)
    try:
        with open(args.data, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise CliError(f"data not found: {args.data}", EXIT_DATA) from None
    return load_dataset(raw, with_cfg)


def _load_model(path: str):
    return deserialize(_read_text(path, "model", EXIT_DATA))


def _config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    cfg = _read_json(args.config, "config")
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object", EXIT_USAGE)
    return cfg


def _parse_depths(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = str(value).split(",")
    try:
        depths = [int(v) for v in items]
    except ValueError:
        raise CliError(f"invalid --max-depth {value!r}", EXIT_USAGE) from None
    if not depths or min(depths) < 1:
        raise CliError("max depth must be >= 1", EXIT_USAGE)
    return depths


def _parse_alpha(value):
    if value == "auto":
        return "auto"
    try:
        a = float(value)
    except (TypeError, ValueError):
        raise CliError(f"invalid --alpha {value!r} (number or 'auto')", EXIT_USAGE) from None
    if not math.isfinite(a) or a < 0:
        raise CliError("invalid complexity parameter", EXIT_USAGE)
    return a


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = _config(args)
    settings = {
        "max_depth": args.max_depth, "min_bucket": args.min_bucket, "restarts": args.restarts,
        "alpha": args.alpha, "seed": args.seed, "folds": args.folds, "max_sweeps": args.max_sweeps,
        "trainer": args.trainer,
    }
    unknown = set(cfg) - set(settings)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_USAGE)
    settings.update(cfg)
    if settings["seed"] is None:
        raise CliError("training is randomised: pass --seed or set seed in --config", EXIT_USAGE)
    if settings["trainer"] not in ("ost", "greedy"):
        raise CliError(f"unknown trainer {settings['trainer']!r}", EXIT_USAGE)
    depths = _parse_depths(settings["max_depth"])
    alpha = _parse_alpha(settings["alpha"])
    try:
        params = TrainParams(
            max_depth=depths[0], min_bucket=int(settings["min_bucket"]), restarts=int(settings["restarts"]),
            alpha=alpha, seed=int(settings["seed"]), max_sweeps=int(settings["max_sweeps"]),
            folds=int(settings["folds"]),
        ).validate()
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from None

    data = _load_data(args)
    trainer = settings["trainer"]
    if len(depths) > 1 or (alpha == "auto" and trainer == "greedy"):
        if data.n < 10 * params.min_bucket:
            warnings.warn("too few observations to cross-validate; using alpha=0", stacklevel=1)
            grid = [0.0] if alpha == "auto" else [alpha]
            params = replace(params, max_depth=max(depths), alpha=grid[0])
        else:
            grid = alpha_grid(data) if alpha == "auto" else [alpha]
            params = cross_validate(data, depths, grid, params.folds, params, trainer)
        tree = fit_with(data, params, trainer)
    elif trainer == "greedy":
        tree = fit_with(data, params, "greedy")
    else:
        tree, traces = train(data, params)
        if args.trace:
            _write_text(args.trace, _traces_csv(traces))
    _write_text(args.out, serialize(tree) + "\n")
    _emit({
        "objective": objective(tree, data),
        "n_leaves": tree.n_leaves,
        "alpha": tree.alpha,
        "max_depth": params.max_depth,
        "trainer": trainer,
        "model": args.out,
    })
    return EXIT_OK


def _traces_csv(traces) -> str:
    lines = ["restart,sweep,objective"]
    for t in traces:
        lines.append(f"{t.restart},0,{t.initial_objective!r}")
        lines += [f"{t.restart},{i},{v!r}" for i, v in enumerate(t.objectives, start=1)]
    return "\n".join(lines) + "\n"


def cmd_predict(args) -> int:
    tree = _load_model(args.model)
    data = _load_data(args)
    check_schema(tree, data)
    times = []
    if args.times:
        try:
            times = [float(t) for t in args.times.split(",")]
        except ValueError:
            raise CliError(f"invalid --times {args.times!r}", EXIT_USAGE) from None
    leaves = tree.apply(data.X)
    header = ["row", "leaf", "theta"] + [f"S({t!r})" for t in times]
    lines = [",".join(header)]
    for i, k in enumerate(leaves.tolist()):
        nd = tree.nodes[k]
        row = [str(i), str(k), repr(float(nd.theta))]
        row += [repr(float(nd.curve(t))) for t in times]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    tree = _load_model(args.model)
    data = _load_data(args)
    check_schema(tree, data)
    report = evaluate(tree, data, args.tau)
    if args.out:
        _write_text(args.out, report.to_csv())
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def _expand_sim_configs(cfg: dict, seed_override):
    """Lists under ``n_train`` or ``censoring`` expand into a grid."""
    cfg = dict(cfg)
    if seed_override is not None:
        cfg["seed"] = seed_override
    if "seed" not in cfg:
        raise CliError("simulation is randomised: pass --seed or set seed in --config", EXIT_USAGE)
    axes = {}
    for key in ("n_train", "censoring"):
        v = cfg.get(key)
        axes[key] = list(v) if isinstance(v, list) else [v] if key in cfg else [None]
    out = []
    for n_train, cens in product(axes["n_train"], axes["censoring"]):
        c = dict(cfg)
        if n_train is not None:
            c["n_train"] = n_train
        if cens is not None:
            c["censoring"] = cens
        try:
            out.append(SimConfig.from_dict(c))
        except (SimError, TypeError, ValueError) as exc:
            raise CliError(f"invalid config: {exc}", EXIT_USAGE) from None
    return out


def cmd_simulate(args) -> int:
    if args.repetitions < 1:
        raise CliError("repetitions must be >= 1", EXIT_USAGE)
    configs = _expand_sim_configs(_config(args), args.seed)
    os.makedirs(args.out, exist_ok=True)
    records = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for base in configs:
            for r in range(args.repetitions):
                records.append(run_simulation(replace(base, seed=base.seed + r)))
    _write_text(os.path.join(args.out, "records.jsonl"), "".join(record_line(r) + "\n" for r in records))
    _write_text(os.path.join(args.out, "summary.csv"), summarize(records))
    _emit({"records": len(records), "out": args.out})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.seed is None:
        raise CliError("benchmark data is randomised: pass --seed", EXIT_USAGE)
    result = run_benchmark(n=args.n, repeats=args.repetitions, seed=args.seed)
    _emit(result)
    return EXIT_OK if result["backends_agree"] else EXIT_INVARIANT


def cmd_export_dot(args) -> int:
    tree = _load_model(args.model)
    text = to_dot(tree)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_data_flags(p, schema=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    if schema:
        p.add_argument("--schema", help="JSON sidecar declaring categorical columns")
    p.add_argument("--time-col", default="time", help="name of the time column (default: time)")
    p.add_argument("--event-col", default="event", help="name of the event column (default: event)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optsurv", description="Survival trees fitted by coordinate-descent search.")
    parser.add_argument("--backend", choices=["compiled", "python"], help="force a kernel backend")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a survival tree")
    _add_data_flags(p)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--seed", type=int, help="random seed (required here or in --config)")
    p.add_argument("--alpha", default="auto", help="complexity parameter: a number or 'auto' (default)")
    p.add_argument("--max-depth", default="3", help="depth limit, root = 1; a comma list cross-validates")
    p.add_argument("--min-bucket", type=int, default=5)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-sweeps", type=int, default=100)
    p.add_argument("--trainer", choices=["ost", "greedy"], default="ost")
    p.add_argument("--trace", help="write per-sweep objectives (CSV)")
    p.add_argument("--config", help="JSON object overriding the flags above")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="leaf, theta and survival probabilities per row")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--times", help="comma list of times at which to report S(t)")
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metric report of a model on a dataset")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--tau", type=float, help="horizon for the Brier point score and Uno's C (default: median time)")
    p.add_argument("--out", help="also write the report as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="run the ground-truth simulation study")
    p.add_argument("--config", required=True, help="simulation config JSON")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--seed", type=int, help="first seed; repetitions use seed, seed+1, ...")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="time the compiled and numpy kernels")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("export-dot", help="Graphviz rendering of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="DOT output (default: stdout)")
    p.set_defaults(func=cmd_export_dot)
    return parser


def _fail(message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": message, "status": status}) + "\n")
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.backend:
            kernels.set_backend(args.backend)
        return args.func(args)
    except CliError as exc:
        return _fail(str(exc), exc.status)
    except (DataError, ModelError, MetricError) as exc:
        return _fail(str(exc), EXIT_DATA)
    except SimError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except RuntimeError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except (AssertionError, FloatingPointError) as exc:
        return _fail(f"internal invariant violated: {exc}", EXIT_INVARIANT)


if __name__ == "__main__":
    sys.exit(main())
