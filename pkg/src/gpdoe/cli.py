"""Command-line entry point: ``gpdoe <subcommand> ...``.

Exit codes: 0 success, 2 argument error, 3 data error, 4 numerical error.
Failures print one JSON object ``{"error": <category>, "message": ...}`` on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import secrets
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from gpdoe import __version__, criteria, experiments, testfns
from gpdoe._io import atomic_write_text, sha256_file
from gpdoe.design import (
    generate_hammersley,
    generate_lhs,
    generate_srs,
    load_design,
    make_rng,
    read_points_csv,
    save_design,
    scale_to_domain,
    to_unit,
)
from gpdoe.errors import ArgumentError, DataError, GpdoeError
from gpdoe.gp import FitOptions, GpModel, fit
from gpdoe.optimize import AnnealConfig, anneal_lhs, optimized_lhs
from gpdoe.validate import (
    evaluate_unit,
    q2_cross_validation,
    q2_loo,
    q2_sequential,
    q2_test_sample,
)

log = logging.getLogger("gpdoe")

_CATEGORY = {2: "argument", 3: "data", 4: "numerical"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "argument", "message": message}) + "\n")
        raise SystemExit(2)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("DOE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgumentError(f"DOE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _seed(args) -> int:
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(63)
    return args.seed


def _parse_bounds(text: str | None, d: int):
    if text is None:
        return None
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
    except ValueError:
        raise ArgumentError(f"bounds must look like 'lo:hi,lo:hi', got {text!r}") from None
    if len(pairs) == 1:
        pairs = pairs * d
    if any(len(p) != 2 for p in pairs) or len(pairs) != d:
        raise ArgumentError(f"need {d} 'lo:hi' intervals, got {text!r}")
    return pairs


def _write_values_csv(path, header, columns) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([format(float(v), ".17g") for v in row])
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        atomic_write_text(path, buf.getvalue())


def _check_domain(fn, bounds) -> None:
    if not np.allclose(np.asarray(fn.bounds, dtype=float), bounds, rtol=0, atol=1e-12):
        raise ArgumentError(f"{fn.name} is defined on {list(fn.bounds)}, the design domain is {bounds.tolist()}; "
                            "generate the design with matching --bounds")


def _read_outputs(path) -> np.ndarray:
    data = read_points_csv(path)
    if data.shape[1] != 1:
        raise DataError(f"{path}: expected a single output column, got {data.shape[1]}")
    return data[:, 0]


# ------------------------------------------------------------- commands


def cmd_design(args):
    seed = _seed(args) if args.kind != "hammersley" else None
    if args.kind == "srs":
        design = generate_srs(args.n, args.d, make_rng(seed))
    elif args.kind == "lhs":
        design = generate_lhs(args.n, args.d, make_rng(seed))
    else:
        design = generate_hammersley(args.n, args.d)
    bounds = _parse_bounds(args.bounds, args.d)
    if bounds is not None:
        design = scale_to_domain(design, bounds)
    design = replace(design, seed=seed)
    save_design(design, args.out)
    return [args.out], {"kind": design.kind, "n": design.n, "d": design.d, "seed": seed}


def _anneal_config(args) -> AnnealConfig:
    data = {}
    if args.config:
        data.update(json.loads(Path(args.config).read_text()))
    overrides = {
        "criterion": args.criterion,
        "initial_temperature": args.initial_temperature,
        "cooling_factor": args.cooling_factor,
        "iterations_per_temperature": args.iterations,
        "total_temperature_steps": args.steps,
        "initial_jitter": args.jitter,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["seed"] = _seed(args)
    return AnnealConfig.from_dict(data)


def cmd_optimize(args):
    config = _anneal_config(args)
    if args.initial:
        design, trace = anneal_lhs(load_design(args.initial), config)
    else:
        if args.n is None or args.d is None:
            raise ArgumentError("optimize needs --n and --d, or --initial")
        design, trace = optimized_lhs(args.n, args.d, config)
        bounds = _parse_bounds(args.bounds, args.d)
        if bounds is not None:
            design = scale_to_domain(design, bounds)
    save_design(design, args.out)
    outputs = [args.out]
    if args.trace_csv:
        atomic_write_text(args.trace_csv, trace.to_csv())
        outputs.append(args.trace_csv)
    best = trace.best[-1] if len(trace) else criteria.evaluate(design, config.criterion).value
    return outputs, {"config": config.to_dict(), "best": best}


def cmd_criteria(args):
    design = load_design(args.input)
    kinds = args.kind or list(criteria.KINDS)
    lines = [json.dumps(criteria.evaluate(design, k).as_dict()) for k in kinds]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        return [args.out], {}
    sys.stdout.write(text)
    return [], {}


def cmd_eval(args):
    fn = testfns.get(args.function)
    x = read_points_csv(args.input)
    y = fn(x)
    _write_values_csv(args.out, ["y"], [y])
    return [args.out] if args.out not in (None, "-") else [], {"function": fn.name, "n": len(y)}


def _fit_options(args) -> FitOptions:
    data = {}
    if getattr(args, "fit_config", None):
        data.update(json.loads(Path(args.fit_config).read_text()))
    if args.p_mode:
        data["p_mode"] = args.p_mode
    if args.starts:
        data["n_starts"] = args.starts
    data["seed"] = _seed(args)
    data.setdefault("threads", _threads(args))
    return FitOptions.from_dict(data)


def cmd_fit(args):
    design = load_design(args.design)
    if args.outputs:
        y = _read_outputs(args.outputs)
    elif args.function:
        fn = testfns.get(args.function)
        _check_domain(fn, design.bounds)
        y = evaluate_unit(fn, design.points)
    else:
        raise ArgumentError("fit needs --outputs or --function")
    options = _fit_options(args)
    model = fit(design, y, options)
    model.save(args.out)
    return [args.out], {"fit_options": asdict(options),
                        "log_likelihood": model.log_likelihood}


def cmd_predict(args):
    model = GpModel.load(args.model)
    x = read_points_csv(args.input)
    mean, var = model.predict(to_unit(x, model.learning_design.bounds))
    _write_values_csv(args.out, ["mean", "variance"], [np.atleast_1d(mean), np.atleast_1d(var)])
    return [args.out] if args.out not in (None, "-") else [], {"n": int(x.shape[0])}


def cmd_validate(args):
    model = GpModel.load(args.model)
    design, y = model.learning_design, model.learning_outputs
    fn = testfns.get(args.function) if args.function else None
    seed = _seed(args)
    if args.method in ("mc", "lhs", "sequential") and fn is None:
        raise ArgumentError(f"--method {args.method} needs --function")
    if fn is not None:
        if fn.dimension != model.d:
            raise ArgumentError(f"{fn.name} has {fn.dimension} inputs, the model {model.d}")
        _check_domain(fn, design.bounds)
    rng = make_rng(seed)
    if args.method == "mc":
        report = q2_test_sample(model, fn, generate_srs(args.n_test, model.d, rng))
    elif args.method == "lhs":
        report = q2_test_sample(model, fn, generate_lhs(args.n_test, model.d, rng))
    elif args.method == "sequential":
        report = q2_sequential(model, fn, args.n_test, args.pool_size)
    else:
        options = _fit_options(args)
        if args.method == "loo":
            report = q2_loo(design, y, options)
        else:
            report = q2_cross_validation(design, y, options, k=args.folds, rng=rng)
    atomic_write_text(args.out, report.to_json())
    outputs = [args.out]
    if args.trace_csv:
        atomic_write_text(args.trace_csv, report.trace_csv())
        outputs.append(args.trace_csv)
    return outputs, {"q2": report.q2, "method": report.method}


def cmd_bench(args):
    study = {"fit-comparison": "fit_comparison", "projection": "projection", "validation": "validation"}[args.study]
    if args.config is None:
        name = {"fit_comparison": "fit_irregular", "projection": "projection", "validation": "validation_cosin2"}[study]
        config = experiments.builtin_config(name)
    elif Path(args.config).exists():
        config = experiments.ExperimentConfig.load(args.config)
    else:
        config = experiments.builtin_config(args.config)
    if config.study != study:
        raise ArgumentError(f"config describes study {config.study!r}, not {study!r}")
    if args.paper_scale:
        config = experiments.paper_scale(config)
    if args.repetitions:
        config = replace(config, repetitions=args.repetitions)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    args.seed = config.seed
    out = Path(args.out)
    result = experiments.run_to_directory(config, out, threads=_threads(args), version=__version__)
    return [out / "results.csv", out / "summary.csv"], {"config": config.to_dict(), "records": len(result.records)}


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gpdoe", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gpdoe {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="worker bound (default: $DOE_THREADS or CPU count)")
    parser.add_argument("--manifest", default=None, help="manifest path (default: <primary output>.manifest.json)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("design", help="generate an SRS, LHS or Hammersley design")
    p.add_argument("--kind", choices=["srs", "lhs", "hammersley"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--bounds", help="physical domain, 'lo:hi' for all or 'lo:hi,lo:hi,...' (write --bounds=-1:1 for negative bounds)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("optimize", help="anneal a Latin hypercube under a criterion")
    p.add_argument("--criterion", default=None, help="maximin | centered | wraparound")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--initial", help="start from this LHS design CSV instead of a random one")
    p.add_argument("--config", help="annealing JSON config (defaults are the shipped schedule)")
    p.add_argument("--initial-temperature", type=float)
    p.add_argument("--cooling-factor", type=float)
    p.add_argument("--iterations", type=int, help="moves per temperature")
    p.add_argument("--steps", type=int, help="number of temperature steps")
    p.add_argument("--jitter", type=int, help="random moves applied before annealing")
    p.add_argument("--bounds")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-csv")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("criteria", help="score a design")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", action="append", type=criteria.criterion_kind,
                   help="maximin | centered | wraparound (repeatable; default all)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_criteria)

    p = sub.add_parser("eval", help="evaluate a benchmark function on a points CSV")
    p.add_argument("--function", required=True, choices=sorted(testfns.REGISTRY))
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    def fit_flags(p):
        p.add_argument("--p-mode", choices=["estimate", "gaussian", "exponential"])
        p.add_argument("--starts", type=int, help="multi-start count")
        p.add_argument("--fit-config", help="JSON with FitOptions fields")

    p = sub.add_parser("fit", help="fit a GP model by maximum likelihood")
    p.add_argument("--design", required=True)
    p.add_argument("--outputs", help="single-column CSV of outputs")
    p.add_argument("--function", choices=sorted(testfns.REGISTRY), help="evaluate outputs with this function")
    p.add_argument("--seed", type=int)
    fit_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="kriging mean and variance at points")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate", help="estimate the predictivity coefficient Q2")
    p.add_argument("--model", required=True)
    p.add_argument("--function", choices=sorted(testfns.REGISTRY))
    p.add_argument("--method", choices=["mc", "lhs", "loo", "cv", "sequential"], required=True)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--pool-size", type=int, default=10000)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int)
    fit_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trace-csv")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="run a replicated benchmark study")
    p.add_argument("study", choices=["fit-comparison", "projection", "validation"])
    p.add_argument("--config", help=f"JSON path or builtin: {', '.join(experiments.builtin_config_names())}")
    p.add_argument("--paper-scale", action="store_true", help="100 repetitions")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="bench-out")
    p.set_defaults(func=cmd_bench)
    return parser


def _input_paths(args) -> list[str]:
    return [getattr(args, a) for a in ("input", "design", "outputs", "model", "initial", "config", "fit_config")
            if getattr(args, a, None) and Path(getattr(args, a)).is_file()]


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, set)):
        return list(v)
    return str(v)


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        outputs, extra = args.func(args)
    except GpdoeError as exc:
        sys.stderr.write(json.dumps({"error": _CATEGORY.get(exc.exit_code, "error"), "message": str(exc)}) + "\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        sys.stderr.write(json.dumps({"error": "argument", "message": str(exc)}) + "\n")
        return 2

    manifest_path = args.manifest or (f"{outputs[0]}.manifest.json" if outputs else None)
    if manifest_path:
        resolved = {k: v for k, v in vars(args).items() if k not in ("func", "manifest")}
        manifest = {
            "subcommand": args.command,
            "config": resolved | extra,
            "seed": getattr(args, "seed", None),
            "version": __version__,
            "inputs": {p: sha256_file(p) for p in _input_paths(args)},
            "outputs": [str(o) for o in outputs],
            "duration_seconds": round(time.time() - started, 3),
        }
        atomic_write_text(manifest_path, json.dumps(manifest, indent=2, default=_jsonable) + "\n")
    return 0


def main() -> None:  # pragma: no cover
    raise SystemExit(dispatch())


if __name__ == "__main__":  # pragma: no cover
    main()
