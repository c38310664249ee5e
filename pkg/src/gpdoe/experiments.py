"""Replicated benchmark studies emitting long-format CSV.

Three studies are available:

* ``fit_comparison``: Q2 of GP models fitted on different design kinds, over
  a grid of learning sizes.
* ``projection``: full-design criterion vs. its worst and mean value over
  all 2D coordinate projections, over a grid of dimensions.
* ``validation``: reference Q2, leave-one-out, sequential-design Q2 and
  random test-design envelopes, over a grid of growing learning sizes.

Every cell draws its random streams from a ``SeedSequence`` keyed by
(study, replicate, design kind, size), so results do not depend on the
execution order or on the number of workers. Completed cells found in an
existing output directory are reused.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from gpdoe import criteria, testfns
from gpdoe._io import atomic_write_text
from gpdoe.design import Design, generate_hammersley, generate_lhs, generate_srs, make_rng, project
from gpdoe.errors import ArgumentError, GpdoeError
from gpdoe.gp import FitOptions, fit
from gpdoe.optimize import AnnealConfig, augment_by_mean_distance, optimized_lhs
from gpdoe.validate import evaluate_unit, q2, q2_loo, running_q2, sequential_validation_design

log = logging.getLogger(__name__)

STUDIES = ("fit_comparison", "projection", "validation")
_STUDY_CODE = {"fit_comparison": 1, "projection": 2, "validation": 3}
FIELDS = ("replicate", "design_kind", "n", "d", "metric", "value")

# design kind -> annealing criterion (None: not optimized)
DESIGN_KINDS = {
    "srs": None,
    "lhs": None,
    "wlhs": criteria.WRAPAROUND_L2,
    "clhs": criteria.CENTERED_L2,
    "maximin": criteria.MAXIMIN,
}


@dataclass(frozen=True)
class ExperimentConfig:
    study: str
    function: str | None = None
    design_kinds: tuple[str, ...] = ("lhs", "wlhs")
    sizes: tuple[int, ...] = (10,)
    repetitions: int = 20
    seed: int = 0
    # fit_comparison
    n_mc_test: int = 10000
    # projection
    n_points: int = 100
    # validation
    test_sizes: tuple[int, ...] = (10, 20, 30, 40, 50)
    reference_samples: int = 100
    reference_size: int = 1000
    envelope_repetitions: int = 100
    test_designs: tuple[str, ...] = ("mc", "lhs")
    test_lhs_optimized: bool = True
    pool_size: int = 10000
    loo: bool = True
    # shared
    anneal: dict = field(default_factory=dict)
    test_anneal: dict = field(default_factory=lambda: {"iterations_per_temperature": 20, "total_temperature_steps": 20})
    fit_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ArgumentError(f"unknown study {self.study!r}; choose from {STUDIES}")
        for name in ("design_kinds", "sizes", "test_sizes", "test_designs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.repetitions < 1:
            raise ArgumentError("repetitions must be >= 1")
        for name in ("sizes", "test_sizes"):
            grid = getattr(self, name)
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
                raise ArgumentError(f"{name} must be a non-empty strictly increasing grid")
        if self.study != "projection" and self.function is None:
            raise ArgumentError(f"study {self.study} needs a function")
        if self.function is not None:
            testfns.get(self.function)
        if self.study == "validation":
            for kind in self.design_kinds:
                base = kind.removesuffix("_augmented")
                if base not in DESIGN_KINDS:
                    raise ArgumentError(f"unknown design kind {kind!r}")
            if any(t not in ("mc", "lhs") for t in self.test_designs):
                raise ArgumentError("test_designs must be drawn from ('mc', 'lhs')")
        else:
            for kind in self.design_kinds:
                if kind not in DESIGN_KINDS:
                    raise ArgumentError(f"unknown design kind {kind!r}")
        if self.study == "projection" and any(DESIGN_KINDS[k] is None for k in self.design_kinds):
            raise ArgumentError("the projection study compares optimized designs only")
        AnnealConfig.from_dict(dict(self.anneal))
        FitOptions.from_dict(dict(self.fit_options))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @property
    def metrics(self) -> tuple[str, ...]:
        if self.study == "fit_comparison":
            return ("q2",)
        if self.study == "projection":
            return ("full", "worst_2d", "mean_2d")
        names = ["q2_ref"]
        if self.loo:
            names.append("q2_loo")
        names += [f"q2_seq@{t}" for t in self.test_sizes]
        for td in self.test_designs:
            for stat in ("min", "max", "q05", "q95", "mean"):
                names += [f"q2_{td}_{stat}@{t}" for t in self.test_sizes]
        return tuple(names)


def builtin_config(name: str) -> ExperimentConfig:
    text = resources.files("gpdoe").joinpath(f"data/bench/{name}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def builtin_config_names() -> list[str]:
    root = resources.files("gpdoe").joinpath("data/bench")
    return sorted(p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json"))


@dataclass
class StudyResult:
    config: ExperimentConfig
    records: list[dict]
    diagnostics: list[str] = field(default_factory=list)

    def values(self, design_kind: str, n: int, metric: str) -> np.ndarray:
        return np.array([r["value"] for r in self.records
                         if r["design_kind"] == design_kind and r["n"] == n and r["metric"] == metric])

    def to_csv(self) -> str:
        return records_to_csv(self.records)

    def summary_csv(self) -> str:
        return summarize(self.records)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow([r["replicate"], r["design_kind"], r["n"], r["d"], r["metric"], _fmt(r["value"])])
    return buf.getvalue()


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def read_records(path: str | os.PathLike) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "replicate": int(row["replicate"]),
                "design_kind": row["design_kind"],
                "n": int(row["n"]),
                "d": int(row["d"]),
                "metric": row["metric"],
                "value": float(row["value"]) if row["value"] else float("nan"),
            })
    return out


def summarize(records) -> str:
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r["design_kind"], r["n"], r["d"], r["metric"]), []).append(r["value"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["design_kind", "n", "d", "metric", "count", "missing", "mean", "sd",
                "min", "q05", "q25", "median", "q75", "q95", "max"])
    for key in sorted(groups):
        v = np.array(groups[key], dtype=float)
        ok = v[~np.isnan(v)]
        if ok.size:
            qs = np.quantile(ok, [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
            stats = [ok.mean(), ok.std(ddof=1) if ok.size > 1 else 0.0, *qs]
        else:
            stats = [float("nan")] * 9
        w.writerow([*key, ok.size, v.size - ok.size, *(_fmt(s) for s in stats)])
    return buf.getvalue()


# ------------------------------------------------------------------ seeds


def _kind_code(kind: str) -> int:
    return zlib.crc32(kind.encode())


def cell_seed(config: ExperimentConfig, replicate: int, kind: str, size: int, stream: str = "") -> np.random.SeedSequence:
    key = (_STUDY_CODE[config.study], replicate, _kind_code(kind), size, zlib.crc32(stream.encode()))
    return np.random.SeedSequence(entropy=config.seed, spawn_key=key)


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _anneal_config(config: ExperimentConfig, criterion: str, ss: np.random.SeedSequence, overrides=None) -> AnnealConfig:
    opts = dict(config.anneal if overrides is None else overrides)
    opts["criterion"] = criterion
    opts["seed"] = _int_seed(ss)
    return AnnealConfig.from_dict(opts)


def _fit_options(config: ExperimentConfig, ss: np.random.SeedSequence) -> FitOptions:
    opts = dict(config.fit_options)
    opts.setdefault("seed", _int_seed(ss))
    return FitOptions.from_dict(opts)


def make_design(config: ExperimentConfig, kind: str, n: int, d: int, ss: np.random.SeedSequence) -> Design:
    crit = DESIGN_KINDS[kind]
    if kind == "srs":
        return generate_srs(n, d, make_rng(ss))
    if crit is None:
        return generate_lhs(n, d, make_rng(ss))
    return optimized_lhs(n, d, _anneal_config(config, crit, ss))[0]


# ------------------------------------------------------------------ cells


def _record(rep, kind, n, d, metric, value) -> dict:
    return {"replicate": rep, "design_kind": kind, "n": n, "d": d, "metric": metric, "value": float(value)}


def _fit_cell(config: ExperimentConfig, rep: int, kind: str, n: int):
    fn = testfns.get(config.function)
    d = fn.dimension
    design = make_design(config, kind, n, d, cell_seed(config, rep, kind, n, "design"))
    y = evaluate_unit(fn, design.points)
    # the test sample depends on (replicate, n) only, so kinds are compared on the same points
    test = make_rng(cell_seed(config, rep, "", n, "test")).random((config.n_mc_test, d))
    try:
        model = fit(design, y, _fit_options(config, cell_seed(config, rep, kind, n, "fit")))
        value = q2(evaluate_unit(fn, test), model.predict(test)[0])
        diag = []
    except GpdoeError as exc:
        value = float("nan")
        diag = [f"fit_comparison rep={rep} kind={kind} n={n}: {type(exc).__name__}: {exc}"]
    return [_record(rep, kind, n, d, "q2", value)], diag


def _projection_values(design: Design, crit: str) -> tuple[float, float, float]:
    full = criteria.evaluate(design, crit).value
    vals = [criteria.evaluate(project(design, pair), crit).value
            for pair in itertools.combinations(range(design.d), 2)]
    worst = min(vals) if crit == criteria.MAXIMIN else max(vals)
    return full, worst, float(np.mean(vals))


def _projection_cell(config: ExperimentConfig, rep: int, kind: str, d: int):
    crit = DESIGN_KINDS[kind]
    design = make_design(config, kind, config.n_points, d, cell_seed(config, rep, kind, d, "design"))
    full, worst, mean = _projection_values(design, crit)
    n = config.n_points
    return [_record(rep, kind, n, d, "full", full),
            _record(rep, kind, n, d, "worst_2d", worst),
            _record(rep, kind, n, d, "mean_2d", mean)], []


def growing_designs(config: ExperimentConfig, kind: str, d: int, rep: int, pool: np.ndarray) -> list[Design]:
    """Initial optimized LHS of the first grid size, augmented greedily by mean distance."""
    base = kind.removesuffix("_augmented")
    first = config.sizes[0]
    design = make_design(config, base, first, d, cell_seed(config, rep, kind, first, "design"))
    designs = [design]
    for n in config.sizes[1:]:
        design = augment_by_mean_distance(design, _remaining(pool, design.points), n - design.n)
        designs.append(design)
    return designs


def _remaining(pool: np.ndarray, used: np.ndarray) -> np.ndarray:
    used_rows = {row.tobytes() for row in used}
    keep = [i for i, row in enumerate(pool) if row.tobytes() not in used_rows]
    return pool[keep]


def _envelope(samples: np.ndarray) -> dict[str, float]:
    ok = samples[~np.isnan(samples)]
    if ok.size == 0:
        return dict.fromkeys(("min", "max", "q05", "q95", "mean"), float("nan"))
    return {"min": ok.min(), "max": ok.max(), "q05": np.quantile(ok, 0.05),
            "q95": np.quantile(ok, 0.95), "mean": ok.mean()}


def _safe_q2(y, yhat) -> float:
    try:
        return q2(y, yhat)
    except GpdoeError:
        return float("nan")


def _validation_cell(config: ExperimentConfig, rep: int, kind: str, _size: int = 0):
    fn = testfns.get(config.function)
    d = fn.dimension
    pool = generate_hammersley(config.pool_size, d).points
    records, diag = [], []
    nt_max = config.test_sizes[-1]
    for design in growing_designs(config, kind, d, rep, pool):
        n = design.n
        y = evaluate_unit(fn, design.points)
        out = dict.fromkeys(config.metrics, float("nan"))
        try:
            model = fit(design, y, _fit_options(config, cell_seed(config, rep, kind, n, "fit")))
        except GpdoeError as exc:
            diag.append(f"validation rep={rep} kind={kind} n={n}: {type(exc).__name__}: {exc}")
            records += [_record(rep, kind, n, d, m, v) for m, v in out.items()]
            continue

        def predictivity(u):
            return _safe_q2(evaluate_unit(fn, u), model.predict(u)[0])

        ref_rng = make_rng(cell_seed(config, rep, kind, n, "reference"))
        out["q2_ref"] = float(np.nanmean([predictivity(ref_rng.random((config.reference_size, d)))
                                          for _ in range(config.reference_samples)]))
        if config.loo:
            try:
                out["q2_loo"] = q2_loo(design, y, model_fit_options(config, rep, kind, n)).q2
            except GpdoeError as exc:
                diag.append(f"validation loo rep={rep} kind={kind} n={n}: {type(exc).__name__}: {exc}")

        seq = sequential_validation_design(design, pool, nt_max)
        run = running_q2(evaluate_unit(fn, seq), model.predict(seq)[0])
        for t in config.test_sizes:
            out[f"q2_seq@{t}"] = run[t - 1]

        for td in config.test_designs:
            env_rng = make_rng(cell_seed(config, rep, kind, n, f"envelope-{td}"))
            per_size = {t: [] for t in config.test_sizes}
            for e in range(config.envelope_repetitions):
                if td == "mc":
                    u = env_rng.random((nt_max, d))
                    run = running_q2(evaluate_unit(fn, u), model.predict(u)[0])
                    for t in config.test_sizes:
                        per_size[t].append(run[t - 1])
                else:
                    for t in config.test_sizes:
                        ss = cell_seed(config, rep, kind, n, f"envelope-lhs-{e}-{t}")
                        if config.test_lhs_optimized:
                            u = optimized_lhs(t, d, _anneal_config(config, criteria.WRAPAROUND_L2, ss,
                                                                   config.test_anneal))[0].points
                        else:
                            u = generate_lhs(t, d, make_rng(ss)).points
                        per_size[t].append(predictivity(u))
            for t in config.test_sizes:
                for stat, v in _envelope(np.array(per_size[t], dtype=float)).items():
                    out[f"q2_{td}_{stat}@{t}"] = v
        records += [_record(rep, kind, n, d, m, v) for m, v in out.items()]
    return records, diag


def model_fit_options(config: ExperimentConfig, rep: int, kind: str, n: int) -> FitOptions:
    return _fit_options(config, cell_seed(config, rep, kind, n, "fit"))


_CELL_FUNCS = {"fit_comparison": _fit_cell, "projection": _projection_cell, "validation": _validation_cell}


def cells(config: ExperimentConfig) -> list[tuple[int, str, int]]:
    """Work units in canonical order. A validation cell covers the whole size grid."""
    if config.study == "validation":
        return [(r, k, 0) for r in range(config.repetitions) for k in config.design_kinds]
    return [(r, k, s) for r in range(config.repetitions) for k in config.design_kinds for s in config.sizes]


def _cell_keys(config, cell) -> set[tuple]:
    rep, kind, size = cell
    if config.study == "validation":
        return {(rep, kind, n) for n in config.sizes}
    if config.study == "projection":
        return {(rep, kind, size)}
    return {(rep, kind, size)}


def _record_key(config, r) -> tuple:
    size = r["d"] if config.study == "projection" else r["n"]
    return (r["replicate"], r["design_kind"], size)


def _sort_key(config, r) -> tuple:
    metric_index = config.metrics.index(r["metric"])
    return (*_record_key(config, r), metric_index)


def _run_cell(args):
    config, cell = args
    return cell, _CELL_FUNCS[config.study](config, *cell)


def run_study(config: ExperimentConfig, threads: int = 1, previous: list[dict] | None = None,
              on_cell=None) -> StudyResult:
    """Run every cell not already covered by ``previous`` records."""
    done: dict[tuple, list[dict]] = {}
    for r in previous or []:
        done.setdefault(_record_key(config, r), []).append(r)
    complete = {k for k, rs in done.items() if {r["metric"] for r in rs} == set(config.metrics)}

    todo = [c for c in cells(config) if not _cell_keys(config, c) <= complete]
    records = [r for k in complete for r in done[k]]
    diagnostics: list[str] = []
    jobs = [(config, c) for c in todo]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = ex.map(_run_cell, jobs)
            for cell, (recs, diag) in results:
                records += recs
                diagnostics += diag
                if on_cell:
                    on_cell(cell, recs)
    else:
        for job in jobs:
            cell, (recs, diag) = _run_cell(job)
            records += recs
            diagnostics += diag
            if on_cell:
                on_cell(cell, recs)
    records.sort(key=lambda r: _sort_key(config, r))
    return StudyResult(config, records, diagnostics)


def run_fit_comparison(config: ExperimentConfig, threads: int = 1) -> StudyResult:
    return run_study(_check_study(config, "fit_comparison"), threads)


def run_projection_degradation(config: ExperimentConfig, threads: int = 1) -> StudyResult:
    return run_study(_check_study(config, "projection"), threads)


def run_validation_comparison(config: ExperimentConfig, threads: int = 1) -> StudyResult:
    return run_study(_check_study(config, "validation"), threads)


def _check_study(config, study):
    if config.study != study:
        raise ArgumentError(f"config is for study {config.study!r}, not {study!r}")
    return config


def run_to_directory(config: ExperimentConfig, out_dir: str | os.PathLike, threads: int = 1,
                     version: str = "") -> StudyResult:
    """Run a study into ``out_dir`` (results.csv, summary.csv, manifest.json), resuming if possible."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    final, partial = out / "results.csv", out / "results.partial.csv"
    previous = []
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        old = json.loads(manifest_path.read_text()).get("config")
        if old is not None and old != config.to_dict():
            raise ArgumentError(f"{out} holds results of a different configuration")
    for path in (final, partial):
        if path.exists():
            previous += read_records(path)

    started = time.time()
    with open(partial, "a", newline="") as fh:
        if fh.tell() == 0:
            fh.write(",".join(FIELDS) + "\n")

        def append(cell, recs):
            fh.write(records_to_csv(recs).split("\n", 1)[1])
            fh.flush()

        manifest = {"config": config.to_dict(), "seed": config.seed, "version": version}
        atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
        result = run_study(config, threads, previous, append)

    # dedupe records that may appear in both files
    unique = {(*_record_key(config, r), r["metric"]): r for r in result.records}
    result.records = sorted(unique.values(), key=lambda r: _sort_key(config, r))
    atomic_write_text(final, result.to_csv())
    atomic_write_text(out / "summary.csv", result.summary_csv())
    partial.unlink(missing_ok=True)
    manifest.update({
        "records": len(result.records),
        "diagnostics": result.diagnostics,
        "duration_seconds": round(time.time() - started, 3),
    })
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
    for line in result.diagnostics:
        log.warning(line)
    return result


def paper_scale(config: ExperimentConfig) -> ExperimentConfig:
    return replace(config, repetitions=100)
