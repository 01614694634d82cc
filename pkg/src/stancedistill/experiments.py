"""Pipeline orchestration: single runs, the alpha and training-size sweeps,
the zero-shot baseline, and Table-2-style report emission.

Every training run ("cell") writes ``manifest.json`` last; a rerun pointed at
the same run directory skips cells whose manifest is present and valid.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .backends import make_backend
from .codec import Paradigm
from .corpus import (
    CorpusSplit,
    compute_stats,
    find_official_files,
    make_split,
    read_split_jsonl,
    read_stance_file,
    write_split_jsonl,
)
from .elicitor import (
    DEFAULT_KEY_ENV,
    HTTPCompletionClient,
    MockCompletionClient,
    RetryPolicy,
    build_rationale_store,
    load_rationale_store,
    zero_shot_outcomes,
)
from .evaluator import EmptyInput, EvalReport, RunAggregate, aggregate, score
from .trainer import TrainConfig, predict, train

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (13, 42, 87)
ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))
FRACTION_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))

# Published full-scale numbers, reported for comparison only.
REFERENCE_BASELINE_F_AVG = 70.15
REFERENCE_F_AVG_GRID = {
    ("small", "st-ft"): (60.81, 5.91, 66.30, 0.19),
    ("small", "st-cot"): (50.05, 0.32, 54.13, 0.28),
    ("small", "mtl"): (64.66, 4.16, 66.80, 0.18),
    ("base", "st-ft"): (65.54, 3.97, 73.56, 0.30),
    ("base", "st-cot"): (58.46, 0.73, 60.89, 0.37),
    ("base", "mtl"): (67.40, 1.11, 74.53, 0.34),
    ("large", "st-ft"): (68.46, 0.45, 78.76, 0.29),
    ("large", "st-cot"): (64.47, 0.28, 72.29, 0.36),
    ("large", "mtl"): (76.79, 0.71, 79.72, 0.23),
}
REFERENCE_BEST_ALPHA = {
    "T5-Small": 0.5, "T5-Base": 0.2, "T5-Large": 0.2,
    "FlanT5-Small": 0.3, "FlanT5-Base": 0.9, "FlanT5-Large": 0.1,
}


class ExperimentError(RuntimeError):
    pass


@dataclass
class RunSpec:
    command: str
    config: TrainConfig = field(default_factory=TrainConfig)
    data: Path | None = None
    cache: Path | None = None
    out: Path = Path("out")
    run_dir: Path | None = None
    checkpoint: Path | None = None
    results: list[Path] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    backend: str = "tiny"
    mock_llm: bool = False
    llm_endpoint: str | None = None
    llm_model: str = "gpt-3.5-turbo"
    key_env: str = DEFAULT_KEY_ENV
    workers: int = 1
    alpha_grid: list[float] = field(default_factory=lambda: list(ALPHA_GRID))
    fraction_grid: list[float] = field(default_factory=lambda: list(FRACTION_GRID))
    paradigms: list[Paradigm] = field(default_factory=lambda: list(Paradigm))
    val_fraction: float = 0.1
    split_seed: int = 0
    report_format: str = "markdown"

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, TrainConfig):
                v = v.to_dict()
            elif isinstance(v, Path):
                v = str(v)
            elif isinstance(v, list):
                v = [x.value if isinstance(x, Paradigm) else str(x) if isinstance(x, Path) else x for x in v]
            d[f.name] = v
        return d

    def resolve_run_dir(self) -> Path:
        if self.run_dir is None:
            stamp = time.strftime("%Y%m%d-%H%M%S")
            self.run_dir = self.out / self.command / stamp
        self.run_dir.mkdir(parents=True, exist_ok=True)
        _attach_log(self.run_dir / "run.log")
        (self.run_dir / "config.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return self.run_dir


_run_log: logging.Handler | None = None


def _attach_log(path: Path) -> None:
    """Mirror package logging into the current run directory (one run log at a time)."""
    global _run_log
    root = logging.getLogger("stancedistill")
    if _run_log is not None:
        if getattr(_run_log, "baseFilename", None) == str(path.resolve()):
            return
        root.removeHandler(_run_log)
        _run_log.close()
    handler = _run_log = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    if root.level == logging.NOTSET or root.level > logging.INFO:
        root.setLevel(logging.INFO)


# --------------------------------------------------------------------- data


def load_split(spec: RunSpec) -> CorpusSplit:
    """A split from a ``splits.jsonl`` file or a directory of official files."""
    if spec.data is None:
        raise ExperimentError("--data is required")
    data = Path(spec.data)
    if data.is_file():
        return read_split_jsonl(data, spec.split_seed)
    train_file, test_file = find_official_files(data)
    test = read_stance_file(test_file) if test_file else []
    return make_split(read_stance_file(train_file), spec.val_fraction, spec.split_seed, test)


def make_client(spec: RunSpec, seed: int | None = None):
    if spec.mock_llm:
        return MockCompletionClient()
    if not spec.llm_endpoint:
        raise ExperimentError("set --mock-llm or configure llm_endpoint")
    return HTTPCompletionClient(spec.llm_endpoint, spec.llm_model, key_env=spec.key_env)


def load_rationales(spec: RunSpec, required: bool):
    if spec.cache is None or not Path(spec.cache).exists():
        if required:
            raise ExperimentError("a rationale store (--cache) is required; run the elicit command first")
        return None
    return load_rationale_store(spec.cache)


def run_ingest(spec: RunSpec) -> Path:
    run_dir = spec.resolve_run_dir()
    split = load_split(spec)
    write_split_jsonl(split, run_dir / "splits.jsonl")
    (run_dir / "stats.csv").write_text(compute_stats(split.train + split.validation + split.test).to_csv())
    return run_dir


def run_elicit(spec: RunSpec):
    spec.resolve_run_dir()
    if spec.cache is None:
        raise ExperimentError("--cache is required")
    split = load_split(spec)
    workers = spec.workers if spec.mock_llm else max(spec.workers, 4)
    return build_rationale_store(split.train + split.validation, make_client(spec), spec.cache, workers=workers)


# -------------------------------------------------------------------- cells


@dataclass
class Cell:
    key: str
    axis_value: float
    paradigm: Paradigm
    config: TrainConfig


def _manifest_ok(cell_dir: Path) -> dict | None:
    try:
        m = json.loads((cell_dir / "manifest.json").read_text())
        EvalReport.from_dict(m["report"])
        return m
    except (OSError, ValueError, KeyError, TypeError):
        return None


def run_cell(spec: RunSpec, cell: Cell, split: CorpusSplit, rationales, run_dir: Path) -> dict:
    """Train and test one configuration; returns its manifest."""
    cell_dir = run_dir / "cells" / cell.key
    done = _manifest_ok(cell_dir)
    if done is not None:
        log.info("cell %s already complete, skipping", cell.key)
        return done
    if not split.test:
        raise EmptyInput("the test partition is empty")
    cell_dir.mkdir(parents=True, exist_ok=True)
    backend = make_backend(spec.backend, seed=cell.config.seed)
    record = train(backend, split, rationales, cell.config, checkpoint_dir=cell_dir / "checkpoint")
    test = split.test
    report = score([e.gold for e in test], predict(backend, test, cell.paradigm, cell.config),
                   [e.topic for e in test])
    best = next((e.val_f_avg for e in record.epochs if e.epoch == record.best_epoch), None)
    manifest = {
        "cell": cell.key,
        "config": cell.config.to_dict(),
        "backend": spec.backend,
        "corpus_fingerprint": split.fingerprint(),
        "best_epoch": record.best_epoch,
        "validation_f_avg": best,
        "excluded": record.excluded,
        "report": report.to_dict(),
    }
    # Written last: its presence marks the cell as complete.
    tmp = cell_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    tmp.replace(cell_dir / "manifest.json")
    return manifest


@dataclass
class SweepCell:
    axis_value: float
    paradigm: str
    aggregate: RunAggregate | None
    validation_mean: float | None = None
    failures: list[str] = field(default_factory=list)


@dataclass
class SweepResult:
    axis: str
    axis_values: list[float]
    paradigms: list[str]
    backend: str
    cells: list[SweepCell]
    notes: list[str] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(c.failures for c in self.cells)

    def best(self, paradigm: str, by: str = "test") -> float | None:
        pool = [c for c in self.cells if c.paradigm == paradigm and c.aggregate]
        if by == "validation":
            pool = [c for c in pool if c.validation_mean is not None]
            key = lambda c: c.validation_mean  # noqa: E731
        else:
            key = lambda c: c.aggregate.mean["f_avg"]  # noqa: E731
        # max() keeps the first maximum, i.e. the smallest axis value on ties.
        return max(pool, key=key).axis_value if pool else None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for c, cd in zip(self.cells, d["cells"]):
            cd["aggregate"] = c.aggregate.to_dict() if c.aggregate else None
        d["kind"] = "sweep"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        cells = [
            SweepCell(c["axis_value"], c["paradigm"],
                      RunAggregate.from_dict(c["aggregate"]) if c["aggregate"] else None,
                      c.get("validation_mean"), list(c.get("failures", [])))
            for c in d["cells"]
        ]
        return cls(d["axis"], d["axis_values"], d["paradigms"], d["backend"], cells, list(d.get("notes", [])))


def _run_grid(spec: RunSpec, axis: str, values: Sequence[float], paradigms: Sequence[Paradigm],
              make_config: Callable[[float, Paradigm, int], TrainConfig]) -> SweepResult:
    run_dir = spec.resolve_run_dir()
    split = load_split(spec)
    needs_rationales = any(p is not Paradigm.ST_FT for p in paradigms)
    rationales = load_rationales(spec, required=needs_rationales)
    cells = [
        Cell(f"{axis}={v}/{p.value}/seed={s}", v, p, make_config(v, p, s))
        for v in values for p in paradigms for s in spec.seeds
    ]

    def attempt(cell: Cell):
        try:
            return cell, run_cell(spec, cell, split, rationales, run_dir), None
        except Exception as e:  # a failed cell must not sink the sweep
            log.exception("cell %s failed", cell.key)
            return cell, None, f"{cell.key}: {type(e).__name__}: {e}"

    with ThreadPoolExecutor(max_workers=max(1, spec.workers)) as pool:
        outcomes = list(pool.map(attempt, cells))
    sweep_cells = []
    for v in values:
        for p in paradigms:
            group = [o for o in outcomes if o[0].axis_value == v and o[0].paradigm is p]
            ok = [(c, m) for c, m, err in group if m is not None]
            errs = [err for _, _, err in group if err]
            agg = None
            if ok:
                agg = aggregate([EvalReport.from_dict(m["report"]) for _, m in ok], [c.config.seed for c, _ in ok])
            vals = [m["validation_f_avg"] for _, m in ok if m["validation_f_avg"] is not None]
            sweep_cells.append(SweepCell(v, p.value, agg, sum(vals) / len(vals) if vals else None, errs))
    result = SweepResult(axis, list(values), [p.value for p in paradigms], spec.backend, sweep_cells)
    (run_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    emit_report([result], "csv", run_dir)
    emit_report([result], "markdown", run_dir)
    failures = [f for c in sweep_cells for f in c.failures]
    if failures:
        log.error("%d cell(s) failed:\n  %s", len(failures), "\n  ".join(failures))
    return result


def run_sweep_alpha(spec: RunSpec) -> SweepResult:
    if spec.config.paradigm is not Paradigm.MTL:
        raise ExperimentError("the alpha sweep requires --paradigm mtl")
    base = spec.config
    result = _run_grid(spec, "alpha", spec.alpha_grid, [Paradigm.MTL],
                       lambda v, p, s: dataclasses.replace(base, alpha=v, seed=s))
    result.notes.append(f"best alpha (test F_avg): {result.best('mtl')}")
    result.notes.append(f"best alpha (validation F_avg): {result.best('mtl', by='validation')}")
    ref = ", ".join(f"{k} {v}" for k, v in REFERENCE_BEST_ALPHA.items())
    result.notes.append(f"reference optimal alpha at full scale (published, not reproduced): {ref}")
    _rewrite(spec, result)
    return result


def run_sweep_size(spec: RunSpec) -> SweepResult:
    base = spec.config
    result = _run_grid(spec, "fraction", spec.fraction_grid, spec.paradigms,
                       lambda v, p, s: dataclasses.replace(base, paradigm=p, train_fraction=v, seed=s))
    return result


def run_train(spec: RunSpec) -> SweepResult:
    """One configuration at every seed: a single-cell sweep over the training fraction."""
    base = spec.config
    return _run_grid(spec, "fraction", [base.train_fraction], [base.paradigm],
                     lambda v, p, s: dataclasses.replace(base, seed=s))


def run_eval(spec: RunSpec) -> EvalReport:
    if spec.checkpoint is None:
        raise ExperimentError("--checkpoint is required")
    run_dir = spec.resolve_run_dir()
    split = load_split(spec)
    if not split.test:
        raise EmptyInput("the test partition is empty")
    backend = make_backend(spec.backend, seed=spec.config.seed)
    backend.load(spec.checkpoint)
    outcomes = predict(backend, split.test, spec.config.paradigm, spec.config)
    report = score([e.gold for e in split.test], outcomes, [e.topic for e in split.test])
    report.meta = {"kind": "eval", "paradigm": spec.config.paradigm.value, "backend": spec.backend}
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "report.csv").write_text(report.to_csv())
    return report


def run_baseline(spec: RunSpec) -> EvalReport:
    """Zero-shot classification of the test set once per seed."""
    run_dir = spec.resolve_run_dir()
    split = load_split(spec)
    test = split.test
    if not test:
        raise EmptyInput("the test partition is empty")
    golds, topics = [e.gold for e in test], [e.topic for e in test]
    reports = []
    for seed in spec.seeds:
        client = make_client(spec, seed)
        outcomes = zero_shot_outcomes(test, client, workers=spec.workers,
                                      retry=RetryPolicy(base_delay=0.0 if spec.mock_llm else 1.0))
        reports.append(score(golds, outcomes, topics))
    agg = aggregate(reports, spec.seeds)
    report = reports[0]
    report.meta = {
        "kind": "baseline",
        "service": make_client(spec).service_id,
        "aggregate": agg.to_dict(),
        "reference_f_avg_percent": REFERENCE_BASELINE_F_AVG,
        "reference_note": "published zero-shot value; depends on the specific commercial service",
    }
    (run_dir / "report.json").write_text(report.to_json())
    (run_dir / "report.csv").write_text(report.to_csv())
    emit_report([report], "markdown", run_dir)
    return report


def _rewrite(spec: RunSpec, result: SweepResult) -> None:
    run_dir = spec.run_dir
    (run_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    emit_report([result], "markdown", run_dir)


# ------------------------------------------------------------------ reports


def format_percent(mean: float, std: float) -> str:
    return f"{100 * mean:.2f}±{100 * std:.2f}"


def _axis_label(axis: str, v) -> str:
    return f"α={v}" if axis == "alpha" else f"{round(100 * v)}%" if axis == "fraction" else str(v)


def _sweep_table(r: SweepResult) -> str:
    lines = [f"### {r.axis} sweep, backend `{r.backend}`", ""]
    heads = [_axis_label(r.axis, v) for v in r.axis_values]
    lines.append("| paradigm | " + " | ".join(heads) + " |")
    lines.append("|---|" + "---|" * len(heads))
    for p in r.paradigms:
        row = []
        for v in r.axis_values:
            c = next(c for c in r.cells if c.paradigm == p and c.axis_value == v)
            row.append(format_percent(c.aggregate.mean["f_avg"], c.aggregate.std["f_avg"]) if c.aggregate else "failed")
        lines.append(f"| {p.upper()} | " + " | ".join(row) + " |")
    lines.append("")
    lines.extend(f"- {n}" for n in r.notes)
    return "\n".join(lines).rstrip() + "\n"


def _eval_table(r: EvalReport) -> str:
    meta = r.meta or {}
    col = meta.get("service") or meta.get("backend") or "model"
    row = meta.get("paradigm", meta.get("kind", "run"))
    agg = meta.get("aggregate")
    cell = format_percent(agg["mean"]["f_avg"], agg["std"]["f_avg"]) if agg else format_percent(r.f_avg, 0.0)
    lines = [f"### {meta.get('kind', 'evaluation')}", "", f"| task | {col} |", "|---|---|",
             f"| {str(row).upper()} | {cell} |", "",
             f"- parse failure rate: {100 * r.parse_failure_rate:.2f}% (n={r.n})"]
    if "reference_f_avg_percent" in meta:
        lines.append(f"- reference value (published, service-dependent, not reproduced): "
                     f"{meta['reference_f_avg_percent']:.2f}")
    return "\n".join(lines) + "\n"


def _reference_section() -> str:
    lines = ["### Reference values (published full-scale results, not reproduced here)", "",
             "| size | task | T5 | FlanT5 |", "|---|---|---|---|"]
    for (size, task), (t5, t5s, flan, flans) in REFERENCE_F_AVG_GRID.items():
        lines.append(f"| {size} | {task.upper()} | {t5:.2f}±{t5s:.2f} | {flan:.2f}±{flans:.2f} |")
    lines.append(f"\nZero-shot baseline reference: {REFERENCE_BASELINE_F_AVG:.2f}")
    return "\n".join(lines) + "\n"


def emit_report(results: Sequence[SweepResult | EvalReport], format: str, out_dir: str | Path) -> list[Path]:
    """Write ``report.md`` (one table per result plus the reference block) or ``plot.csv``."""
    if not results:
        raise EmptyInput("no results to report")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if format == "markdown":
            parts = [_sweep_table(r) if isinstance(r, SweepResult) else _eval_table(r) for r in results]
            path = out_dir / "report.md"
            path.write_text("\n".join(parts + [_reference_section()]), encoding="utf-8")
            return [path]
        if format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["axis", "paradigm", "backend", "mean", "std"])
            for r in results:
                if isinstance(r, SweepResult):
                    for c in r.cells:
                        if c.aggregate:
                            w.writerow([c.axis_value, c.paradigm, r.backend,
                                        c.aggregate.mean["f_avg"], c.aggregate.std["f_avg"]])
                else:
                    agg = (r.meta or {}).get("aggregate")
                    mean, std = (agg["mean"]["f_avg"], agg["std"]["f_avg"]) if agg else (r.f_avg, 0.0)
                    w.writerow(["", (r.meta or {}).get("paradigm", (r.meta or {}).get("kind", "")),
                                (r.meta or {}).get("service", (r.meta or {}).get("backend", "")), mean, std])
            path = out_dir / "plot.csv"
            path.write_text(buf.getvalue(), encoding="utf-8")
            return [path]
    except OSError as e:
        raise UnwritableOutput(str(e)) from e
    raise ValueError(f"unknown report format {format!r}")


class UnwritableOutput(OSError):
    pass


def load_result(path: str | Path) -> SweepResult | EvalReport:
    d = json.loads(Path(path).read_text())
    if d.get("kind") == "sweep":
        return SweepResult.from_dict(d)
    return EvalReport.from_dict(d)


def run_report(spec: RunSpec) -> list[Path]:
    paths = []
    for p in spec.results:
        p = Path(p)
        paths.extend(sorted(p.rglob("result.json")) + sorted(p.rglob("report.json")) if p.is_dir() else [p])
    results = [load_result(p) for p in paths]
    run_dir = spec.resolve_run_dir()
    return emit_report(results, "markdown", run_dir) + emit_report(results, "csv", run_dir)
