"""Command-line entry point.

    stancedistill ingest       --data DIR
    stancedistill elicit       --data DIR --cache rationales.jsonl --mock-llm
    stancedistill baseline     --data DIR --mock-llm
    stancedistill train        --data DIR --cache rationales.jsonl --paradigm mtl --alpha 0.2
    stancedistill eval         --data DIR --checkpoint best.pt --paradigm mtl
    stancedistill sweep-alpha  --data DIR --cache rationales.jsonl --paradigm mtl
    stancedistill sweep-size   --data DIR --cache rationales.jsonl
    stancedistill report       --results out/sweep_alpha out/sweep_size

A ``--config`` file holds flat ``key = value`` lines using the long flag
names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .codec import Paradigm
from .evaluator import EvalReport
from .experiments import (
    ExperimentError,
    RunSpec,
    SweepResult,
    run_baseline,
    run_elicit,
    run_eval,
    run_ingest,
    run_report,
    run_sweep_alpha,
    run_sweep_size,
    run_train,
)
from .trainer import TrainConfig

COMMANDS = {
    "ingest": run_ingest,
    "elicit": run_elicit,
    "baseline": run_baseline,
    "train": run_train,
    "eval": run_eval,
    "sweep_alpha": run_sweep_alpha,
    "sweep_size": run_sweep_size,
    "report": run_report,
}

log = logging.getLogger("stancedistill")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    return str(text).strip().lower() in {"1", "true", "yes", "on"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data and outputs")
    g.add_argument("--config", type=Path, help="flat key = value file; flags override it")
    g.add_argument("--data", type=Path, help="directory with the official files, or a splits.jsonl")
    g.add_argument("--cache", type=Path, help="rationale store (JSON lines)")
    g.add_argument("--out", type=Path, default=Path("out"))
    g.add_argument("--run-dir", type=Path, help="reuse this output directory (resumes sweeps)")
    g.add_argument("--checkpoint", type=Path)
    g.add_argument("--results", type=Path, nargs="*", default=[])
    g.add_argument("--format", dest="report_format", choices=["markdown", "csv"], default="markdown")
    t = common.add_argument_group("training")
    t.add_argument("--paradigm", choices=[p.value for p in Paradigm], default="st-ft")
    t.add_argument("--paradigms", type=lambda s: [Paradigm(x) for x in s.split(",")],
                   help="comma list for sweep-size (default: all three)")
    t.add_argument("--alpha", type=float, default=0.5)
    t.add_argument("--alpha-grid", type=_floats)
    t.add_argument("--fraction-grid", type=_floats)
    t.add_argument("--seeds", type=_ints, default=[13, 42, 87])
    t.add_argument("--train-fraction", type=float, default=1.0)
    t.add_argument("--backend", default="tiny", help="'tiny' or 'hf:<model id or path>'")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=128)
    t.add_argument("--lr", type=float, default=5e-5)
    t.add_argument("--max-input-len", type=int, default=512)
    t.add_argument("--max-gen-len", type=int, default=256)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--instructed-format", action="store_true")
    t.add_argument("--split-seed", type=int, default=0)
    s = common.add_argument_group("services")
    s.add_argument("--mock-llm", action="store_true", help="use the deterministic offline client")
    s.add_argument("--llm-endpoint")
    s.add_argument("--llm-model", default="gpt-3.5-turbo")
    s.add_argument("--key-env", default="STANCE_LLM_API_KEY")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stancedistill", description="Rationale distillation for stance detection")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
        if "_" in name:
            sub.add_parser(name.replace("_", "-"), parents=[common])
    return parser


_BOOL_KEYS = {"instructed_format", "mock_llm", "verbose"}
_FLAG_ALIASES = {"report_format": "--format"}


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ExperimentError(f"{path}:{line_no}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    # File values go before the command-line flags so the latter win.
    extra: list[str] = []
    for key, value in read_config_file(args.config).items():
        flag = _FLAG_ALIASES.get(key, "--" + key.replace("_", "-"))
        if key in _BOOL_KEYS:
            if _bool(value):
                extra.append(flag)
        elif key == "results":
            extra += [flag, *value.split()]
        else:
            extra += [flag, value]
    return parser.parse_args([argv[0], *extra, *argv[1:]])


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    config = TrainConfig(
        paradigm=Paradigm(args.paradigm),
        alpha=args.alpha,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        epochs=args.epochs,
        max_input_tokens=args.max_input_len,
        max_generation_tokens=args.max_gen_len,
        seed=args.seeds[0],
        instructed_format=args.instructed_format,
        train_fraction=args.train_fraction,
        max_steps=args.max_steps,
    )
    spec = RunSpec(
        command=args.command.replace("-", "_"),
        config=config,
        data=args.data,
        cache=args.cache,
        out=args.out,
        run_dir=args.run_dir,
        checkpoint=args.checkpoint,
        results=list(args.results),
        seeds=list(args.seeds),
        backend=args.backend,
        mock_llm=args.mock_llm,
        llm_endpoint=args.llm_endpoint,
        llm_model=args.llm_model,
        key_env=args.key_env,
        workers=args.workers,
        split_seed=args.split_seed,
        report_format=args.report_format,
    )
    if args.alpha_grid:
        spec.alpha_grid = args.alpha_grid
    if args.fraction_grid:
        spec.fraction_grid = args.fraction_grid
    if args.paradigms:
        spec.paradigms = args.paradigms
    return spec


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    spec = spec_from_args(args)
    try:
        result = COMMANDS[spec.command](spec)
    except (ExperimentError, ValueError, OSError) as e:
        log.error("%s failed: %s", spec.command, e)
        return 1
    if spec.run_dir is not None:
        print(spec.run_dir)
    if isinstance(result, SweepResult):
        return 1 if result.failed else 0
    if isinstance(result, EvalReport):
        print(f"F_avg {100 * result.f_avg:.2f}  parse failures {100 * result.parse_failure_rate:.2f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
