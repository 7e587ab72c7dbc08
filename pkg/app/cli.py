"""soisim command line: validate specs, evaluate contexts, run scenarios and sweeps.

Exit codes: 0 success, 2 invalid input, 3 I/O failure.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from app.config import settings
from app.core.errors import ParseError
from app.core.metrics import SPEC_VALIDATIONS
from app.logger import get_logger, setup_logging
from app.scenarios import run_scenario
from app.scenarios.loader import load_config, parse_value
from app.scenarios.sweep import AXES, aggregate_sweep, sweep, write_csv
from app.schemas.reports import CSV_COLUMNS, MetricsReport
from app.schemas.scenario import ScenarioConfig
from app.services.context_service import evaluate_context, load_context
from app.services.spec_service import load_spec, summarize_spec

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soisim",
        description="Self-organizing interaction spaces: protocols and simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="Parse a group-role specification")
    validate.add_argument("--spec", required=True, help="Path to the XML specification")

    evaluate = sub.add_parser("eval", help="Evaluate a context against a specification")
    evaluate.add_argument("--spec", required=True, help="Path to the XML specification")
    evaluate.add_argument("--context", required=True, help="Path to a JSON context snapshot")

    for name, help_text in (
        ("run", "Run one scenario and write its CSV row"),
        ("sweep", "Run a scenario grid over one variable"),
        ("trace", "Run one scenario and dump its event trace"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="Path to the JSON scenario config")
        cmd.add_argument("--seed", type=int, default=None, help="Overrides the config seed")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Dotted config override, repeatable",
        )
        cmd.add_argument("--out", default=None, help="Output directory (trace: output file)")
        if name == "run":
            cmd.add_argument("--trace", action="store_true", help="Also write the event trace")
        if name == "sweep":
            cmd.add_argument("--axis", required=True, choices=AXES)
            cmd.add_argument("--values", required=True, help="Comma-separated axis values")
            cmd.add_argument("--seeds", type=int, default=10, help="Seeds 0..N-1 per value")
            cmd.add_argument("--workers", type=int, default=None)
    return parser


def _seed(args: argparse.Namespace) -> Optional[int]:
    return args.seed if args.seed is not None else settings.SOISIM_SEED


def _stem(cfg: ScenarioConfig) -> str:
    return f"{cfg.scenario}-{cfg.mode.value}-seed{cfg.seed}"


def write_report(report: MetricsReport, out_dir: Path, stem: str) -> Path:
    """One CSV row plus the full report as JSON next to it."""
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    pd.DataFrame([report.csv_row()], columns=list(CSV_COLUMNS)).to_csv(
        csv_path, index=False, lineterminator="\n"
    )
    (out_dir / f"{stem}.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return csv_path


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        spec = load_spec(args.spec)
    except ParseError:
        SPEC_VALIDATIONS.labels(outcome="invalid").inc()
        raise
    SPEC_VALIDATIONS.labels(outcome="valid").inc()
    print(summarize_spec(spec).model_dump_json(indent=2))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    ctx = load_context(args.context)
    print(evaluate_context(spec, ctx).model_dump_json(indent=2))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides, seed=_seed(args))
    result = run_scenario(cfg, trace=args.trace)
    out_dir = Path(args.out or settings.OUTPUT_DIR)
    csv_path = write_report(result.report, out_dir, _stem(cfg))
    print(csv_path)
    if args.trace:
        print(result.trace.write(out_dir / f"{_stem(cfg)}.trace.tsv"))
    return EXIT_OK


def cmd_trace(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.overrides, seed=_seed(args))
    result = run_scenario(cfg, trace=True)
    if args.out:
        print(result.trace.write(args.out))
    else:
        sys.stdout.write(result.trace.text())
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    template = load_config(args.config, args.overrides, seed=_seed(args))
    values = [parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
    frame = sweep(template, args.axis, values, range(args.seeds), workers=args.workers)
    out_dir = Path(args.out or settings.OUTPUT_DIR)
    stem = f"sweep-{template.scenario}-{args.axis}"
    print(write_csv(frame, out_dir / f"{stem}.csv"))
    print(write_csv(aggregate_sweep(frame), out_dir / f"{stem}-summary.csv"))
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "run": cmd_run,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValueError as e:
        # SoisError, JSON decoding and pydantic validation errors
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
