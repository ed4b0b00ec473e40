"""Command-line entry point.

    python -m src run --algorithm mosa+ --budget 20000 --seed 7 --reps 10 --jobs 4
    python -m src compare runs/mosa+ runs/rs
    python -m src explain runs/mosa+ --key-points 26
    python -m src replay runs/mosa+/rep-00/archive.jsonl

Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from src.models import Algorithm

from .services.data import apply_overrides, load_config
from .services.errors import ConfigError, InvalidInputError, SearchAborted, TransportError
from .services.harness import cmd_compare, cmd_explain, cmd_replay, cmd_run, load_group, with_external
from .services.present import parse_key_points

logger = logging.getLogger("src.cli")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _sut_option(value: str) -> Optional[str]:
    """'synthetic' gives an empty command (clears any configured one); 'external:<command>' gives the command."""
    if value == "synthetic":
        return ""
    if value.startswith("external:") and value[len("external:"):].strip():
        return value[len("external:"):].strip()
    raise argparse.ArgumentTypeError("expected 'synthetic' or 'external:<command>'")


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out or os.getenv("KPT_OUT_DIR", "runs"))


def _load(args: argparse.Namespace):
    cfg = load_config(args.config)
    return with_external(cfg, args.sut)


def _run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(
        _load(args),
        algorithm=args.algorithm,
        evaluation_budget=args.budget,
        epsilon=args.epsilon,
        seed=args.seed,
    )
    summaries = cmd_run(cfg, _out_dir(args), reps=args.reps, jobs=args.jobs)
    for s in summaries:
        print(f"{s.algorithm.value} seed={s.seed} ES={s.es:.3f} evaluations={s.evaluations} status={s.status}")
        if s.error:
            print(f"  error: {s.error}", file=sys.stderr)
    return EXIT_OK if all(s.status == "ok" for s in summaries) else EXIT_RUNTIME


def _compare(args: argparse.Namespace) -> int:
    groups = {}
    for spec in args.groups:
        name, _, path = spec.partition("=") if "=" in spec else (Path(spec).name, "", spec)
        groups[name] = load_group(path)
    if len(groups) < 2:
        raise ConfigError("compare needs at least two groups of runs")
    out = _out_dir(args) / "compare.csv"
    report = cmd_compare(groups, out)
    print(report.to_string(index=False))
    print(f"\nwrote {len(report)} rows -> {out}")
    return EXIT_OK


def _traces(paths: List[str]) -> List[Path]:
    found: List[Path] = []
    for p in map(Path, paths):
        found.extend(sorted(p.glob("**/trace.jsonl")) if p.is_dir() else [p])
    return found


def _explain(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    traces = _traces(args.traces)
    if not traces:
        raise ConfigError(f"no trace files under {args.traces}")
    try:
        selected = parse_key_points(args.key_points, cfg.sut.k)
    except InvalidInputError as e:
        raise ConfigError(str(e)) from e
    out = _out_dir(args) / "explain"
    report = cmd_explain(traces, selected, cfg.explain, out)
    print(report.to_string(index=False))
    print(f"\n{len(report)} tree(s) -> {out}")
    return EXIT_OK


def _replay(args: argparse.Namespace) -> int:
    archive = Path(args.archive)
    if not archive.exists():
        raise ConfigError(f"no archive at {archive}")
    cfg = load_config(args.config or archive.parent / "config.yaml")
    cfg = with_external(cfg, args.sut)
    out = Path(args.out) / "replay.csv" if args.out else archive.parent / "replay.csv"
    report, ok = cmd_replay(archive, cfg, out)
    print(report.to_string(index=False))
    failed = int((report["status"] != "pass").sum())
    print(f"\n{len(report) - failed} pass, {failed} fail -> {out}")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run config (YAML); default $KPT_CONFIG_PATH or config/default.yaml")
    common.add_argument("--out", default=None, help="output directory; default $KPT_OUT_DIR or ./runs")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--reps", type=int, default=1, help="seeded repetitions")
    common.add_argument("--jobs", type=int, default=1, help="repetitions run in parallel")
    common.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=None)
    common.add_argument("--budget", type=int, default=None, help="SUT evaluations per run")
    common.add_argument("--epsilon", type=float, default=None, help="severe misprediction threshold")
    common.add_argument("--sut", type=_sut_option, default=None, metavar="{synthetic|external:CMD}")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="python -m src", description="Search-based test suite generation for key-point detectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="generate test suites")
    p.set_defaults(func=_run)

    p = sub.add_parser("compare", parents=[common], help="compare groups of runs (ES and MS)")
    p.add_argument("groups", nargs="+", help="run directories, optionally NAME=DIR")
    p.set_defaults(func=_compare)

    p = sub.add_parser("explain", parents=[common], help="regression trees of NE per key-point")
    p.add_argument("traces", nargs="+", help="trace files or directories holding them")
    p.add_argument("--key-points", default=None, help="1-based, e.g. '26' or '1,3,20-27'; default all")
    p.set_defaults(func=_explain)

    p = sub.add_parser("replay", parents=[common], help="re-evaluate an archive and check its fitness values")
    p.add_argument("archive", help="archive.jsonl of a run")
    p.set_defaults(func=_replay)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else os.getenv("KPT_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SearchAborted, TransportError, InvalidInputError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
