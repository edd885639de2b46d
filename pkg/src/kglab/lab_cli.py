"""Command line entry point: ``lab run`` and ``lab check``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__, persist
from .config import RECIPES, LabConfig, load_config
from .errors import ConfigError, LabError
from .recipes import RECIPE_FUNCTIONS, Recorder, check_suite

log = logging.getLogger("kglab")


def write_manifest(cfg: LabConfig, rec: Recorder, name: str, started: float) -> Path:
    """``report.json`` (deterministic) and ``manifest.json`` (checksums and timings).

    The report leaves out the output directory so runs written to different
    places compare byte for byte.
    """
    config = cfg.snapshot()
    config.pop("output_dir")
    report = {
        "version": __version__,
        "experiment": name,
        "config": config,
        "checks": [c.to_json() for c in rec.checks],
        "hard_failures": [c.name for c in rec.checks if c.hard and not c.passed],
    }
    report_path = rec.json("report.json", report)
    rec.timings["wall_clock_total"] = time.perf_counter() - started
    artifacts = [{"path": str(p.relative_to(rec.out_dir)), "sha256": persist.sha256(p)}
                 for p in sorted(set(rec.files))]
    manifest = {
        "version": __version__,
        "experiment": name,
        "config": cfg.snapshot(),
        "report": str(report_path.relative_to(rec.out_dir)),
        "artifacts": artifacts,
        "checks": report["checks"],
        "timing_checks": [c.to_json() for c in rec.timing_checks],
        "timings": {k: round(v, 3) for k, v in sorted(rec.timings.items())},
    }
    return persist.write_json(rec.out_dir / "manifest.json", manifest)


def _print_checks(rec: Recorder) -> None:
    for c in rec.checks + rec.timing_checks:
        status = "PASS" if c.passed else ("FAIL" if c.hard else "warn")
        print(f"[{status}] {c.name}: {c.measured} ({c.threshold})")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, experiment=args.experiment, seed=args.seed,
                      output_dir=Path(args.out) if args.out else None)
    out = Path(args.out) if args.out else cfg.output_dir / cfg.experiment
    rec = Recorder(out)
    started = time.perf_counter()
    RECIPE_FUNCTIONS[cfg.experiment](cfg, rec)
    path = write_manifest(cfg, rec, cfg.experiment, started)
    _print_checks(rec)
    print(f"manifest: {path}")
    return 0 if not rec.hard_failures else 1


def cmd_check(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seed=args.seed,
                      output_dir=Path(args.out) if args.out else None)
    out = Path(args.out) if args.out else cfg.output_dir / "check"
    rec = Recorder(out)
    started = time.perf_counter()
    results = check_suite(cfg, rec)
    rec.json("check_results.json", results)
    path = write_manifest(cfg, rec, "check", started)
    _print_checks(rec)
    failures = rec.hard_failures
    print(f"manifest: {path}")
    print(f"{len(failures)} hard assertion(s) failed" + (f": {', '.join(failures)}" if failures else ""))
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description="Klein-Gordon soliton laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one named experiment")
    run.add_argument("--config", type=Path, help="key = value configuration file")
    run.add_argument("--experiment", choices=RECIPES, help="recipe name (overrides the file)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="seed for random perturbations")
    run.set_defaults(func=cmd_run)
    chk = sub.add_parser("check", help="run the full assertion suite")
    chk.add_argument("--config", type=Path, help="key = value configuration file")
    chk.add_argument("--out", help="output directory")
    chk.add_argument("--seed", type=int, help="seed for random perturbations")
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
