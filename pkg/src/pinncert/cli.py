"""Command-line interface.

Subcommands: solve-elliptic, solve-nse, sweep, existence-ratio, stability,
hodge, certify.  Each reads a JSON config (--config), runs the matching
experiment driver and writes report.json plus per-experiment artifacts to
the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure (NaN or
diverging solve), 4 acceptance-check failure when --check is passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import EXPERIMENTS, ConfigError, ExperimentReport, RunConfig, run_experiment
from .hodge import HodgeSolverError
from .optimize import NumericalFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinncert",
        description="Train PDE networks and convert achieved losses into error certificates.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=(name != "certify"),
                       help="path to the JSON run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="concurrent sweep entries (default 1: serial, byte-reproducible)")
        p.add_argument("--check", action="store_true",
                       help="apply the experiment's acceptance thresholds; exit 4 on failure")
        if name == "certify":
            p.add_argument("--report", default=None,
                           help="saved report.json to re-derive certificates from")
    return parser


def _load(args) -> RunConfig:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    else:
        raw = {}
    raw["experiment"] = args.experiment
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if args.out is not None:
        raw["output"] = args.out
    if getattr(args, "report", None):
        raw["report"] = args.report
    try:
        return RunConfig.from_dict(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _threshold(cfg: RunConfig, key: str, default: float) -> float:
    return float(cfg.check.get(key, default))


def run_checks(cfg: RunConfig, report: ExperimentReport) -> list[str]:
    """Per-experiment acceptance thresholds; returns failure messages."""
    failures = []
    results = report.results

    def expect(cond, msg):
        if not cond:
            failures.append(msg)

    if cfg.experiment in ("solve-elliptic", "solve-nse"):
        if cfg.target is not None:
            expect(results["train"]["target_met"], "training did not reach the target loss")
    elif cfg.experiment == "sweep" and "hodge_scaling" not in results:
        min_exp = _threshold(cfg, "min_l2_exponent", 0.5 if cfg.variant == "l2" else 0.8)
        cal = results.get("calibrations", {}).get("l2")
        expect(cal is not None, "not enough met targets to calibrate the L2 exponent")
        if cal is not None:
            expect(cal["exponent"] >= min_exp,
                   f"calibrated L2 exponent {cal['exponent']:.3f} < {min_exp}")
        for label, chk in results.get("rate_checks", {}).items():
            expect(chk["c_eff"] < float("inf"), f"no finite constant for {label}")
    elif cfg.experiment == "sweep":
        expect(bool(results.get("rate_checks")), "no met targets in the sweep")
        hs = results.get("hodge_scaling")
        if hs is not None and hs.get("exponent") is not None:
            min_slope = _threshold(cfg, "min_hodge_exponent", 0.35)
            expect(hs["exponent"] >= min_slope,
                   f"non-Leray scaling exponent {hs['exponent']:.3f} < {min_slope}")
    elif cfg.experiment == "existence-ratio":
        cap = _threshold(cfg, "max_ratio_spread", 20.0)
        expect(results["ratio_max_over_min"] <= cap,
               f"loss/eps^2 spread {results['ratio_max_over_min']:.2f} > {cap}")
    elif cfg.experiment == "stability":
        zero = results.get("zero_delta_distance")
        if zero is not None:
            expect(zero == 0.0, f"identical twin runs differ by {zero}")
    elif cfg.experiment == "hodge":
        rec_tol = _threshold(cfg, "max_reconstruction", 1e-10)
        orth_tol = _threshold(cfg, "max_orthogonality", 1e-6)
        for name, diag in results["diagnostics"].items():
            expect(diag["reconstruction_error"] <= rec_tol,
                   f"{name}: reconstruction {diag['reconstruction_error']:.2e} > {rec_tol}")
            worst = max(diag["orthogonality_defects"].values())
            expect(worst <= orth_tol, f"{name}: orthogonality defect {worst:.2e} > {orth_tol}")
    return failures


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HodgeSolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    outdir = cfg.output
    if outdir:
        path = report.write(outdir)
        print(f"wrote {path}")
    else:
        print(report.report_json())

    if args.check:
        failures = run_checks(cfg, report)
        if failures:
            for msg in failures:
                print(f"check failed: {msg}", file=sys.stderr)
            return EXIT_CHECK
        print("all checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
