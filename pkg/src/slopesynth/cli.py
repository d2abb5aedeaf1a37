"""Command-line interface.

Three subcommands: ``synthesize`` runs an analysis on a study file,
``simulate`` runs the Monte Carlo calibration or variance studies, and
``verify`` checks the pooled-sample equivalence property on generated or
supplied raw data.  Exit codes: 0 success, 2 invalid input, 3 numerical
failure (including a failed verification).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .design import SynthesisMode, build_system
from .estimators import gls_estimate, pooled_gls_estimate, pooled_mse
from .exceptions import InputError, SingularityError
from .oracle import (
    levene_from_dataset,
    generate,
    paper_shape,
    run_calibration,
    run_variance_probe,
    verify_equivalence,
)
from .report import (
    render_simulate_text,
    render_synthesis_text,
    render_verify_text,
    simulate_report,
    synthesis_report,
    to_json,
    verify_report,
)
from .studies import DEFAULT_COMMON_CORR
from .studyfile import parse_raw_csv, parse_study_file

_MODES = {
    "gls": SynthesisMode.GLS,
    "wls": SynthesisMode.WLS_DIAGONAL,
    "pooled": SynthesisMode.POOLED_MSE,
}


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slopesynth",
        description="Fixed-effects synthesis of regression slopes across studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    syn = sub.add_parser("synthesize", help="synthesize a study file")
    syn.add_argument("input", help="study file (.json or .csv)")
    syn.add_argument("--format", choices=["json", "csv"], default=None,
                     help="override the format inferred from the file suffix")
    syn.add_argument("--method", choices=sorted(_MODES), default="gls")
    syn.add_argument("--corr-fill", nargs="?", type=float, default=None,
                     const=DEFAULT_COMMON_CORR, metavar="RHO",
                     help="fill missing covariance off-diagonals with this common "
                          f"correlation (default {DEFAULT_COMMON_CORR} when given bare)")
    syn.add_argument("--alpha", type=float, default=0.05,
                     help="two-sided test level / CI complement (default 0.05)")
    syn.add_argument("--slopes-only", action="store_true",
                     help="drop intercepts from the synthesis and its tests")
    syn.add_argument("--report", choices=["text", "json"], default="text")
    syn.add_argument("--out", default=None, help="also write the report to this file")

    sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    sim.add_argument("--study", choices=["calibration", "variance"], default="calibration")
    sim.add_argument("--preset", choices=["paper-shape"], default="paper-shape")
    sim.add_argument("--reps", type=int, default=None,
                     help="replications (default 5000 calibration, 2000 variance)")
    sim.add_argument("--seed", type=_seed, default=0)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--report", choices=["text", "json"], default="text")
    sim.add_argument("--out", default=None)

    ver = sub.add_parser("verify", help="check the pooled-sample equivalence")
    ver.add_argument("--preset", choices=["paper-shape"], default="paper-shape")
    ver.add_argument("--data", default=None,
                     help="raw-data CSV (study_id, y, predictors...); replaces the preset")
    ver.add_argument("--seed", type=_seed, default=0)
    ver.add_argument("--report", choices=["text", "json"], default="text")
    ver.add_argument("--out", default=None)
    return parser


def run_synthesize(args) -> tuple[dict, str]:
    study_file = parse_study_file(args.input, args.format)
    mode = _MODES[args.method]
    if not 0.0 < args.alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {args.alpha}")
    system = build_system(
        study_file.studies,
        study_file.catalog,
        moderators=study_file.moderators,
        mode=mode,
        slopes_only=args.slopes_only,
        corr_fill=args.corr_fill,
    )
    if mode is SynthesisMode.POOLED_MSE:
        s_star = pooled_mse(
            [s.dfe for s in study_file.studies],
            [s.mse for s in study_file.studies],
        )
        result = pooled_gls_estimate(system, s_star)
    else:
        result = gls_estimate(system)
    report = synthesis_report(system, result, study_file.studies, alpha=args.alpha)
    return report, render_synthesis_text(report, result)


def run_simulate(args) -> tuple[dict, str]:
    if args.study == "calibration":
        reps = 5000 if args.reps is None else args.reps
        config = paper_shape(seed=args.seed, equal_variance=True)
        study = run_calibration(config, reps=reps, alpha=args.alpha)
    else:
        reps = 2000 if args.reps is None else args.reps
        config = paper_shape(seed=args.seed, equal_variance=False)
        study = run_variance_probe(config, reps=reps)
    report = simulate_report(study, seed=args.seed)
    return report, render_simulate_text(report)


def run_verify(args) -> tuple[dict, str]:
    if args.data is not None:
        data = parse_raw_csv(args.data)
        source = args.data
        seed = None
    else:
        data = generate(paper_shape(seed=args.seed))
        source = f"preset {args.preset}"
        seed = args.seed
    equivalence = verify_equivalence(data)
    levene = levene_from_dataset(data) if len(data.study_ids) >= 2 else None
    report = verify_report(equivalence, levene=levene, seed=seed, source=source)
    return report, render_verify_text(report)


def _emit(report: dict, text: str, args) -> None:
    payload = to_json(report) + "\n" if args.report == "json" else text
    sys.stdout.write(payload)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(payload)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synthesize":
            report, text = run_synthesize(args)
            _emit(report, text, args)
        elif args.command == "simulate":
            report, text = run_simulate(args)
            _emit(report, text, args)
        else:
            report, text = run_verify(args)
            _emit(report, text, args)
            if not report["pass"]:
                print("error: equivalence check FAILED", file=sys.stderr)
                return 3
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SingularityError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
