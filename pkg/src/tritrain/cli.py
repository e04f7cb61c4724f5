"""Command line front end: train, ablate, and the verification checks.

Exit codes: 0 success, 1 verification failure, 2 usage error (argparse).
Each verify subcommand prints a human-readable report and writes the
same content as JSON next to it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

from .coding import equivalence_sweep
from .harness import RunConfig, SUMMARY_COLUMNS, ablate, summarize_run, train
from .tasks import load_tasks
from .theory import (
    DEFAULT_M_GRID,
    DEFAULT_P_GRID,
    format_theorem1_report,
    mc_objective_identity,
    reference_identity_configs,
    reference_ratio_sweep,
    verify_theorem1,
    weight_ratio_curve,
)

QUICK_P_GRID = (0.2, 0.5, 0.8)
QUICK_M_GRID = (1, 4, 16, 64)


def _parse_seeds(text: str) -> list[int]:
    """Accepts "0..19", "0,1,5", or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, (bool, int, float, str)) or value is None:
        return value
    return str(value)


def _write_report(payload: dict, path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")
    print(f"report written to {path}")


def _load_config(path) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else config.seeds[0]
    tasks = load_tasks(args.tasks) if args.tasks else None
    result = train(config, seed, out_dir=args.out, workers=args.workers,
                   tasks=tasks)
    summary = summarize_run(result)
    print(f"mode={config.mode} seed={seed} steps={config.steps}")
    for key, value in summary.items():
        print(f"  {key}={value:.4f}" if isinstance(value, float)
              else f"  {key}={value}")
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args.config)
    modes = [part.strip() for part in args.modes.split(",") if part.strip()]
    seeds = _parse_seeds(args.seeds)
    rows = ablate(config, modes, seeds, out_dir=args.out,
                  workers=args.workers)
    print(" ".join(SUMMARY_COLUMNS))
    for row in rows:
        if row["seed"] == "mean":
            print(" ".join(str(row[c]) for c in SUMMARY_COLUMNS))
    return 0


def _cmd_verify_thm1(args) -> int:
    if args.grid == "quick":
        report = verify_theorem1(QUICK_P_GRID, QUICK_M_GRID)
    else:
        report = verify_theorem1(DEFAULT_P_GRID, DEFAULT_M_GRID)
    print(format_theorem1_report(report))
    payload = {"check": "thm1", "grid": args.grid, "rows": list(report.rows),
               "violations": list(report.violations), "passed": report.passed}
    _write_report(payload, args.report)
    return 0 if report.passed else 1


def _cmd_verify_thm2(args) -> int:
    reports = {}
    violations = []
    for name, (task, policy, rm) in reference_identity_configs().items():
        rep = mc_objective_identity(task, policy, rm, lam=1.0,
                                    n_samples=args.n_samples, seed=args.seed)
        reports[name] = asdict(rep)
        flag = "" if rep.rel_error < args.rel_tol else "  <-- FAIL"
        if flag:
            violations.append(f"{name}: rel_error {rep.rel_error:.5f}"
                              f" >= {args.rel_tol}")
        warn = " (low sample count)" if rep.low_sample_warning else ""
        print(f"{name:>9}: lhs={rep.lhs_estimate:+.6f} "
              f"rhs={rep.rhs_estimate:+.6f} rel_error={rep.rel_error:.5f}"
              f" +- {rep.std_error:.5f}{warn}{flag}")
    passed = not violations
    print("PASS" if passed else "FAIL")
    _write_report({"check": "thm2", "n_samples": args.n_samples,
                   "seed": args.seed, "rel_tol": args.rel_tol,
                   "configs": reports, "violations": violations,
                   "passed": passed}, args.report)
    return 0 if passed else 1


def _cmd_verify_remark1(args) -> int:
    tasks, policy, rm = reference_ratio_sweep()
    rows = weight_ratio_curve(tasks, policy, rm, args.samples, args.seed)
    by_id = {row["task_id"]: row for row in rows}
    hard, bal, easy = (by_id["ratio-hard"], by_id["ratio-balanced"],
                       by_id["ratio-easy"])
    violations = []
    if not hard["ratio"] < 0.1 * bal["ratio"]:
        violations.append("ratio(hard) not < 0.1 * ratio(balanced)")
    if not (math.isinf(easy["ratio"]) or 0.1 * bal["ratio"] < 0.01 * easy["ratio"]):
        violations.append("0.1 * ratio(balanced) not < 0.01 * ratio(easy)")
    for row in rows:
        print(f"{row['task_id']:>14}: p_success={row['p_success']:.4f} "
              f"norm+={row['norm_plus']:.4f} norm-={row['norm_minus']:.4f} "
              f"ratio={row['ratio']:.4f}")
    passed = not violations
    print("PASS" if passed else "FAIL: " + "; ".join(violations))
    _write_report({"check": "remark1", "samples": args.samples,
                   "seed": args.seed, "rows": rows,
                   "violations": violations, "passed": passed}, args.report)
    return 0 if passed else 1


def _cmd_verify_coding(args) -> int:
    report = equivalence_sweep(args.instances, seed0=args.seed, tol=args.tol)
    for key, value in report.items():
        print(f"  {key}={value}")
    report["check"] = "coding_equiv"
    passed = report["passed"] and report["degenerate_fraction"] < 0.05
    print("PASS" if passed else "FAIL")
    report["passed"] = passed
    _write_report(report, args.report)
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tritrain",
        description="Deterministic co-training of a policy, a step labeler,"
                    " and an adaptive task pool.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job")
    p_train.add_argument("--config", help="RunConfig JSON file")
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--workers", type=int, default=1)
    p_train.add_argument("--tasks", help="task file overriding the built-in suite")
    p_train.set_defaults(func=_cmd_train)

    p_abl = sub.add_parser("ablate", help="mode x seed sweep with CSV summary")
    p_abl.add_argument("--config", help="RunConfig JSON template")
    p_abl.add_argument("--modes", required=True,
                       help="comma list; entries may carry overrides like"
                            " policy_reward:lambda_rm=4")
    p_abl.add_argument("--seeds", required=True, help='e.g. "0..19" or "0,1,2"')
    p_abl.add_argument("--out", required=True)
    p_abl.add_argument("--workers", type=int, default=1)
    p_abl.set_defaults(func=_cmd_ablate)

    p_ver = sub.add_parser("verify", help="exact and Monte-Carlo checks")
    checks = p_ver.add_subparsers(dest="check", required=True)

    c1 = checks.add_parser("thm1", help="precision lower bound grid")
    c1.add_argument("--grid", choices=("default", "quick"), default="default")
    c1.add_argument("--report", default="verify_thm1_report.json")
    c1.set_defaults(func=_cmd_verify_thm1)

    c2 = checks.add_parser("thm2", help="objective identity on reference configs")
    c2.add_argument("--n-samples", type=int, default=10**6)
    c2.add_argument("--seed", type=int, default=0)
    c2.add_argument("--rel-tol", type=float, default=0.03)
    c2.add_argument("--report", default="verify_thm2_report.json")
    c2.set_defaults(func=_cmd_verify_thm2)

    c3 = checks.add_parser("remark1", help="outcome-gated weight ratio ordering")
    c3.add_argument("--samples", type=int, default=20000)
    c3.add_argument("--seed", type=int, default=0)
    c3.add_argument("--report", default="verify_remark1_report.json")
    c3.set_defaults(func=_cmd_verify_remark1)

    c4 = checks.add_parser("coding_equiv",
                           help="three reward forms share one advantage vector")
    c4.add_argument("--instances", type=int, default=1000)
    c4.add_argument("--seed", type=int, default=0)
    c4.add_argument("--tol", type=float, default=1e-12)
    c4.add_argument("--report", default="verify_coding_equiv_report.json")
    c4.set_defaults(func=_cmd_verify_coding)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
