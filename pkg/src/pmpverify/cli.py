"""Command-line entry point.

Subcommands: ``run`` (verify a run file, exit 0 pass / 1 fail / 2 error),
``expand`` (needle-expansion CSV), ``picard`` (contraction CSV), ``list``
(registry names).  Run files are JSON:

    {"problem": "double_integrator", "params": {}, "control": "optimal",
     "checks": ["MP", "TC"], "tolerances": {"mp": 1e-6}, "seed": 0}

``control`` is either a registry control name or a piecewise-constant form
{"breakpoints": [...], "values": [[...], ...]}.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import registry
from .errors import ContractError, PmpError
from .integrate import build_bielecki_context, solve_picard, solve_rk
from .needle import apply_needle, expansion_check
from .pmpcheck import (
    BOLZA_CONDITIONS,
    DEFAULT_CHECKS,
    MAYER_CONDITIONS,
    VerifyConfig,
    verify,
)
from .problem import bolza_to_mayer
from .pwfun import PiecewiseControl, normalize_control

RUN_KEYS = {"problem", "params", "control", "checks", "tolerances", "seed"}


@dataclass
class RunConfig:
    problem: str
    control: object
    params: dict = field(default_factory=dict)
    checks: list = None
    tolerances: dict = field(default_factory=dict)
    seed: int = 0

    def as_dict(self):
        out = {
            "problem": self.problem,
            "control": self.control,
            "params": self.params,
            "tolerances": self.tolerances,
            "seed": self.seed,
        }
        if self.checks is not None:
            out["checks"] = list(self.checks)
        return out


def parse_run(path) -> RunConfig:
    """Load and validate a run file; unknown keys and bad values are rejected."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ContractError("run file must hold a JSON object")
    unknown = set(data) - RUN_KEYS
    if unknown:
        raise ContractError(f"unknown run-file keys: {', '.join(sorted(unknown))}")
    if "problem" not in data:
        raise ContractError("run file needs a 'problem' name")
    if "control" not in data:
        raise ContractError("run file needs a 'control' entry")
    name = data["problem"]
    if name not in registry.REGISTRY:
        raise ContractError(
            f"unknown problem {name!r}; registry: {', '.join(registry.names())}"
        )
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ContractError("'params' must be an object")
    control = data["control"]
    if not isinstance(control, (str, dict)):
        raise ContractError("'control' must be a registry name or a piecewise-constant form")
    checks = data.get("checks")
    if checks is not None:
        if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
            raise ContractError("'checks' must be a list of condition tags")
        allowed = set(MAYER_CONDITIONS) | set(BOLZA_CONDITIONS)
        bad = [c for c in checks if c not in allowed]
        if bad:
            raise ContractError(f"unknown checks: {', '.join(bad)}")
    tolerances = data.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ContractError("'tolerances' must be an object")
    for key, value in tolerances.items():
        if not isinstance(value, (int, float)) or value <= 0:
            raise ContractError(f"tolerance {key!r} must be a positive number")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ContractError("'seed' must be an integer")
    return RunConfig(
        problem=name,
        control=control,
        params=params,
        checks=checks,
        tolerances=dict(tolerances),
        seed=seed,
    )


def resolve(cfg: RunConfig):
    """Instantiate the problem and candidate control of a run config."""
    prob, controls = registry.make(cfg.problem, cfg.params)
    if isinstance(cfg.control, str):
        if cfg.control not in controls:
            raise ContractError(
                f"problem {cfg.problem!r} has no control {cfg.control!r}; "
                f"available: {', '.join(sorted(controls))}"
            )
        control = controls[cfg.control]
    else:
        control = normalize_control(PiecewiseControl.from_json(cfg.control))
        if abs(control.horizon - prob.T) > 1e-9 * prob.T:
            raise ContractError("control horizon differs from the problem horizon")
    return prob, control


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def cmd_run(args):
    cfg = parse_run(args.file)
    if args.seed is not None:
        cfg.seed = args.seed
    prob, control = resolve(cfg)
    vconf = VerifyConfig(seed=cfg.seed).with_overrides(cfg.tolerances)
    if cfg.checks:
        vconf.checks = tuple(cfg.checks)
    report = verify(prob, control, vconf, problem_name=cfg.problem, params=cfg.params)
    payload = report.to_json()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    if args.csv:
        _dump_diag_csv(args.csv, report)
    for v in report.verdicts:
        mark = "PASS" if v.passed else "FAIL"
        req = "" if v.requested else " (informational)"
        print(f"{v.condition:<10} {mark}  residual {v.residual:.3e}  tol {v.tolerance:.3e}{req}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _dump_diag_csv(directory, report):
    import os

    os.makedirs(directory, exist_ok=True)
    diag = report.diagnostics
    picard = diag.get("picard")
    if picard and "residuals" in picard:
        rows = []
        residuals = picard["residuals"]
        for i, res in enumerate(residuals):
            ratio = residuals[i] / residuals[i - 1] if i else ""
            rows.append((i + 1, res, ratio))
        _write_csv(
            os.path.join(directory, "picard.csv"),
            ("iterate", "bielecki_residual", "ratio"),
            rows,
        )
    expansion = diag.get("expansion")
    if expansion and "scalings" in expansion:
        rows = [
            (s, r, r / s)
            for s, r in zip(expansion["scalings"], expansion["remainders"])
        ]
        _write_csv(
            os.path.join(directory, "expansion.csv"),
            ("scale", "remainder", "remainder_over_scale"),
            rows,
        )


def _work_problem(prob):
    return bolza_to_mayer(prob).mayer if prob.is_bolza else prob


def cmd_expand(args):
    cfg = parse_run(args.file)
    if args.seed is not None:
        cfg.seed = args.seed
    prob, control = resolve(cfg)
    work = _work_problem(prob)
    traj = solve_rk(work, control)
    from .pmpcheck import _diag_family
    from .problem import Candidate

    family = _diag_family(work, control)
    if family is None:
        print("control covers every vertex; nothing to expand", file=sys.stderr)
        return 2
    ctx = build_bielecki_context(work, traj, control, family)
    rng = np.random.default_rng(cfg.seed)
    direction = rng.random(family.size)
    direction /= np.linalg.norm(direction)
    report = expansion_check(work, Candidate(control, traj), family, ctx, direction)
    rows = report.rows()
    if args.csv:
        _write_csv(args.csv, ("scale", "remainder", "remainder_over_scale"), rows)
    for s, r, ros in rows:
        print(f"scale {s:.6e}  remainder {r:.6e}  remainder/scale {ros:.6e}")
    print(f"order estimate (log-log slope): {report.order_estimate:.3f}")
    return 0


def cmd_picard(args):
    cfg = parse_run(args.file)
    if args.seed is not None:
        cfg.seed = args.seed
    prob, control = resolve(cfg)
    work = _work_problem(prob)
    traj = solve_rk(work, control)
    from .pmpcheck import _diag_family

    family = _diag_family(work, control)
    if family is None:
        print("control covers every vertex; nothing to perturb", file=sys.stderr)
        return 2
    ctx = build_bielecki_context(work, traj, control, family)
    rng = np.random.default_rng(cfg.seed)
    a = rng.random(family.size)
    a = a / np.linalg.norm(a) * 0.9 * ctx.r2
    u_a = apply_needle(control, family, a)
    _, trace = solve_picard(work, u_a, traj, ctx)
    rows = trace.rows()
    if args.csv:
        _write_csv(args.csv, ("iterate", "bielecki_residual", "ratio"), rows)
    for i, res, ratio in rows:
        extra = f"  ratio {ratio:.4f}" if ratio != "" else ""
        print(f"iterate {i}  residual {res:.6e}{extra}")
    bound = 1.0 - math.exp(-ctx.L * work.T)
    print(f"measured ratio {trace.measured_ratio:.4f}  bound {bound:.4f}")
    return 0


def cmd_list(args):
    for name in registry.names():
        print(name)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pmpverify",
        description="Check Pontryagin maximum-principle necessary conditions numerically.",
    )
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="verify a run file")
    run_p.add_argument("file")
    run_p.add_argument("--report", help="write the JSON report here")
    run_p.add_argument("--csv", help="directory for diagnostics CSV files")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.set_defaults(func=cmd_run)

    exp_p = sub.add_parser("expand", help="needle-expansion decay study (CSV)")
    exp_p.add_argument("file")
    exp_p.add_argument("--csv", help="write the CSV here")
    exp_p.add_argument("--seed", type=int, default=None)
    exp_p.set_defaults(func=cmd_expand)

    pic_p = sub.add_parser("picard", help="fixed-point contraction study (CSV)")
    pic_p.add_argument("file")
    pic_p.add_argument("--csv", help="write the CSV here")
    pic_p.add_argument("--seed", type=int, default=None)
    pic_p.set_defaults(func=cmd_picard)

    list_p = sub.add_parser("list", help="list registry problems")
    list_p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (PmpError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
