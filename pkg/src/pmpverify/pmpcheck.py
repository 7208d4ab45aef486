"""Verdicts for every necessary condition, and the end-to-end verifier.

Bolza problems are reduced to Mayer form by state augmentation, so a single
pipeline serves both kinds: the augmented Hamiltonian P . F equals
lambda0 f0 + p f, and the accumulator component of the augmented costate is
the cost multiplier.  Scale-sensitive tolerances are applied relative to the
measured magnitude so rescaling the terminal data cannot flip a verdict;
verdicts always record the raw residual and the effective tolerance used.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ContractError, PmpError
from .integrate import build_bielecki_context, solve_picard, solve_rk
from .multiplier import (
    MultiplierSolution,
    StaticReduction,
    check_qualification,
    reduce_to_static,
    solve_multiplier_rule,
)
from .needle import (
    NeedleSpec,
    corner_needles,
    default_needle_family,
    expansion_check,
    lattice_times,
)
from .problem import (
    Box,
    Candidate,
    FiniteSet,
    ProblemSpec,
    bolza_to_mayer,
    d1f,
    dynamics_residual,
    objective_value,
    terminal_data,
)
from .resolvent import (
    Costate,
    adjoint_residual,
    build_costate,
    compute_resolvent,
    project_augmented_costate,
)

SCHEMA = "pmp-report/1"

MAYER_CONDITIONS = ("NN", "Si", "Sl", "TC", "AE", "MP", "CH", "H-deriv", "Nontrivial", "QC0")
BOLZA_CONDITIONS = ("NN", "Si", "Sl", "TC", "AE", "MP", "CH", "H-deriv", "Nontrivial", "QC1")
DEFAULT_CHECKS = ("NN", "Si", "Sl", "TC", "AE", "MP", "CH", "H-deriv", "Nontrivial")


@dataclass
class VerifyConfig:
    """All tolerances and sampling knobs in one block."""

    grid_step: float = None  # defaults to T / 2000
    picard_tol: float = 1e-10
    contraction_slack: float = 0.05
    tube_radius: float = None  # defaults to gamma / 2, or 1.0 when unconstrained
    r4_frac: float = 0.5
    n_needle_times: int = 16
    corner_offsets: tuple = (1e-8, 1e-7)
    mp_tol: float = 1e-7
    tc_tol: float = 1e-10
    ae_tol: float = 1e-6
    ch_tol: float = 1e-5
    hd_tol: float = 1e-4
    si_tol: float = 1e-12
    sl_tol: float = 1e-9
    nn_tol: float = 1e-9
    nz_tol: float = 1e-9
    act_tol: float = 1e-8
    stationarity_tol: float = 1e-9
    p0_tol: float = 1e-9
    lattice_cap: int = 512
    n_random_controls: int = 256
    expansion_diagnostics: bool = True
    picard_diagnostics: bool = True
    checks: tuple = None
    seed: int = 0

    def with_overrides(self, tolerances):
        """Apply run-file tolerance overrides given by short names."""
        mapping = {
            "mp": "mp_tol",
            "tc": "tc_tol",
            "ae": "ae_tol",
            "ch": "ch_tol",
            "h_deriv": "hd_tol",
            "si": "si_tol",
            "sl": "sl_tol",
            "nn": "nn_tol",
            "nz": "nz_tol",
            "act": "act_tol",
            "stationarity": "stationarity_tol",
            "p0": "p0_tol",
            "picard": "picard_tol",
            "grid_step": "grid_step",
        }
        out = VerifyConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for key, value in (tolerances or {}).items():
            if key not in mapping:
                raise ContractError(f"unknown tolerance key {key!r}")
            if not (isinstance(value, (int, float)) and value > 0):
                raise ContractError(f"tolerance {key!r} must be a positive number")
            setattr(out, mapping[key], float(value))
        return out


@dataclass
class Verdict:
    condition: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""
    requested: bool = True

    def as_dict(self):
        return {
            "condition": self.condition,
            "pass": bool(self.passed),
            "residual": float(self.residual),
            "tolerance": float(self.tolerance),
            "requested": bool(self.requested),
            "detail": self.detail,
        }


@dataclass
class Report:
    problem: dict
    verdicts: list
    multipliers: dict
    qualification: dict
    diagnostics: dict
    objective: float

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts if v.requested)

    def verdict(self, condition):
        for v in self.verdicts:
            if v.condition == condition:
                return v
        raise KeyError(condition)

    def as_dict(self):
        return {
            "schema": SCHEMA,
            "problem": self.problem,
            "verdicts": [v.as_dict() for v in self.verdicts],
            "multipliers": self.multipliers,
            "qualification": self.qualification,
            "diagnostics": self.diagnostics,
            "objective": float(self.objective),
            "pass": bool(self.passed),
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Hamiltonians

def hamiltonian(p: ProblemSpec, kind, t, x, zeta, p_row, lambda0=None):
    """H_M = p . f; H_B = lambda0 f0 + p . f (lambda0 required for Bolza)."""
    value = float(np.dot(p_row, np.asarray(p.f(t, x, zeta), float)))
    if kind == "bolza":
        if lambda0 is None:
            raise ContractError("Bolza Hamiltonian needs lambda0")
        if p.f0 is None:
            raise ContractError("problem has no running cost")
        value += lambda0 * float(p.f0(t, x, zeta))
    elif kind != "mayer":
        raise ContractError(f"unknown Hamiltonian kind {kind!r}")
    return value


def control_samples(uset, rng, lattice_cap=512, n_random=256):
    """Sample plan over the control set: all points of a finite set, or box
    vertices + a capped lattice + random interior points."""
    if isinstance(uset, FiniteSet):
        return uset.vertices(), {"kind": "finite", "count": len(uset.points)}
    if not isinstance(uset, Box):
        raise ContractError("control set must be a box or a finite set")
    samples = list(uset.vertices())
    lattice = uset.lattice(total_cap=min(lattice_cap, 32**uset.dim))
    samples.extend(lattice)
    randoms = uset.sample(rng, n_random)
    samples.extend(randoms)
    plan = {
        "kind": "box",
        "vertices": len(uset.vertices()),
        "lattice": len(lattice),
        "random": n_random,
    }
    return samples, plan


# ---------------------------------------------------------------------------
# individual checks (all operate on the working Mayer-form problem)

def check_max_principle(p, cand, costate, samples, grid=None, tol=1e-7, requested=True):
    """Worst Hamiltonian advantage of any sampled control value over u0."""
    traj = cand.trajectory
    u0 = cand.control
    grid = traj.grid if grid is None else np.asarray(grid, float)
    rows = np.array([costate(t) for t in grid])
    worst = 0.0
    worst_t = float(grid[0])
    hbar_max = 0.0
    for j, t in enumerate(grid):
        x = traj.values[j] if grid is traj.grid else traj(t)
        row = rows[j]
        h0 = float(row @ np.asarray(p.f(t, x, u0(t)), float))
        hbar_max = max(hbar_max, abs(h0))
        best = max(float(row @ np.asarray(p.f(t, x, z), float)) for z in samples)
        gap = best - h0
        if gap > worst:
            worst, worst_t = gap, float(t)
    tol_eff = tol * (1.0 + hbar_max)
    return Verdict(
        "MP",
        worst <= tol_eff,
        worst,
        tol_eff,
        detail=f"worst advantage at t = {worst_t:.6g}",
        requested=requested,
    )


def check_transversality(p, cand, costate, ms, tol=1e-10, requested=True):
    """p(T) against the multiplier-weighted terminal gradients, recomputed."""
    xT = cand.trajectory.endpoint()
    _, _, Dg, Dh = terminal_data(p, xT)
    combo = np.asarray(ms.lam, float) @ Dg
    if len(ms.mu):
        combo = combo + np.asarray(ms.mu, float) @ Dh
    pT = costate.terminal()
    residual = float(np.max(np.abs(combo - pT)))
    scale = 1.0 + float(np.max(np.abs(pT))) if pT.size else 1.0
    tol_eff = tol * scale
    return Verdict("TC", residual <= tol_eff, residual, tol_eff, requested=requested)


def check_sign_slackness_nn(ms, g_vals, si_tol=1e-12, sl_tol=1e-9, nn_tol=1e-9, requested=True):
    """(Si) lambda >= 0, (Sl) lambda_a g^a = 0 off the optimum, (NN) mass 1."""
    lam = np.asarray(ms.lam, float)
    si_res = max(0.0, float(-np.min(lam))) if lam.size else 0.0
    v_si = Verdict("Si", si_res <= si_tol, si_res, si_tol, requested=requested)
    if len(lam) > 1:
        g_scale = 1.0 + float(np.max(np.abs(g_vals[1:])))
        sl_res = float(np.max(np.abs(lam[1:] * g_vals[1:])))
    else:
        g_scale = 1.0
        sl_res = 0.0
    tol_sl_eff = sl_tol * g_scale
    v_sl = Verdict("Sl", sl_res <= tol_sl_eff, sl_res, tol_sl_eff, requested=requested)
    nn_res = max(0.0, 1.0 - ms.weight())
    v_nn = Verdict("NN", nn_res <= nn_tol, nn_res, nn_tol, requested=requested)
    return v_nn, v_si, v_sl


def check_adjoint(p, cand, costate, tol=1e-6, requested=True):
    residual, worst_t = adjoint_residual(costate, p, cand)
    rows_scale = 1.0 + float(np.max(np.abs(costate.terminal())))
    tol_eff = tol * rows_scale
    return Verdict(
        "AE",
        residual <= tol_eff,
        residual,
        tol_eff,
        detail=f"worst defect at t = {worst_t:.6g}",
        requested=requested,
    )


def _hbar(p, cand, costate, t):
    return float(costate(t) @ np.asarray(p.f(t, cand.trajectory(t), cand.control(t)), float))


def check_hamiltonian_continuity(p, cand, costate, tol=1e-5, requested=True):
    """One-sided extrapolated Hamiltonian jumps at the control corners."""
    T = p.T
    corners = [c for c in cand.control.breakpoints.interior]
    grid = cand.trajectory.grid
    hbar_samples = [_hbar(p, cand, costate, t) for t in grid[:: max(1, len(grid) // 128)]]
    scale = 1.0 + max(abs(v) for v in hbar_samples)
    if not corners:
        return Verdict("CH", True, 0.0, tol * scale, detail="no corners", requested=requested)
    d1, d2 = 1e-5 * T, 1e-6 * T
    worst = 0.0
    worst_c = corners[0]
    for c in corners:
        sides = []
        for sign in (-1.0, +1.0):
            h1 = _hbar(p, cand, costate, c + sign * d1)
            h2 = _hbar(p, cand, costate, c + sign * d2)
            sides.append((d1 * h2 - d2 * h1) / (d1 - d2))
        jump = abs(sides[0] - sides[1])
        if jump > worst:
            worst, worst_c = jump, c
    tol_eff = tol * scale
    return Verdict(
        "CH",
        worst <= tol_eff,
        worst,
        tol_eff,
        detail=f"worst jump at corner t = {worst_c:.6g}",
        requested=requested,
    )


def check_hamiltonian_derivative(p, cand, costate, tol=1e-4, requested=True):
    """d/dt of the maximized Hamiltonian against the explicit time partial."""
    if p.jacobians.get("d1f_missing"):
        return Verdict(
            "H-deriv", True, 0.0, tol, detail="not evaluated: no time partials", requested=requested
        )
    traj = cand.trajectory
    u0 = cand.control
    grid = traj.grid
    corners = traj.corners
    worst = 0.0
    worst_t = float(grid[0])
    rhs_max = 0.0
    pairs = []
    for j in range(1, len(grid) - 1):
        t = grid[j]
        half = 0.5 * min(t - grid[j - 1], grid[j + 1] - t)
        if any(abs(t - c) <= 2.5 * half for c in corners):
            continue
        hp = _hbar(p, cand, costate, t + half)
        hm = _hbar(p, cand, costate, t - half)
        fd = (hp - hm) / (2 * half)
        rhs = float(costate(t) @ d1f(p, t, traj.values[j], u0(t)))
        pairs.append((t, fd, rhs))
        rhs_max = max(rhs_max, abs(fd), abs(rhs))
    for t, fd, rhs in pairs:
        res = abs(fd - rhs)
        if res > worst:
            worst, worst_t = res, t
    tol_eff = tol * (1.0 + rhs_max)
    return Verdict(
        "H-deriv",
        worst <= tol_eff,
        worst,
        tol_eff,
        detail=f"worst mismatch at t = {worst_t:.6g}",
        requested=requested,
    )


def check_nontriviality(ms, costate, grid, qualified, kind, tol=1e-9, requested=True):
    """(lambda0, p(t)) never zero (Bolza) / p(t) never zero (Mayer), under QC."""
    if not qualified:
        return Verdict(
            "Nontrivial",
            True,
            0.0,
            0.0,
            detail="not applicable: qualification condition fails",
            requested=requested,
        )
    pT = costate.terminal()
    base = float(np.linalg.norm(pT))
    lam0 = getattr(costate, "lambda0", None)
    if kind == "bolza" and lam0 is not None:
        base += abs(lam0)
    floor = tol * max(base, 1.0)
    worst = math.inf
    worst_t = float(grid[0])
    for t in grid:
        metric = float(np.linalg.norm(costate(t)))
        if kind == "bolza" and lam0 is not None:
            metric += abs(lam0)
        if metric < worst:
            worst, worst_t = metric, float(t)
    residual = max(0.0, floor - worst)
    return Verdict(
        "Nontrivial",
        residual <= 0.0,
        residual,
        0.0,
        detail=f"min multiplier magnitude {worst:.3g} at t = {worst_t:.6g}",
        requested=requested,
    )


# ---------------------------------------------------------------------------
# end-to-end verification

def _control_digest(control):
    try:
        payload = json.dumps(control.to_json(), sort_keys=True)
    except ValueError:
        payload = f"closure:{len(control.breakpoints)}:{control.horizon}"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def verify(
    p: ProblemSpec,
    control,
    config: VerifyConfig = None,
    problem_name=None,
    params=None,
) -> Report:
    """Run the full necessary-condition checklist on one candidate.

    Integrates the trajectory when absent, builds the merged needle family,
    extracts multipliers from the static reduction, builds the costate, and
    evaluates every applicable conclusion.  Module errors become structured
    report entries rather than crashes.
    """
    config = config or VerifyConfig()
    rng = np.random.default_rng(config.seed)
    kind = "bolza" if p.is_bolza else "mayer"

    requested = tuple(config.checks) if config.checks else DEFAULT_CHECKS
    applicable = BOLZA_CONDITIONS if kind == "bolza" else MAYER_CONDITIONS
    for tag in requested:
        if tag not in applicable:
            raise ContractError(f"check {tag!r} not applicable to a {kind} problem")

    if kind == "bolza":
        aug = bolza_to_mayer(p)
        work = aug.mayer
    else:
        work = p

    grid_step = config.grid_step if config.grid_step is not None else p.T / 2000.0
    traj = solve_rk(work, control, grid_step=grid_step)
    cand = Candidate(control=control, trajectory=traj)

    family = default_needle_family(
        work, control, n_times=config.n_needle_times, corner_offsets=config.corner_offsets
    )
    field_ = compute_resolvent(work, cand)
    sr = reduce_to_static(work, cand, family, field_, tol_act=config.act_tol)
    sol = solve_multiplier_rule(sr, tol=config.stationarity_tol)
    ms = sol.multipliers

    costate_aug = build_costate(ms.lam, ms.mu, sr.Dg, sr.Dh, field_)
    if kind == "bolza":
        lam0_p0, costate = project_augmented_costate(costate_aug, tol=config.p0_tol)
        costate_for_work = costate_aug
    else:
        costate = costate_aug
        costate_for_work = costate_aug
        lam0_p0 = None

    qc_index = 1 if kind == "bolza" else 0
    qualified, certificate, qc_res = check_qualification(qc_index, sr)
    qc_tag = f"QC{qc_index}"
    qc_requested = qc_tag in requested
    qc_verdict = Verdict(
        qc_tag,
        qualified,
        0.0 if qualified else 1.0,
        0.0,
        detail="qualified" if qualified else f"disqualified; certificate residual {qc_res:.3g}",
        requested=qc_requested,
    )

    samples, plan = control_samples(
        work.uset, rng, lattice_cap=config.lattice_cap, n_random=config.n_random_controls
    )

    is_req = lambda tag: tag in requested
    v_nn, v_si, v_sl = check_sign_slackness_nn(
        ms,
        sr.g_vals,
        si_tol=config.si_tol,
        sl_tol=config.sl_tol,
        nn_tol=config.nn_tol,
    )
    v_nn.requested, v_si.requested, v_sl.requested = map(is_req, ("NN", "Si", "Sl"))
    v_tc = check_transversality(work, cand, costate_for_work, ms, tol=config.tc_tol, requested=is_req("TC"))
    v_ae = check_adjoint(work, cand, costate_for_work, tol=config.ae_tol, requested=is_req("AE"))
    v_mp = check_max_principle(
        work, cand, costate_for_work, samples, tol=config.mp_tol, requested=is_req("MP")
    )
    v_ch = check_hamiltonian_continuity(
        work, cand, costate_for_work, tol=config.ch_tol, requested=is_req("CH")
    )
    v_hd = check_hamiltonian_derivative(
        work, cand, costate_for_work, tol=config.hd_tol, requested=is_req("H-deriv")
    )
    nt_costate = costate if kind == "bolza" else costate_aug
    v_nt = check_nontriviality(
        ms,
        nt_costate,
        traj.grid[:: max(1, len(traj.grid) // 256)],
        qualified,
        kind,
        tol=config.nz_tol,
        requested=is_req("Nontrivial"),
    )

    verdicts = [v_nn, v_si, v_sl, v_tc, v_ae, v_mp, v_ch, v_hd, v_nt, qc_verdict]

    diagnostics = {
        "dynamics_residual": dynamics_residual(work, cand),
        "needle_family": {
            "count": family.size,
            "times": [float(t) for t in family.times],
            "corner_needles": corner_needles(family, control.breakpoints.interior),
        },
        "mp_samples": plan,
        "terminal": {
            "g_values": [float(v) for v in sr.g_vals],
            "h_values": [float(v) for v in sr.h_vals],
            "active_set": list(sr.active_set),
        },
        "grid_step": grid_step,
        "resolvent_max_condition": field_.max_condition,
    }
    if kind == "bolza":
        diagnostics["p0"] = {"lambda0": float(lam0_p0), "tolerance": config.p0_tol}

    # budgets and fixed-point diagnostics run on a clean lattice family: the
    # corner-adjacent needles of the multiplier family would collapse the
    # thickness budget to the corner offset
    diag_family = _diag_family(work, control)
    ctx = None
    if diag_family is not None:
        try:
            ctx = build_bielecki_context(
                work, traj, control, diag_family, r=config.tube_radius, rng=rng
            )
            diagnostics["bielecki"] = ctx.as_dict()
        except PmpError as exc:
            diagnostics["bielecki"] = {"error": f"{type(exc).__name__}: {exc}"}

    if ctx is not None and config.expansion_diagnostics:
        try:
            diagnostics["expansion"] = _expansion_summary(
                work, cand, diag_family, ctx, field_, grid_step
            )
        except PmpError as exc:
            diagnostics["expansion"] = {"error": f"{type(exc).__name__}: {exc}"}
    if ctx is not None and config.picard_diagnostics:
        try:
            diagnostics["picard"] = _picard_summary(
                work, cand, diag_family, ctx, rng, config.picard_tol, config.contraction_slack
            )
        except PmpError as exc:
            diagnostics["picard"] = {"error": f"{type(exc).__name__}: {exc}"}

    multipliers = ms.as_dict()
    multipliers["feasible"] = bool(sol.feasible)
    multipliers["stationarity_residual"] = float(sol.stationarity_residual)
    if sol.message:
        multipliers["message"] = sol.message
    if kind == "bolza":
        multipliers["lambda0_from_p0"] = float(lam0_p0)

    problem_block = {
        "name": problem_name or p.name or "custom",
        "params": params or {},
        "kind": kind,
        "control_digest": _control_digest(control),
        "n": p.n,
        "d": p.d,
        "T": p.T,
        "seed": config.seed,
    }

    qualification = {
        qc_tag: {
            "qualified": bool(qualified),
            "certificate": certificate,
            "residual": float(qc_res),
        }
    }

    return Report(
        problem=problem_block,
        verdicts=verdicts,
        multipliers=multipliers,
        qualification=qualification,
        diagnostics=diagnostics,
        objective=objective_value(p, Candidate(control=control, trajectory=_base_traj(p, traj, kind))),
    )


def _base_traj(p, work_traj, kind):
    """Restrict an augmented trajectory back to the base state for reporting."""
    if kind == "mayer":
        return work_traj
    from .pwfun import Trajectory

    return Trajectory(
        work_traj.grid,
        work_traj.values[:, 1:],
        work_traj.deriv_right[:, 1:],
        work_traj.deriv_left[:, 1:],
        corners=work_traj.corners,
    )


def _diag_family(work, control, n_times=6):
    """Small lattice needle family for budget/expansion/contraction studies."""
    verts = work.uset.vertices()
    pairs = []
    for t in lattice_times(work.T, n_times):
        base = control(t)
        pick = next((v for v in verts if np.max(np.abs(np.atleast_1d(v) - base)) > 0), None)
        if pick is not None:
            pairs.append((t, pick))
    return NeedleSpec(tuple(pairs)) if pairs else None


def _expansion_summary(work, cand, spec, ctx, field_, grid_step):
    direction = np.ones(spec.size) / math.sqrt(spec.size)
    report = expansion_check(
        work,
        cand,
        spec,
        ctx,
        direction,
        scalings=tuple(2.0**-j for j in range(1, 6)),
        grid_step=grid_step,
        field=field_,
    )
    return {
        "scalings": [float(s) for s in report.scalings],
        "remainders": [float(r) for r in report.remainders],
        "order_estimate": float(report.order_estimate),
    }


def _picard_summary(work, cand, family, ctx, rng, tol, slack):
    from .needle import apply_needle

    a = rng.random(family.size)
    norm = np.linalg.norm(a)
    a = a / norm * 0.9 * ctx.r2 if norm > 0 else a
    try:
        u_a = apply_needle(cand.control, family, a)
    except PmpError as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}
    _, trace = solve_picard(work, u_a, cand.trajectory, ctx, tol=tol, slack=slack, grid_step=work.T / 500)
    return {
        "iterations": len(trace.bielecki_residuals),
        "residuals": [float(r) for r in trace.bielecki_residuals],
        "measured_ratio": float(trace.measured_ratio),
        "bound": float(1.0 - math.exp(-ctx.L * work.T)),
        "max_ball_distance": float(max(trace.ball_distances)),
        "r1": float(ctx.r1),
    }
