"""State-transition matrices of the linearized dynamics and the costate.

The forward sweep integrates (x, R) jointly, R' = D2f(t, x0, u0) R from the
identity, restarting at control corners; R(t, s) is recovered by composition
R(t, 0) R(s, 0)^{-1}.  The costate is the row function p(t) = p(T) R(T, t)
seeded by the transversality combination of terminal gradients.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, IllConditionedResolventError, TransformInconsistencyError
from .problem import Candidate, ProblemSpec, d2f, d2f0
from .pwfun import BREAKPOINT_TOL, Trajectory

COND_LIMIT = 1e12


class ResolventField:
    """Transition matrices R(t, 0) on an anchor grid, with local refinement."""

    def __init__(self, p: ProblemSpec, cand: Candidate, anchor_times, propagators):
        self.problem = p
        self.candidate = cand
        self.anchor_times = np.asarray(anchor_times, float)
        self.propagators = np.asarray(propagators, float)
        self.corners = cand.trajectory.corners
        self.T = float(self.anchor_times[-1])
        sample = self.propagators[:: max(1, len(self.propagators) // 64)]
        conds = [float(np.linalg.cond(R)) for R in sample]
        conds.append(float(np.linalg.cond(self.propagators[-1])))
        self.max_condition = max(conds)
        if self.max_condition > COND_LIMIT:
            raise IllConditionedResolventError(
                f"transition matrix condition {self.max_condition:.3g} exceeds {COND_LIMIT:.0e}"
            )

    @property
    def n(self):
        return self.propagators.shape[1]

    def _matrix_rhs(self, t, R):
        x = self.candidate.trajectory(t)
        u = self.candidate.control(t)
        return d2f(self.problem, t, x, u) @ R

    def propagator(self, t):
        """R(t, 0); exact at anchors, one local RK4 step otherwise."""
        t = float(t)
        times = self.anchor_times
        if t < times[0] - BREAKPOINT_TOL * self.T or t > times[-1] + BREAKPOINT_TOL * self.T:
            raise ContractError(f"t = {t} outside [0, {self.T}]")
        t = min(max(t, times[0]), times[-1])
        j = bisect_right(times, t) - 1
        j = min(max(j, 0), len(times) - 1)
        if times[j] == t:
            return self.propagators[j]
        R = self.propagators[j]
        t0 = times[j]
        # do not step across a corner: corners are anchors, so (t0, t) is clean
        return _rk4_matrix_step(self._matrix_rhs, t0, t, R)

    def transition(self, t, s):
        """R(t, s) = R(t, 0) R(s, 0)^{-1}."""
        Rt = self.propagator(t)
        Rs = self.propagator(s)
        return Rt @ np.linalg.inv(Rs)

    def row_at(self, row_T, t):
        """row_T R(T, t) without forming the inverse explicitly."""
        w = row_T @ self.propagators[-1]
        Rs = self.propagator(t)
        return np.linalg.solve(Rs.T, w)


def _rk4_matrix_step(rhs, t0, t1, R0, max_h=None):
    h_total = t1 - t0
    steps = 1
    if max_h is not None and abs(h_total) > max_h:
        steps = int(math.ceil(abs(h_total) / max_h))
    h = h_total / steps
    R = R0
    t = t0
    for _ in range(steps):
        k1 = rhs(t, R)
        k2 = rhs(t + 0.5 * h, R + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, R + 0.5 * h * k2)
        k4 = rhs(t + h, R + h * k3)
        R = R + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
        t += h
    return R


def compute_resolvent(p: ProblemSpec, cand: Candidate, grid_step=None) -> ResolventField:
    """Forward sweep of R' = D2f(t, x0, u0) R from the identity.

    Anchors at half the trajectory grid resolution (nodes and midpoints),
    restarted exactly at control corners.
    """
    traj = cand.trajectory
    if traj is None:
        raise ContractError("candidate has no trajectory; integrate it first")
    u = cand.control
    base = traj.grid
    anchors = np.empty(2 * len(base) - 1)
    anchors[0::2] = base
    anchors[1::2] = 0.5 * (base[:-1] + base[1:])

    def rhs(t, R, seg):
        x = traj(t)
        return d2f(p, t, x, seg(t)) @ R

    props = np.empty((len(anchors), p.n, p.n))
    props[0] = np.eye(p.n)
    bps = u.breakpoints.points
    seg_idx = 0
    for j in range(len(anchors) - 1):
        t0, t1 = anchors[j], anchors[j + 1]
        while seg_idx + 1 < len(u.segments) and t0 >= bps[seg_idx + 1]:
            seg_idx += 1
        seg = u.segments[seg_idx]
        props[j + 1] = _rk4_matrix_step(lambda t, R: rhs(t, R, seg), t0, t1, props[j])
    return ResolventField(p, cand, anchors, props)


def propagator_direct(p: ProblemSpec, cand: Candidate, s, t):
    """R(t, s) by fresh integration from s to t (t < s runs backward)."""
    traj = cand.trajectory
    u = cand.control
    corners = [c for c in traj.corners if min(s, t) < c < max(s, t)]
    knots = sorted(set([float(s), float(t)] + corners))
    if t < s:
        knots = knots[::-1]
    R = np.eye(p.n)
    for a, b in zip(knots, knots[1:]):
        span = b - a
        steps = max(4, int(math.ceil(abs(span) / (p.T / 2000))))
        h = span / steps
        # one control segment governs the open interval between the knots
        seg = u.segments[u.segment_index(min(a, b) + 0.5 * abs(span))]
        tau = a
        for _ in range(steps):
            mid = tau + 0.5 * h
            k1 = d2f(p, tau, traj(tau), seg(tau)) @ R
            k2 = d2f(p, mid, traj(mid), seg(mid)) @ (R + 0.5 * h * k1)
            k3 = d2f(p, mid, traj(mid), seg(mid)) @ (R + 0.5 * h * k2)
            k4 = d2f(p, tau + h, traj(tau + h), seg(tau + h)) @ (R + h * k3)
            R = R + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
            tau += h
    return R


class Costate:
    """Row-valued adjoint p(t) = p(T) R(T, t), with optional lambda0 (Bolza)."""

    def __init__(self, terminal_row, field: ResolventField, lambda0=None):
        self.terminal_row = np.atleast_1d(np.asarray(terminal_row, float))
        self.field = field
        self.lambda0 = lambda0
        if self.terminal_row.shape != (field.n,):
            raise ContractError("terminal row dimension does not match the resolvent")

    def __call__(self, t):
        return self.field.row_at(self.terminal_row, t)

    def terminal(self):
        return self.terminal_row.copy()


class ProjectedCostate:
    """Spatial part of an augmented costate, carrying lambda0 = p0."""

    def __init__(self, aug_costate: Costate, lambda0):
        self._aug = aug_costate
        self.lambda0 = float(lambda0)
        self.terminal_row = aug_costate.terminal_row[1:].copy()
        self.field = aug_costate.field

    def __call__(self, t):
        return self._aug(t)[1:]

    def augmented(self, t):
        return self._aug(t)

    def terminal(self):
        return self.terminal_row.copy()


def build_costate(lambdas, mus, Dg, Dh, field: ResolventField, lambda0=None) -> Costate:
    """Transversality seed p(T) = sum lambda_a Dg^a + sum mu_b Dh^b, propagated."""
    lambdas = np.atleast_1d(np.asarray(lambdas, float))
    mus = np.atleast_1d(np.asarray(mus, float)) if len(mus) else np.zeros(0)
    Dg = np.asarray(Dg, float)
    Dh = np.asarray(Dh, float) if np.size(Dh) else np.zeros((0, field.n))
    if Dg.shape != (len(lambdas), field.n):
        raise ContractError("terminal reward/inequality gradient shape mismatch")
    if len(mus) and Dh.shape != (len(mus), field.n):
        raise ContractError("terminal equality gradient shape mismatch")
    row = lambdas @ Dg
    if len(mus):
        row = row + mus @ Dh
    return Costate(row, field, lambda0=lambda0)


def project_augmented_costate(P: Costate, tol=1e-9, n_check=64):
    """Split an augmented costate into (lambda0, spatial costate).

    The accumulator component p0(t) must be constant; its drift beyond tol
    raises TransformInconsistencyError.
    """
    T = P.field.T
    times = np.linspace(0.0, T, n_check)
    p0_T = P(T)[0]
    drift = max(abs(P(t)[0] - p0_T) for t in times)
    if drift > tol * (1.0 + abs(p0_T)):
        raise TransformInconsistencyError(
            f"augmented costate p0 drifts by {drift:.3g} (tol {tol:g})"
        )
    return float(p0_T), ProjectedCostate(P, p0_T)


def adjoint_residual(pc, p: ProblemSpec, cand: Candidate, grid=None, lambda0=None):
    """Max |p'(t) + D2H(t, x0, u0, p(t))| over an off-corner grid.

    p' comes from centered differences of the propagated row; D2H is
    lambda0 D2f0 + p D2f for Bolza problems and p D2f for Mayer.  Grid points
    within half a step of a corner, or whose difference stencil straddles a
    corner, are skipped.
    """
    traj = cand.trajectory
    u = cand.control
    base = traj.grid if grid is None else np.asarray(grid, float)
    if len(base) < 3:
        raise ContractError("grid too coarse for centered differences")
    lam0 = lambda0 if lambda0 is not None else getattr(pc, "lambda0", None)
    corners = traj.corners
    rows = np.array([pc(t) for t in base])
    worst = 0.0
    worst_t = 0.0
    for j in range(1, len(base) - 1):
        t0, t, t1 = base[j - 1], base[j], base[j + 1]
        half = 0.5 * max(t - t0, t1 - t)
        if any(t0 - 1e-15 <= c <= t1 + 1e-15 or abs(t - c) < half for c in corners):
            continue
        pdot = (rows[j + 1] - rows[j - 1]) / (t1 - t0)
        x = traj(t)
        zeta = u(t)
        row = rows[j] @ d2f(p, t, x, zeta)
        if p.f0 is not None:
            if lam0 is None:
                raise ContractError("Bolza adjoint residual needs lambda0")
            row = row + lam0 * d2f0(p, t, x, zeta)
        res = float(np.max(np.abs(pdot + row)))
        if res > worst:
            worst, worst_t = res, t
    return worst, worst_t
