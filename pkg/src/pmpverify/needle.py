"""Needlelike control variations and the first-order endpoint response.

A needle spec is an ordered list of (time, value) pairs with times in (0, T),
ties allowed.  Thicknesses a >= 0 turn it into disjoint half-open intervals
stacked to the right of each time; the control takes the needle value there
and is unchanged elsewhere.  The endpoint response is linear to first order
with matrix columns R(T, t_i) [f(t_i, x0, v_i) - f(t_i, x0, u0(t_i))].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NeedleBudgetError
from .integrate import BieleckiContext, solve_rk
from .problem import Candidate, ProblemSpec
from .pwfun import BREAKPOINT_TOL, PiecewiseControl, Subdivision

DEFAULT_SCALINGS = tuple(2.0**-j for j in range(1, 11))


@dataclass(frozen=True)
class NeedleSpec:
    """Ordered pairs ((t_i, v_i)), 0 < t_1 <= ... <= t_N < T."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((float(t), np.atleast_1d(np.asarray(v, float))) for t, v in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("needle spec must contain at least one pair")
        times = [t for t, _ in pairs]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("needle times must be nondecreasing")
        if times[0] <= 0.0:
            raise ValueError("needle times must be strictly positive")

    @property
    def size(self):
        return len(self.pairs)

    @property
    def times(self):
        return [t for t, _ in self.pairs]

    @property
    def values(self):
        return [v for _, v in self.pairs]

    def validate_against(self, p: ProblemSpec):
        if self.times[-1] >= p.T:
            raise ValueError("needle times must lie strictly below the horizon")
        for t, v in self.pairs:
            if not p.uset.contains(v, tol=1e-9):
                raise ValueError(f"needle value at t = {t:.6g} outside the control set")


@dataclass
class ExpansionReport:
    """Decay of the first-order remainder along a geometric scaling sequence."""

    direction: np.ndarray
    scalings: list
    remainders: list
    order_estimate: float

    @property
    def remainder_over_scale(self):
        return [r / s for r, s in zip(self.remainders, self.scalings)]

    def rows(self):
        return [
            (s, r, r / s) for s, r in zip(self.scalings, self.remainders)
        ]


def stack_offsets(S: NeedleSpec, a):
    """Offset of each needle interval past its time: sum of earlier tied widths."""
    a = np.asarray(a, float)
    times = S.times
    offsets = np.zeros(S.size)
    for i in range(S.size):
        offsets[i] = sum(a[j] for j in range(i) if times[j] == times[i])
    return offsets


def needle_intervals(S: NeedleSpec, a, T=None):
    """Half-open intervals [t_i + b_i, t_i + b_i + a_i); empty when a_i = 0.

    Raises NeedleBudgetError naming the first offending index when intervals
    overlap or leave [0, T] (T taken from the spec context when given).
    """
    a = np.asarray(a, float)
    if a.shape != (S.size,):
        raise ContractError(f"thickness vector must have shape ({S.size},)")
    if np.any(a < 0):
        raise ContractError("thicknesses must be nonnegative")
    offsets = stack_offsets(S, a)
    intervals = []
    for i, (t_i, _) in enumerate(S.pairs):
        start = t_i + offsets[i]
        intervals.append((start, start + a[i]))
    if T is not None:
        for i, (start, end) in enumerate(intervals):
            if a[i] > 0 and end > T + BREAKPOINT_TOL * T:
                raise NeedleBudgetError(i, f"needle {i} interval [{start:.6g}, {end:.6g}) exits [0, {T}]")
    order = sorted((iv for iv, width in zip(intervals, a) if width > 0), key=lambda iv: iv[0])
    for (s0, e0), (s1, _) in zip(order, order[1:]):
        if e0 > s1 + (BREAKPOINT_TOL * (T or 1.0)):
            bad = next(i for i, iv in enumerate(intervals) if iv[0] == s1 or iv[1] == e0)
            raise NeedleBudgetError(bad, f"needle intervals overlap near t = {s1:.6g}")
    return intervals


def apply_needle(u0: PiecewiseControl, S: NeedleSpec, a) -> PiecewiseControl:
    """Control equal to v_i on I_i(a) and to u0 elsewhere, normalized."""
    if not u0.normalized:
        raise ContractError("apply_needle expects a normalized base control")
    T = u0.horizon
    intervals = needle_intervals(S, a, T=T)
    active = [(iv, v) for iv, v, w in zip(intervals, S.values, np.asarray(a, float)) if w > 0]
    if not active:
        return u0
    tol = BREAKPOINT_TOL * T
    cuts = set(u0.breakpoints.points)
    for (s0, e0), _ in active:
        cuts.add(float(s0))
        cuts.add(float(min(e0, T)))
    pts = sorted(cuts)
    dedup = [pts[0]]
    for t in pts[1:]:
        if t - dedup[-1] > tol:
            dedup.append(t)
    dedup[0], dedup[-1] = 0.0, T
    sub = Subdivision(tuple(dedup))

    segments = []
    for j in range(len(dedup) - 1):
        lo, hi = dedup[j], dedup[j + 1]
        mid = 0.5 * (lo + hi)
        needle_val = None
        for (s0, e0), v in active:
            if s0 - tol <= mid < e0 + tol and s0 - tol <= lo and hi <= e0 + tol:
                needle_val = v
                break
        if needle_val is not None:
            segments.append(lambda t, v=needle_val: v)
        else:
            base_seg = u0.segments[u0.segment_index(mid)]
            segments.append(base_seg)
    return PiecewiseControl(sub, segments, normalized=True)


def merge_specs(specs) -> NeedleSpec:
    """Concatenate needle specs, stably re-sorted by time (ties keep order)."""
    pairs = []
    for spec in specs:
        pairs.extend(spec.pairs)
    pairs.sort(key=lambda pv: pv[0])  # stable: ties keep input order
    return NeedleSpec(tuple(pairs))


def clamp_nonnegative(a_raw):
    """Euclidean projection of a thickness vector onto the nonnegative orthant."""
    return np.maximum(np.asarray(a_raw, float), 0.0)


def perturbed_endpoint(
    p: ProblemSpec,
    cand: Candidate,
    S: NeedleSpec,
    ctx: BieleckiContext,
    a_raw,
    grid_step=None,
    r4_frac=0.5,
):
    """Endpoint x_a(T) of the needle-perturbed dynamics, as a map of raw a.

    Raw thicknesses are first projected onto the nonnegative orthant, so the
    map is defined (and continuous) on a full ball around 0; at a_raw = 0 it
    returns the candidate endpoint exactly.
    """
    a_raw = np.asarray(a_raw, float)
    r4 = ctx.r4(r4_frac)
    if np.linalg.norm(a_raw) > r4 * (1.0 + 1e-12):
        raise ContractError(f"|a| = {np.linalg.norm(a_raw):.3g} exceeds the budget r4 = {r4:.3g}")
    a = clamp_nonnegative(a_raw)
    if not np.any(a > 0):
        return cand.trajectory.endpoint()
    u_a = apply_needle(cand.control, S, a)
    traj = solve_rk(p, u_a, grid_step=grid_step)
    return traj.endpoint()


def first_order_map(p: ProblemSpec, cand: Candidate, S: NeedleSpec, field) -> np.ndarray:
    """Matrix of first-order endpoint responses, one column per needle.

    Column i is R(T, t_i) [f(t_i, x0(t_i), v_i) - f(t_i, x0(t_i), u0(t_i))]
    with u0 evaluated by its right limit (the normalized convention) when t_i
    sits on a corner.
    """
    traj = cand.trajectory
    u0 = cand.control
    T = p.T
    cols = np.empty((field.n, S.size))
    RT0 = field.propagators[-1]
    for i, (t_i, v_i) in enumerate(S.pairs):
        x_i = traj(t_i)
        diff = np.asarray(p.f(t_i, x_i, v_i), float) - np.asarray(p.f(t_i, x_i, u0(t_i)), float)
        Rs = field.propagator(t_i)
        cols[:, i] = RT0 @ np.linalg.solve(Rs, diff)
    return cols


def corner_needles(S: NeedleSpec, corners, tol=1e-9):
    """Indices of needle times sitting on a control corner (right limit used)."""
    return [
        i for i, t in enumerate(S.times) if any(abs(t - c) <= tol for c in corners)
    ]


def expansion_check(
    p: ProblemSpec,
    cand: Candidate,
    S: NeedleSpec,
    ctx: BieleckiContext,
    direction,
    scalings=None,
    grid_step=None,
    field=None,
) -> ExpansionReport:
    """Measure |x_{sa}(T) - x_0(T) - s M a| along a geometric scaling ladder.

    ``direction`` must be a nonzero nonnegative unit vector; scalings default
    to {2^-1, ..., 2^-10} r4.  The order estimate is the log-log slope of the
    remainder against the scale.
    """
    direction = np.asarray(direction, float)
    if direction.shape != (S.size,):
        raise ContractError("direction dimension must match the needle count")
    if np.any(direction < 0) or not np.any(direction > 0):
        raise ContractError("direction must be nonzero and nonnegative")
    nrm = np.linalg.norm(direction)
    if abs(nrm - 1.0) > 1e-9:
        raise ContractError("direction must have unit norm")
    if field is None:
        from .resolvent import compute_resolvent

        field = compute_resolvent(p, cand)
    M = first_order_map(p, cand, S, field)
    base = cand.trajectory.endpoint()
    r4 = ctx.r4()
    scale_fracs = DEFAULT_SCALINGS if scalings is None else tuple(scalings)
    scales = [s * r4 for s in scale_fracs]
    remainders = []
    for s in scales:
        endpoint = perturbed_endpoint(p, cand, S, ctx, s * direction, grid_step=grid_step)
        remainders.append(float(np.linalg.norm(endpoint - base - s * (M @ direction))))
    logs = [(math.log(s), math.log(max(r, 1e-300))) for s, r in zip(scales, remainders)]
    xs = np.array([ls for ls, _ in logs])
    ys = np.array([lr for _, lr in logs])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return ExpansionReport(
        direction=direction, scalings=scales, remainders=remainders, order_estimate=slope
    )


def lattice_times(T, count=16):
    """Interior lattice times j T / (count + 1)."""
    return [T * j / (count + 1) for j in range(1, count + 1)]


def default_needle_family(
    p: ProblemSpec, u0: PiecewiseControl, n_times=16, corner_offsets=(1e-8, 1e-7)
) -> NeedleSpec:
    """Merged needle family: lattice times plus corner-adjacent times.

    Values are the control-set vertices (all points for a finite set).
    Times just before and after each control corner pin multiplier components
    that are sensitive to the switching structure.
    """
    T = p.T
    times = set(lattice_times(T, n_times))
    for c in u0.breakpoints.interior:
        times.add(c)
        for d in corner_offsets:
            for t in (c - d * T, c + d * T):
                if 0.0 < t < T:
                    times.add(t)
    values = p.uset.vertices()
    pairs = []
    for t in sorted(times):
        base = u0(t)
        for v in values:
            if np.max(np.abs(np.atleast_1d(v) - base)) == 0.0:
                continue
            pairs.append((t, v))
    return NeedleSpec(tuple(pairs))
