"""Piecewise-continuous controls and piecewise-C1 trajectories.

Controls are stored as a subdivision of [0, T] plus one continuous evaluator
per closed subinterval.  A normalized control takes the right-segment value at
every interior breakpoint and the left-limit value at T, which makes
evaluation single valued without changing any integral.
"""

from __future__ import annotations

import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MalformedControlError

# Breakpoints closer than this (relative to T) are considered identical.
BREAKPOINT_TOL = 1e-12

# Diagnostic cap on the number of breakpoints; exceeding it only warns.
BREAKPOINT_CAP = 64


@dataclass(frozen=True)
class Subdivision:
    """Strictly increasing times 0 = t_0 < ... < t_k+1 = T."""

    points: tuple

    def __post_init__(self):
        pts = tuple(float(t) for t in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("subdivision needs at least the endpoints 0 and T")
        if pts[0] != 0.0:
            raise ValueError("subdivision must start at 0")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("subdivision must be strictly increasing")

    @property
    def horizon(self):
        return self.points[-1]

    @property
    def interior(self):
        return self.points[1:-1]

    def __len__(self):
        return len(self.points)


def merge_subdivisions(a: Subdivision, b: Subdivision) -> Subdivision:
    """Sorted union of two subdivisions, deduplicated within 1e-12 * T."""
    if abs(a.horizon - b.horizon) > BREAKPOINT_TOL * max(a.horizon, b.horizon):
        raise ValueError("subdivisions have different horizons")
    tol = BREAKPOINT_TOL * a.horizon
    merged = []
    for t in sorted(a.points + b.points):
        if not merged or t - merged[-1] > tol:
            merged.append(t)
        # else: duplicate within tolerance, keep the earlier value
    merged[-1] = a.horizon
    return Subdivision(tuple(merged))


class PiecewiseControl:
    """Control on [0, T]: breakpoints plus a continuous evaluator per segment.

    ``segments[i]`` must be continuous on the closed interval
    [points[i], points[i+1]] and return an array of shape (d,).
    ``break_values`` optionally pins explicit (possibly non-normalized)
    values at breakpoint indices; normalization drops them.
    """

    def __init__(self, breakpoints: Subdivision, segments, normalized=False, break_values=None):
        if len(segments) != len(breakpoints) - 1:
            raise ValueError("need one segment evaluator per subinterval")
        self.breakpoints = breakpoints
        self.segments = list(segments)
        self.normalized = bool(normalized)
        self.break_values = dict(break_values or {})
        if self.normalized and self.break_values:
            raise ValueError("a normalized control carries no explicit breakpoint values")
        k = len(breakpoints) - 2
        if k > BREAKPOINT_CAP:
            warnings.warn(
                f"control has {k} interior breakpoints (> cap {BREAKPOINT_CAP}); "
                "this is allowed but may be slow",
                stacklevel=2,
            )

    @property
    def horizon(self):
        return self.breakpoints.horizon

    @property
    def dim(self):
        return np.atleast_1d(np.asarray(self.segments[0](0.0), float)).shape[0]

    @classmethod
    def constant(cls, value, horizon):
        v = np.atleast_1d(np.asarray(value, float))
        return cls(Subdivision((0.0, float(horizon))), [lambda t, v=v: v], normalized=True)

    @classmethod
    def from_closure(cls, fn, horizon, breaks=()):
        """Wrap a callable t -> value, continuous on each closed subinterval."""
        pts = (0.0,) + tuple(sorted(breaks)) + (float(horizon),)
        sub = Subdivision(pts)
        seg = lambda t, fn=fn: np.atleast_1d(np.asarray(fn(t), float))
        return cls(sub, [seg] * (len(sub) - 1), normalized=True)

    @classmethod
    def piecewise_constant(cls, breakpoints, values):
        """Data form: len(values) == len(breakpoints) - 1, one value per interval."""
        sub = Subdivision(tuple(breakpoints))
        vals = [np.atleast_1d(np.asarray(v, float)) for v in values]
        if len(vals) != len(sub) - 1:
            raise ValueError("len(values) must equal len(breakpoints) - 1")
        segs = [lambda t, v=v: v for v in vals]
        ctrl = cls(sub, segs, normalized=True)
        ctrl._pc_values = vals
        return ctrl

    def to_json(self):
        """JSON form for piecewise-constant controls only."""
        vals = getattr(self, "_pc_values", None)
        if vals is None:
            raise ValueError("only piecewise-constant controls have a JSON form")
        return {
            "breakpoints": list(self.breakpoints.points),
            "values": [list(map(float, v)) for v in vals],
        }

    @classmethod
    def from_json(cls, data):
        return cls.piecewise_constant(data["breakpoints"], data["values"])

    def segment_index(self, t):
        """Index of the segment governing t with right-continuous convention."""
        pts = self.breakpoints.points
        if t < pts[0] or t > pts[-1]:
            raise DomainError(f"t = {t} outside [0, {pts[-1]}]")
        i = bisect_right(pts, t) - 1
        return min(i, len(self.segments) - 1)

    def __call__(self, t):
        return eval_control(self, t)

    def eval_left(self, t):
        """Value from the segment left of t (left limit at breakpoints)."""
        pts = self.breakpoints.points
        if t <= pts[0] or t > pts[-1]:
            raise DomainError(f"t = {t} has no left segment in (0, {pts[-1]}]")
        i = bisect_right(pts, t) - 1
        if i < len(self.segments) and pts[i] == t:
            i -= 1
        i = min(i, len(self.segments) - 1)
        return np.atleast_1d(np.asarray(self.segments[i](t), float))


def eval_control(u: PiecewiseControl, t) -> np.ndarray:
    """Evaluate u at t: right limit at breakpoints, left limit at T."""
    t = float(t)
    pts = u.breakpoints.points
    if t < pts[0] or t > pts[-1]:
        raise DomainError(f"t = {t} outside [0, {pts[-1]}]")
    if not u.normalized and u.break_values:
        for idx, val in u.break_values.items():
            if pts[idx] == t:
                return np.atleast_1d(np.asarray(val, float))
    i = u.segment_index(t)
    return np.atleast_1d(np.asarray(u.segments[i](t), float))


def normalize_control(u: PiecewiseControl, limit_tol=1e-4) -> PiecewiseControl:
    """Drop explicit breakpoint values, keeping right limits (left at T).

    Verifies by sampling that each segment has one-sided limits at its
    endpoints (continuity on the closed interval); failure raises
    MalformedControlError.  Idempotent, and equal to u except possibly on
    the finite breakpoint set.
    """
    if u.normalized:
        return u
    T = u.horizon
    offsets = (1e-6 * T, 1e-7 * T, 1e-8 * T)
    pts = u.breakpoints.points
    for i, seg in enumerate(u.segments):
        a, b = pts[i], pts[i + 1]
        for t0, sign in ((a, +1.0), (b, -1.0)):
            try:
                samples = [np.atleast_1d(np.asarray(seg(t0 + sign * d), float)) for d in offsets]
                endpoint = np.atleast_1d(np.asarray(seg(t0), float))
            except Exception as exc:
                raise MalformedControlError(
                    f"segment {i} not evaluable near t = {t0:.6g}"
                ) from exc
            scale = 1.0 + max(float(np.max(np.abs(s))) for s in samples)
            if any(not np.all(np.isfinite(s)) for s in samples + [endpoint]):
                raise MalformedControlError(f"segment {i} non-finite near t = {t0:.6g}")
            worst = max(float(np.max(np.abs(s - endpoint))) for s in samples)
            if worst > limit_tol * scale:
                raise MalformedControlError(
                    f"segment {i} has no one-sided limit at t = {t0:.6g} "
                    f"(sampled disagreement {worst:.3g})"
                )
    out = PiecewiseControl(u.breakpoints, u.segments, normalized=True)
    if hasattr(u, "_pc_values"):
        out._pc_values = u._pc_values
    return out


class Trajectory:
    """Continuous piecewise-C1 state path with per-interval cubic dense output.

    ``deriv_right[j]`` is the derivative entering interval j at node j;
    ``deriv_left[j]`` the derivative leaving interval j-1 at node j.  They
    differ only at corners.
    """

    def __init__(self, grid, values, deriv_right, deriv_left, corners=()):
        self.grid = np.asarray(grid, float)
        self.values = np.asarray(values, float)
        self.deriv_right = np.asarray(deriv_right, float)
        self.deriv_left = np.asarray(deriv_left, float)
        self.corners = tuple(float(c) for c in corners)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
            self.deriv_right = self.deriv_right[:, None]
            self.deriv_left = self.deriv_left[:, None]
        m = len(self.grid)
        if self.values.shape[0] != m or self.deriv_right.shape[0] != m:
            raise ValueError("grid/value/derivative lengths disagree")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("trajectory grid must be strictly increasing")

    @property
    def horizon(self):
        return float(self.grid[-1])

    @property
    def dim(self):
        return self.values.shape[1]

    @classmethod
    def constant(cls, value, horizon, n_nodes=2):
        grid = np.linspace(0.0, float(horizon), n_nodes)
        v = np.atleast_1d(np.asarray(value, float))
        vals = np.tile(v, (n_nodes, 1))
        zeros = np.zeros_like(vals)
        return cls(grid, vals, zeros, zeros)

    def _interval(self, t):
        if t < self.grid[0] or t > self.grid[-1]:
            raise DomainError(f"t = {t} outside [0, {self.grid[-1]}]")
        j = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(max(j, 0), len(self.grid) - 2)

    def _hermite(self, j, t, derivative=False):
        t0, t1 = self.grid[j], self.grid[j + 1]
        h = t1 - t0
        s = (t - t0) / h
        y0, y1 = self.values[j], self.values[j + 1]
        m0, m1 = self.deriv_right[j] * h, self.deriv_left[j + 1] * h
        if not derivative:
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1
        d00 = 6 * s**2 - 6 * s
        d10 = 3 * s**2 - 4 * s + 1
        d01 = -6 * s**2 + 6 * s
        d11 = 3 * s**2 - 2 * s
        return (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h

    def __call__(self, t):
        t = float(t)
        j = self._interval(t)
        if t == self.grid[j]:
            return self.values[j].copy()
        if t == self.grid[j + 1]:
            return self.values[j + 1].copy()
        return self._hermite(j, t)

    def derivative(self, t):
        """Dense-output derivative inside the governing interval."""
        t = float(t)
        j = self._interval(t)
        if t == self.grid[j]:
            return self.deriv_right[j].copy()
        if t == self.grid[j + 1] and j + 2 == len(self.grid):
            return self.deriv_left[j + 1].copy()
        return self._hermite(j, t, derivative=True)

    def endpoint(self):
        return self.values[-1].copy()


def onesided_derivative(x: Trajectory, t) -> np.ndarray:
    """Derivative of x with the right-continuity convention.

    Off corners this is x'(t); at a corner (and at 0) it is the right
    derivative, at T the left derivative.
    """
    t = float(t)
    if t < x.grid[0] or t > x.grid[-1]:
        raise DomainError(f"t = {t} outside [0, {x.grid[-1]}]")
    if t == x.grid[-1]:
        return x.deriv_left[-1].copy()
    j = int(np.searchsorted(x.grid, t, side="right")) - 1
    j = min(max(j, 0), len(x.grid) - 2)
    if t == x.grid[j]:
        return x.deriv_right[j].copy()
    return x._hermite(j, t, derivative=True)
