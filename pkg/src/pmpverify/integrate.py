"""Two solvers for the controlled Cauchy problem.

``solve_rk`` is the production path: classical RK4 restarted exactly at every
control breakpoint.  ``solve_picard`` iterates the integral operator
x -> xi0 + int f(s, x, u) ds with composite Simpson quadrature, measuring the
contraction factor in the Bielecki norm sup_t e^{-Lt} |phi(t)| and checking
that all iterates stay in the invariant ball around the reference trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ContractError,
    ContractionViolationError,
    DomainError,
    DomainExitError,
    InvarianceViolationError,
    ShrinkRadiusError,
)
from .problem import ProblemSpec, d2f
from .pwfun import BREAKPOINT_TOL, PiecewiseControl, Trajectory

DEFAULT_GRID_DIVISIONS = 2000
DEFAULT_PICARD_TOL = 1e-10
CONTRACTION_SLACK = 0.05


@dataclass
class BieleckiContext:
    """Constants controlling the contraction argument around one candidate.

    r1 = r * exp(-L T) is the invariant-ball radius, r2 the needle budget
    under which the integral operator maps the ball into itself, rho the
    geometric budget keeping needle intervals disjoint inside (0, T), k_lip
    the integral response constant, and gamma the clearance of the tube
    inside the state region (inf when unconstrained).
    """

    L: float
    r: float
    r1: float
    r2: float
    rho: float
    k_lip: float
    gamma: float

    @property
    def contraction_factor(self):
        return 1.0 - math.exp(-self.L * self._T) if hasattr(self, "_T") else None

    def factor(self, T):
        return 1.0 - math.exp(-self.L * T)

    def r4(self, frac=0.5):
        return frac * self.r2

    def as_dict(self):
        return {
            "L": self.L,
            "r": self.r,
            "r1": self.r1,
            "r2": self.r2,
            "rho": self.rho,
            "k_lip": self.k_lip,
            "gamma": self.gamma if math.isfinite(self.gamma) else None,
        }


@dataclass
class PicardTrace:
    """Per-iterate diagnostics of one fixed-point run."""

    times: np.ndarray = None
    iterates: list = field(default_factory=list)
    bielecki_residuals: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    ball_distances: list = field(default_factory=list)

    @property
    def measured_ratio(self):
        return max(self.ratios) if self.ratios else 0.0

    def rows(self):
        out = []
        for i, res in enumerate(self.bielecki_residuals):
            ratio = self.ratios[i - 1] if 0 < i <= len(self.ratios) else ""
            out.append((i + 1, res, ratio))
        return out


def _merged_grid(T, breakpoints, grid_step):
    """Uniform nodes merged with breakpoints; breakpoints win near-duplicates."""
    n_div = max(1, int(math.ceil(T / grid_step)))
    uniform = np.linspace(0.0, T, n_div + 1)
    tol = BREAKPOINT_TOL * T
    pts = list(breakpoints)
    extra = [t for t in uniform if all(abs(t - b) > tol for b in pts)]
    grid = np.array(sorted(pts + extra))
    return grid


def solve_rk(p: ProblemSpec, u: PiecewiseControl, grid_step=None) -> Trajectory:
    """Integrate the dynamics with RK4, restarting at every control breakpoint.

    The returned trajectory's corners are exactly the interior breakpoints of
    u, its grid contains them, and each node stores one-sided derivatives so
    the dense output is cubic per interval.
    """
    if not u.normalized:
        raise ContractError("solve_rk expects a normalized control")
    T = p.T
    if abs(u.horizon - T) > BREAKPOINT_TOL * T:
        raise ContractError("control horizon differs from problem horizon")
    step = grid_step if grid_step is not None else T / DEFAULT_GRID_DIVISIONS
    if step <= 0:
        raise ContractError("grid_step must be positive")
    grid = _merged_grid(T, u.breakpoints.points, step)
    m = len(grid)
    values = np.empty((m, p.n))
    deriv_right = np.empty((m, p.n))
    deriv_left = np.empty((m, p.n))
    values[0] = p.xi0
    if not p.in_omega(values[0]):
        raise DomainExitError(0.0)

    bps = u.breakpoints.points
    seg_idx = 0
    fcn = p.f
    for j in range(m - 1):
        t0, t1 = grid[j], grid[j + 1]
        while seg_idx + 1 < len(u.segments) and t0 >= bps[seg_idx + 1]:
            seg_idx += 1
        seg = u.segments[seg_idx]
        x0 = values[j]
        h = t1 - t0
        tm = t0 + 0.5 * h
        k1 = np.asarray(fcn(t0, x0, seg(t0)), float)
        k2 = np.asarray(fcn(tm, x0 + 0.5 * h * k1, seg(tm)), float)
        k3 = np.asarray(fcn(tm, x0 + 0.5 * h * k2, seg(tm)), float)
        k4 = np.asarray(fcn(t1, x0 + h * k3, seg(t1)), float)
        values[j + 1] = x0 + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
        deriv_right[j] = k1
        deriv_left[j + 1] = np.asarray(fcn(t1, values[j + 1], seg(t1)), float)
        if not p.in_omega(values[j + 1]):
            raise DomainExitError(t1)
    # entering a new segment at a breakpoint node: k1 of the next step already
    # used the right-limit control, so deriv_right is consistent; close the ends
    deriv_right[m - 1] = deriv_left[m - 1]
    deriv_left[0] = deriv_right[0]
    corners = tuple(b for b in bps[1:-1])
    return Trajectory(grid, values, deriv_right, deriv_left, corners=corners)


def bielecki_norm(values, times, L) -> float:
    """sup over the grid of e^{-L t} |phi(t)| (sup norm when L = 0)."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    if times.size == 0:
        raise DomainError("empty grid")
    if values.ndim == 1:
        values = values[:, None]
    if L < 0:
        raise ContractError("L must be nonnegative")
    weights = np.exp(-L * times)
    norms = np.linalg.norm(values, axis=1)
    return float(np.max(weights * norms))


def control_value_set(u0: PiecewiseControl, needle_values=(), samples_per_segment=16):
    """Finite sample of the control values seen along u0 plus needle values."""
    M = []
    pts = u0.breakpoints.points
    for i, seg in enumerate(u0.segments):
        for s in np.linspace(pts[i], pts[i + 1], samples_per_segment):
            M.append(np.atleast_1d(np.asarray(seg(s), float)))
    for v in needle_values:
        M.append(np.atleast_1d(np.asarray(v, float)))
    return M


def estimate_omega_clearance(p: ProblemSpec, x0: Trajectory, dirs, n_times=64):
    """Largest sampled radius at which the tube around x0 stays in Omega."""
    if p.omega is None:
        return math.inf
    times = np.linspace(0.0, x0.horizon, n_times)
    states = [x0(t) for t in times]

    def tube_ok(radius):
        for xs in states:
            for d in dirs:
                if not p.in_omega(xs + radius * d):
                    return False
        return True

    lo, hi = 0.0, 1.0
    grow = 0
    while tube_ok(hi) and grow < 20:
        lo, hi = hi, hi * 2.0
        grow += 1
    if grow == 20:
        return math.inf
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if tube_ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _unit_directions(n, count, rng):
    dirs = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        dirs += [e, -e]
    while len(dirs) < count:
        v = rng.normal(size=n)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            dirs.append(v / nv)
    return dirs[:count]


def estimate_needle_constant(p: ProblemSpec, x0: Trajectory, u0: PiecewiseControl, S):
    """Integral response constant k and thickness budget rho for a needle spec.

    rho keeps all needle intervals disjoint and inside (0, T) whenever
    |a| <= rho; k bounds int |f(t, x0, u_a) - f(t, x0, u0)| dt by k |a|.
    """
    times = [t for t, _ in S.pairs]
    values = [v for _, v in S.pairs]
    N = len(times)
    if N == 0:
        raise ContractError("needle spec is empty")
    T = x0.horizon
    distinct = sorted(set(times))
    gaps = [b - a for a, b in zip(distinct, distinct[1:])] + [T - distinct[-1]]
    rho = min(gaps) / math.sqrt(N)
    reach = math.sqrt(N) * rho
    k_raw = 0.0
    for t_i, v_i in zip(times, values):
        hi = min(t_i + reach, T)
        for t in np.linspace(t_i, hi, 32):
            diff = np.asarray(p.f(t, x0(t), np.atleast_1d(v_i)), float) - np.asarray(
                p.f(t, x0(t), u0(t)), float
            )
            k_raw = max(k_raw, float(np.linalg.norm(diff)))
    return N * k_raw, rho


def estimate_lipschitz(
    p: ProblemSpec,
    x0: Trajectory,
    M,
    r=None,
    k=None,
    rho=None,
    n_dirs=20,
    n_times=201,
    rng=None,
    default_radius=1.0,
) -> BieleckiContext:
    """Sampled Lipschitz constant of f in the state over a tube around x0.

    L is the max operator norm of the state Jacobian over grid times, radial
    probes of the radius-r tube, and control values in M.  An analytic
    constant on the problem overrides the sampling.  Fills the derived radii
    r1, r2 from k and rho when provided.
    """
    rng = rng or np.random.default_rng(0)
    dirs = _unit_directions(p.n, n_dirs, rng)
    gamma = estimate_omega_clearance(p, x0, dirs)
    if r is None:
        r = default_radius if math.isinf(gamma) else 0.5 * gamma
    if r >= gamma:
        raise ShrinkRadiusError(0.9 * gamma)
    T = x0.horizon
    if p.lipschitz is not None:
        L = float(p.lipschitz)
    else:
        L = 0.0
        times = np.linspace(0.0, T, n_times)
        for t in times:
            xc = x0(t)
            probes = [xc] + [xc + r * d for d in dirs]
            for xi in probes:
                for zeta in M:
                    J = d2f(p, t, xi, zeta)
                    L = max(L, float(np.linalg.norm(J, 2)))
    r1 = r * math.exp(-L * T)
    if k is None or rho is None:
        r2 = math.nan
        rho_out = math.nan
        k_out = math.nan
    else:
        k_out, rho_out = float(k), float(rho)
        if k_out <= 0.0:
            r2 = rho_out
        else:
            r2 = min(rho_out, math.exp(-L * T) * r1 / k_out)
    return BieleckiContext(L=L, r=r, r1=r1, r2=r2, rho=rho_out, k_lip=k_out, gamma=gamma)


def build_bielecki_context(p, x0, u0, S, r=None, rng=None) -> BieleckiContext:
    """Convenience: needle constants plus Lipschitz tube in one call."""
    k, rho = estimate_needle_constant(p, x0, u0, S)
    M = control_value_set(u0, needle_values=[v for _, v in S.pairs])
    return estimate_lipschitz(p, x0, M, r=r, k=k, rho=rho, rng=rng)


class _QuadGrid:
    """Node+midpoint sampling of controls and reference trajectory."""

    def __init__(self, p, u, x_ref, grid_step):
        T = p.T
        step = grid_step if grid_step is not None else T / DEFAULT_GRID_DIVISIONS
        nodes = _merged_grid(T, u.breakpoints.points, step)
        self.nodes = nodes
        self.h = np.diff(nodes)
        self.mids = 0.5 * (nodes[:-1] + nodes[1:])
        # control values: right-of-node (segment start), midpoint, left-of-node
        bps = u.breakpoints.points
        seg_for_interval = np.empty(len(self.mids), dtype=int)
        si = 0
        for j, t0 in enumerate(nodes[:-1]):
            while si + 1 < len(u.segments) and t0 >= bps[si + 1]:
                si += 1
            seg_for_interval[j] = si
        self.u_start = [u.segments[seg_for_interval[j]](nodes[j]) for j in range(len(self.mids))]
        self.u_mid = [u.segments[seg_for_interval[j]](self.mids[j]) for j in range(len(self.mids))]
        self.u_end = [u.segments[seg_for_interval[j]](nodes[j + 1]) for j in range(len(self.mids))]
        # all sample times (nodes then midpoints) for norm bookkeeping
        self.all_times = np.concatenate([nodes, self.mids])
        self.ref_nodes = np.array([x_ref(t) for t in nodes])
        self.ref_mids = np.array([x_ref(t) for t in self.mids])


def solve_picard(
    p: ProblemSpec,
    u: PiecewiseControl,
    x_ref: Trajectory,
    ctx: BieleckiContext,
    tol=DEFAULT_PICARD_TOL,
    grid_step=None,
    max_iter=400,
    slack=CONTRACTION_SLACK,
    check_bounds=True,
):
    """Fixed-point iteration of the integral operator from x_ref.

    Iterates with per-interval Simpson quadrature until the Bielecki residual
    drops below tol.  Raises ContractionViolationError when a measured ratio
    exceeds 1 - e^{-LT} + slack and InvarianceViolationError when an iterate
    leaves the radius-r1 ball around x_ref.  Returns (Trajectory, PicardTrace).
    """
    if not u.normalized:
        raise ContractError("solve_picard expects a normalized control")
    q = _QuadGrid(p, u, x_ref, grid_step)
    L, T = ctx.L, p.T
    bound = 1.0 - math.exp(-L * T) + slack
    nodes, mids, h = q.nodes, q.mids, q.h
    nI = len(mids)

    x_nodes = q.ref_nodes.copy()
    x_mids = q.ref_mids.copy()
    trace = PicardTrace(times=q.all_times)
    trace.iterates.append(np.concatenate([x_nodes, x_mids]))
    trace.ball_distances.append(0.0)

    fcn = p.f
    prev_res = None
    converged = False
    for _ in range(max_iter):
        F_start = np.empty((nI, p.n))
        F_mid = np.empty((nI, p.n))
        F_end = np.empty((nI, p.n))
        for j in range(nI):
            F_start[j] = fcn(nodes[j], x_nodes[j], q.u_start[j])
            F_mid[j] = fcn(mids[j], x_mids[j], q.u_mid[j])
            F_end[j] = fcn(nodes[j + 1], x_nodes[j + 1], q.u_end[j])
        new_nodes = np.empty_like(x_nodes)
        new_mids = np.empty_like(x_mids)
        new_nodes[0] = p.xi0
        for j in range(nI):
            hj = h[j]
            new_mids[j] = new_nodes[j] + hj / 24.0 * (5.0 * F_start[j] + 8.0 * F_mid[j] - F_end[j])
            new_nodes[j + 1] = new_nodes[j] + hj / 6.0 * (F_start[j] + 4.0 * F_mid[j] + F_end[j])
        diff = np.concatenate([new_nodes - x_nodes, new_mids - x_mids])
        res = bielecki_norm(diff, q.all_times, L)
        trace.bielecki_residuals.append(res)
        dist = bielecki_norm(
            np.concatenate([new_nodes - q.ref_nodes, new_mids - q.ref_mids]), q.all_times, L
        )
        trace.ball_distances.append(dist)
        trace.iterates.append(np.concatenate([new_nodes, new_mids]))
        if check_bounds and dist > ctx.r1 * (1.0 + 1e-9) + 1e-15:
            raise InvarianceViolationError(
                f"iterate left the Bielecki ball: {dist:.3g} > r1 = {ctx.r1:.3g}"
            )
        if prev_res is not None and prev_res > max(tol, 1e-14):
            ratio = res / prev_res
            trace.ratios.append(ratio)
            if check_bounds and ratio > bound:
                raise ContractionViolationError(
                    f"measured ratio {ratio:.4f} exceeds bound {bound:.4f}"
                )
        x_nodes, x_mids = new_nodes, new_mids
        prev_res = res
        if res <= tol:
            converged = True
            break
    if not converged:
        raise ContractionViolationError(f"no convergence to tol {tol:g} in {max_iter} iterations")

    deriv_right = np.empty_like(x_nodes)
    deriv_left = np.empty_like(x_nodes)
    for j in range(nI):
        deriv_right[j] = fcn(nodes[j], x_nodes[j], q.u_start[j])
        deriv_left[j + 1] = fcn(nodes[j + 1], x_nodes[j + 1], q.u_end[j])
    deriv_left[0] = deriv_right[0]
    deriv_right[-1] = deriv_left[-1]
    corners = tuple(b for b in u.breakpoints.points[1:-1])
    traj = Trajectory(nodes, x_nodes, deriv_right, deriv_left, corners=corners)
    return traj, trace
