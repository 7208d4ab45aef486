"""Problem definitions: dynamics, terminal maps, control sets, augmentation.

A ProblemSpec is a Mayer problem when ``f0`` is None and a Bolza problem
otherwise.  ``g[0]`` is the terminal reward; ``g[1:]`` are the terminal
inequality constraints (>= 0) and ``h`` the terminal equality constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import AlreadyMayerError, ContractError, DomainError
from .pwfun import PiecewiseControl, Trajectory, onesided_derivative


class Box:
    """Axis-aligned box control set [lo, hi]^d."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, float))
        self.hi = np.atleast_1d(np.asarray(hi, float))
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError("box needs lo <= hi componentwise")

    @property
    def dim(self):
        return self.lo.shape[0]

    def contains(self, v, tol=1e-12):
        v = np.atleast_1d(np.asarray(v, float))
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def vertices(self, cap=64):
        if 2**self.dim > cap:
            corners = [self.lo, self.hi]
        else:
            corners = [np.array(c) for c in product(*zip(self.lo, self.hi))]
        return corners

    def center(self):
        return 0.5 * (self.lo + self.hi)

    def lattice(self, total_cap=4096):
        per_dim = max(2, int(total_cap ** (1.0 / self.dim)))
        per_dim = min(per_dim, 32)
        axes = [np.linspace(a, b, per_dim) for a, b in zip(self.lo, self.hi)]
        pts = np.array(list(product(*axes)))
        return [p for p in pts]

    def sample(self, rng, count):
        return [rng.uniform(self.lo, self.hi) for _ in range(count)]

    def describe(self):
        return {"kind": "box", "lo": list(map(float, self.lo)), "hi": list(map(float, self.hi))}


class FiniteSet:
    """Finite control set: an explicit list of points in R^d."""

    def __init__(self, points):
        self.points = [np.atleast_1d(np.asarray(p, float)) for p in points]
        if not self.points:
            raise ValueError("finite control set must be nonempty")

    @property
    def dim(self):
        return self.points[0].shape[0]

    def contains(self, v, tol=1e-12):
        v = np.atleast_1d(np.asarray(v, float))
        return any(np.max(np.abs(v - p)) <= tol for p in self.points)

    def vertices(self, cap=None):
        return [p.copy() for p in self.points]

    def describe(self):
        return {"kind": "finite", "points": [list(map(float, p)) for p in self.points]}


@dataclass
class ProblemSpec:
    """Fixed-horizon optimal control problem on R^n.

    ``f(t, x, u) -> (n,)`` is the dynamics, ``f0(t, x, u) -> float`` the
    running reward (None for Mayer).  ``jacobians`` may carry analytic
    differentials under keys 'd2f', 'd2f0', 'd1f', 'd1f0', 'dg' (list, one
    per g), 'dh' (list); missing entries fall back to finite differences.
    """

    n: int
    d: int
    T: float
    xi0: np.ndarray
    f: callable
    uset: object
    g: list
    h: list = field(default_factory=list)
    f0: callable = None
    omega: callable = None
    jacobians: dict = field(default_factory=dict)
    lipschitz: float = None
    name: str = ""

    def __post_init__(self):
        self.xi0 = np.atleast_1d(np.asarray(self.xi0, float))
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.xi0.shape != (self.n,):
            raise ValueError("xi0 must have shape (n,)")
        if not self.g:
            raise ValueError("need at least the terminal reward g[0]")
        if self.omega is not None and not self.omega(self.xi0):
            raise ValueError("initial state must lie in the state region")

    @property
    def m(self):
        return len(self.g) - 1

    @property
    def q(self):
        return len(self.h)

    @property
    def is_bolza(self):
        return self.f0 is not None

    def in_omega(self, x):
        return True if self.omega is None else bool(self.omega(np.asarray(x, float)))


@dataclass
class Candidate:
    """A control/trajectory pair to be verified; trajectory may be absent."""

    control: PiecewiseControl
    trajectory: Trajectory = None


@dataclass
class AugmentedProblem:
    """Bolza problem together with its Mayer form on the state (sigma, x)."""

    base: ProblemSpec
    mayer: ProblemSpec


# ---------------------------------------------------------------------------
# differentials (analytic when supplied, central differences otherwise)

def _fd_step(scale):
    return 1e-6 * (1.0 + float(scale))


def d2f(p: ProblemSpec, t, x, u):
    """Jacobian of f with respect to the state, shape (n, n)."""
    fn = p.jacobians.get("d2f")
    if fn is not None:
        return np.asarray(fn(t, x, u), float).reshape(p.n, p.n)
    h = _fd_step(np.linalg.norm(x))
    J = np.empty((p.n, p.n))
    for j in range(p.n):
        e = np.zeros(p.n)
        e[j] = h
        J[:, j] = (np.asarray(p.f(t, x + e, u), float) - np.asarray(p.f(t, x - e, u), float)) / (2 * h)
    return J


def d2f0(p: ProblemSpec, t, x, u):
    """Gradient row of f0 with respect to the state, shape (n,)."""
    if p.f0 is None:
        raise ContractError("problem has no running cost")
    fn = p.jacobians.get("d2f0")
    if fn is not None:
        return np.asarray(fn(t, x, u), float).reshape(p.n)
    h = _fd_step(np.linalg.norm(x))
    row = np.empty(p.n)
    for j in range(p.n):
        e = np.zeros(p.n)
        e[j] = h
        row[j] = (p.f0(t, x + e, u) - p.f0(t, x - e, u)) / (2 * h)
    return row


def d1f(p: ProblemSpec, t, x, u):
    """Partial derivative of f in its time slot, shape (n,)."""
    fn = p.jacobians.get("d1f")
    if fn is not None:
        return np.asarray(fn(t, x, u), float).reshape(p.n)
    h = _fd_step(abs(t))
    lo, hi = max(t - h, 0.0), min(t + h, p.T)
    return (np.asarray(p.f(hi, x, u), float) - np.asarray(p.f(lo, x, u), float)) / (hi - lo)


def d1f0(p: ProblemSpec, t, x, u):
    if p.f0 is None:
        raise ContractError("problem has no running cost")
    fn = p.jacobians.get("d1f0")
    if fn is not None:
        return float(fn(t, x, u))
    h = _fd_step(abs(t))
    lo, hi = max(t - h, 0.0), min(t + h, p.T)
    return (p.f0(hi, x, u) - p.f0(lo, x, u)) / (hi - lo)


def _terminal_gradient(fn, xT):
    h = _fd_step(np.linalg.norm(xT))
    n = xT.shape[0]
    grad = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        grad[j] = (fn(xT + e) - fn(xT - e)) / (2 * h)
    return grad


def terminal_data(p: ProblemSpec, xT):
    """Values and gradients of every g and h at the terminal state.

    Returns (g_vals (m+1,), h_vals (q,), Dg (m+1, n), Dh (q, n)); gradients
    are analytic when supplied, central differences with step
    1e-6 * (1 + |xT|) otherwise.
    """
    xT = np.atleast_1d(np.asarray(xT, float))
    if not p.in_omega(xT):
        raise DomainError("terminal state outside the state region")
    g_vals = np.array([float(fn(xT)) for fn in p.g])
    h_vals = np.array([float(fn(xT)) for fn in p.h])
    dg_list = p.jacobians.get("dg")
    dh_list = p.jacobians.get("dh")
    Dg = np.empty((len(p.g), p.n))
    for a, fn in enumerate(p.g):
        if dg_list is not None and dg_list[a] is not None:
            Dg[a] = np.asarray(dg_list[a](xT), float).reshape(p.n)
        else:
            Dg[a] = _terminal_gradient(fn, xT)
    Dh = np.empty((len(p.h), p.n))
    for b, fn in enumerate(p.h):
        if dh_list is not None and dh_list[b] is not None:
            Dh[b] = np.asarray(dh_list[b](xT), float).reshape(p.n)
        else:
            Dh[b] = _terminal_gradient(fn, xT)
    return g_vals, h_vals, Dg, Dh


# ---------------------------------------------------------------------------
# Bolza -> Mayer augmentation

def bolza_to_mayer(p: ProblemSpec) -> AugmentedProblem:
    """Augment a Bolza problem with the accumulated running reward.

    The Mayer form has state X = (sigma, x), dynamics
    F = (f0, f), terminal reward sigma + g0(x), unchanged constraints, and
    initial state (0, xi0).  Its terminal differentials in the sigma slot
    are exactly 1 (reward) and 0 (constraints) by construction.
    """
    if p.f0 is None:
        raise AlreadyMayerError("problem has no running cost; it is already a Mayer problem")

    base_f, base_f0 = p.f, p.f0

    def F(t, X, u):
        x = X[1:]
        return np.concatenate(([base_f0(t, x, u)], np.asarray(base_f(t, x, u), float)))

    def make_G0(g0fn):
        return lambda X: X[0] + g0fn(X[1:])

    def make_lift(fn):
        return lambda X: fn(X[1:])

    g_aug = [make_G0(p.g[0])] + [make_lift(fn) for fn in p.g[1:]]
    h_aug = [make_lift(fn) for fn in p.h]

    jac = {}
    jac["d2f"] = lambda t, X, u: _augmented_d2f(p, t, X, u)
    if "d1f" in p.jacobians or "d1f0" in p.jacobians:
        jac["d1f"] = lambda t, X, u: np.concatenate(
            ([d1f0(p, t, X[1:], u)], d1f(p, t, X[1:], u))
        )

    dg_base = p.jacobians.get("dg")
    dh_base = p.jacobians.get("dh")

    def lift_grad(fn, analytic):
        if analytic is not None:
            return lambda X: np.concatenate(([0.0], np.asarray(analytic(X[1:]), float).reshape(p.n)))
        return lambda X: np.concatenate(([0.0], _terminal_gradient(fn, np.asarray(X[1:], float))))

    dg_aug = [lambda X: np.concatenate(([1.0], _grad_of(p, 0, X[1:])))]
    for a in range(1, len(p.g)):
        analytic = dg_base[a] if dg_base is not None else None
        dg_aug.append(lift_grad(p.g[a], analytic))
    dh_aug = []
    for b in range(len(p.h)):
        analytic = dh_base[b] if dh_base is not None else None
        dh_aug.append(lift_grad(p.h[b], analytic))
    jac["dg"] = dg_aug
    jac["dh"] = dh_aug

    omega_aug = None
    if p.omega is not None:
        omega_aug = lambda X: p.omega(np.asarray(X, float)[1:])

    mayer = ProblemSpec(
        n=p.n + 1,
        d=p.d,
        T=p.T,
        xi0=np.concatenate(([0.0], p.xi0)),
        f=F,
        uset=p.uset,
        g=g_aug,
        h=h_aug,
        omega=omega_aug,
        jacobians=jac,
        lipschitz=None if p.lipschitz is None else _augmented_lipschitz(p),
        name=p.name + "+accumulator" if p.name else "augmented",
    )
    return AugmentedProblem(base=p, mayer=mayer)


def _grad_of(p, a, x):
    dg_base = p.jacobians.get("dg")
    if dg_base is not None and dg_base[a] is not None:
        return np.asarray(dg_base[a](x), float).reshape(p.n)
    return _terminal_gradient(p.g[a], np.asarray(x, float))


def _augmented_d2f(p, t, X, u):
    x = X[1:]
    J = np.zeros((p.n + 1, p.n + 1))
    J[0, 1:] = d2f0(p, t, x, u)
    J[1:, 1:] = d2f(p, t, x, u)
    return J


def _augmented_lipschitz(p):
    # |D2F| <= |D2f0| row plus |D2f| block; a crude but safe bound is not
    # available without the tube, so leave the augmented constant to sampling.
    return None


# ---------------------------------------------------------------------------
# candidate helpers

def dynamics_residual(p: ProblemSpec, cand: Candidate):
    """Max dynamics defect |dx - f(t, x, u)| over grid nodes off corners."""
    x = cand.trajectory
    if x is None:
        raise ContractError("candidate has no trajectory")
    u = cand.control
    worst = 0.0
    corners = set(x.corners)
    for t in x.grid:
        if t in corners:
            continue
        defect = onesided_derivative(x, t) - np.asarray(p.f(t, x(t), u(t)), float)
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def running_cost_integral(p: ProblemSpec, traj: Trajectory, u: PiecewiseControl):
    """Composite-Simpson integral of f0 along a trajectory."""
    if p.f0 is None:
        raise ContractError("problem has no running cost")
    total = 0.0
    for j in range(len(traj.grid) - 1):
        t0, t1 = traj.grid[j], traj.grid[j + 1]
        tm = 0.5 * (t0 + t1)
        f_a = p.f0(t0, traj.values[j], u(t0))
        f_m = p.f0(tm, traj(tm), u(tm))
        f_b = p.f0(t1, traj.values[j + 1], u.eval_left(t1))
        total += (t1 - t0) / 6.0 * (f_a + 4.0 * f_m + f_b)
    return total


def objective_value(p: ProblemSpec, cand: Candidate):
    """Terminal reward plus (for Bolza) the running-cost integral."""
    xT = cand.trajectory.endpoint()
    val = float(p.g[0](xT))
    if p.f0 is not None:
        val += running_cost_integral(p, cand.trajectory, cand.control)
    return val


def validate_jacobians(p: ProblemSpec, rng=None, n_samples=100, rtol=1e-5):
    """Check analytic differentials against central differences.

    Samples (t, x, u) near the initial state and inside the control set;
    returns the worst relative error found.  Raises ContractError when an
    analytic entry disagrees with finite differences beyond rtol.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for _ in range(n_samples):
        t = rng.uniform(0.0, p.T)
        x = p.xi0 + rng.normal(scale=0.3, size=p.n)
        if isinstance(p.uset, FiniteSet):
            u = p.uset.points[rng.integers(len(p.uset.points))]
        else:
            u = rng.uniform(p.uset.lo, p.uset.hi)
        checks = []
        if "d2f" in p.jacobians:
            fd = _fd_jac_state(p.f, t, x, u, p.n)
            checks.append(("d2f", np.asarray(p.jacobians["d2f"](t, x, u), float).reshape(p.n, p.n), fd))
        if "d2f0" in p.jacobians:
            fd = _fd_grad_state(p.f0, t, x, u, p.n)
            checks.append(("d2f0", np.asarray(p.jacobians["d2f0"](t, x, u), float).reshape(p.n), fd))
        for tag, analytic, fd in checks:
            scale = max(1.0, float(np.max(np.abs(fd))))
            err = float(np.max(np.abs(analytic - fd))) / scale
            worst = max(worst, err)
            if err > rtol:
                raise ContractError(f"analytic {tag} disagrees with finite differences: {err:.3g}")
    xT = p.xi0 + rng.normal(scale=0.2, size=p.n)
    dg_list = p.jacobians.get("dg")
    if dg_list is not None:
        for a, fn in enumerate(p.g):
            if dg_list[a] is None:
                continue
            fd = _terminal_gradient(fn, xT)
            scale = max(1.0, float(np.max(np.abs(fd))))
            err = float(np.max(np.abs(np.asarray(dg_list[a](xT), float).reshape(p.n) - fd))) / scale
            worst = max(worst, err)
            if err > rtol:
                raise ContractError(f"analytic dg[{a}] disagrees with finite differences: {err:.3g}")
    dh_list = p.jacobians.get("dh")
    if dh_list is not None:
        for b, fn in enumerate(p.h):
            if dh_list[b] is None:
                continue
            fd = _terminal_gradient(fn, xT)
            scale = max(1.0, float(np.max(np.abs(fd))))
            err = float(np.max(np.abs(np.asarray(dh_list[b](xT), float).reshape(p.n) - fd))) / scale
            worst = max(worst, err)
            if err > rtol:
                raise ContractError(f"analytic dh[{b}] disagrees with finite differences: {err:.3g}")
    return worst


def _fd_jac_state(f, t, x, u, n):
    h = _fd_step(np.linalg.norm(x))
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (np.asarray(f(t, x + e, u), float) - np.asarray(f(t, x - e, u), float)) / (2 * h)
    return J


def _fd_grad_state(f0, t, x, u, n):
    h = _fd_step(np.linalg.norm(x))
    row = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        row[j] = (f0(t, x + e, u) - f0(t, x - e, u)) / (2 * h)
    return row
