"""Built-in example problems with named candidate controls.

Each factory returns (ProblemSpec, {control_name: PiecewiseControl}).  The
"optimal" controls were solved in closed form; the tests hold the matching
trajectories, costates, and multipliers as oracles.
"""

from __future__ import annotations

import math

import numpy as np

from .problem import Box, ProblemSpec
from .pwfun import PiecewiseControl


def double_integrator(params=None):
    """Bang-bang acceleration problem on T = 2.

    Maximize x1(T) - x2(T)^2 / 2 for x1' = x2, x2' = u, |u| <= 1, from rest.
    The optimum accelerates at +1 until t = 4/3 and brakes at -1 after; the
    switch perturbed to 1.2 gives the canonical failing candidate.
    """
    params = params or {}
    switch = float(params.get("switch", 4.0 / 3.0))
    T = 2.0
    p = ProblemSpec(
        n=2,
        d=1,
        T=T,
        xi0=np.zeros(2),
        f=lambda t, x, u: np.array([x[1], u[0]]),
        uset=Box([-1.0], [1.0]),
        g=[lambda x: x[0] - 0.5 * x[1] ** 2],
        jacobians={
            "d2f": lambda t, x, u: np.array([[0.0, 1.0], [0.0, 0.0]]),
            "d1f": lambda t, x, u: np.zeros(2),
            "dg": [lambda x: np.array([1.0, -x[1]])],
        },
        lipschitz=1.0,
        name="double_integrator",
    )
    controls = {
        "optimal": PiecewiseControl.piecewise_constant([0.0, switch, T], [[1.0], [-1.0]]),
        "perturbed": PiecewiseControl.piecewise_constant([0.0, 1.2, T], [[1.0], [-1.0]]),
        "coast": PiecewiseControl.constant([0.0], T),
    }
    return p, controls


def lqr_scalar(params=None):
    """Scalar linear-quadratic problem with f = -x + u on T = 1 (Bolza).

    Maximize int -(x^2 + u^2)/2 dt - c x(1)^2 / 2 from x(0) = 1.  The optimal
    control u = p(t) follows from the two-point boundary system with
    eigenvalues +-sqrt(2).
    """
    params = params or {}
    c = float(params.get("terminal_weight", 0.5))
    T = 1.0
    p = ProblemSpec(
        n=1,
        d=1,
        T=T,
        xi0=np.array([1.0]),
        f=lambda t, x, u: np.array([-x[0] + u[0]]),
        f0=lambda t, x, u: -0.5 * (x[0] ** 2 + u[0] ** 2),
        uset=Box([-2.0], [2.0]),
        g=[lambda x: -0.5 * c * x[0] ** 2],
        jacobians={
            "d2f": lambda t, x, u: np.array([[-1.0]]),
            "d2f0": lambda t, x, u: np.array([-x[0]]),
            "d1f": lambda t, x, u: np.zeros(1),
            "d1f0": lambda t, x, u: 0.0,
            "dg": [lambda x: np.array([-c * x[0]])],
        },
        lipschitz=1.0,
        name="lqr_scalar",
    )
    A, B = lqr_scalar_coefficients(c, T)
    s2 = math.sqrt(2.0)

    def u_opt(t):
        return np.array([A * (1 + s2) * math.exp(s2 * t) + B * (1 - s2) * math.exp(-s2 * t)])

    controls = {
        "optimal": PiecewiseControl.from_closure(u_opt, T),
        "zero": PiecewiseControl.constant([0.0], T),
        "step": PiecewiseControl.piecewise_constant([0.0, 0.5, T], [[0.5], [-0.5]]),
    }
    return p, controls


def lqr_scalar_coefficients(c=0.5, T=1.0):
    """Closed-form coefficients of x(t) = A e^{s2 t} + B e^{-s2 t}."""
    s2 = math.sqrt(2.0)
    ratio = math.exp(-2 * s2 * T) * (1 - s2 + c) / (1 + s2 + c)
    B = 1.0 / (1.0 - ratio)
    A = -ratio * B
    return A, B


def linear_endpoint(params=None):
    """Reach the largest x1(T) with the velocity pinned back to zero.

    x1' = x2, x2' = u, |u| <= 1, h1 = x2(T) = 0, maximize x1(T) on T = 2.
    Optimal: accelerate to t = 1, brake after; normalized multipliers are
    (lambda0, mu1) = (1/2, -1/2).
    """
    T = 2.0
    p = ProblemSpec(
        n=2,
        d=1,
        T=T,
        xi0=np.zeros(2),
        f=lambda t, x, u: np.array([x[1], u[0]]),
        uset=Box([-1.0], [1.0]),
        g=[lambda x: x[0]],
        h=[lambda x: x[1]],
        jacobians={
            "d2f": lambda t, x, u: np.array([[0.0, 1.0], [0.0, 0.0]]),
            "d1f": lambda t, x, u: np.zeros(2),
            "dg": [lambda x: np.array([1.0, 0.0])],
            "dh": [lambda x: np.array([0.0, 1.0])],
        },
        lipschitz=1.0,
        name="linear_endpoint",
    )
    controls = {
        "optimal": PiecewiseControl.piecewise_constant([0.0, 1.0, T], [[1.0], [-1.0]]),
        "reversed": PiecewiseControl.piecewise_constant([0.0, 1.0, T], [[-1.0], [1.0]]),
    }
    return p, controls


def box_reach(params=None):
    """Plain integrator in the plane with mixed terminal constraints.

    x' = u on T = 1 with u in [-1,1]^2; maximize x1 + x2 subject to
    x1(T) = 1 (equality), x2(T) <= 1/2 (active inequality) and x1(T) <= 2
    (inactive).  The optimum holds u = (1, 1/2); the active-gradient stack is
    degenerate, so the qualification condition fails by design.
    """
    T = 1.0
    p = ProblemSpec(
        n=2,
        d=2,
        T=T,
        xi0=np.zeros(2),
        f=lambda t, x, u: np.asarray(u, float),
        uset=Box([-1.0, -1.0], [1.0, 1.0]),
        g=[
            lambda x: x[0] + x[1],
            lambda x: 0.5 - x[1],
            lambda x: 2.0 - x[0],
        ],
        h=[lambda x: x[0] - 1.0],
        jacobians={
            "d2f": lambda t, x, u: np.zeros((2, 2)),
            "d1f": lambda t, x, u: np.zeros(2),
            "dg": [
                lambda x: np.array([1.0, 1.0]),
                lambda x: np.array([0.0, -1.0]),
                lambda x: np.array([-1.0, 0.0]),
            ],
            "dh": [lambda x: np.array([1.0, 0.0])],
        },
        lipschitz=0.0,
        name="box_reach",
    )
    controls = {
        "optimal": PiecewiseControl.constant([1.0, 0.5], T),
        "short": PiecewiseControl.constant([0.5, 0.5], T),
    }
    return p, controls


def pendulum(params=None):
    """Forced pendulum, the smooth nonlinear exercise problem.

    x1' = x2, x2' = -sin(x1) + u on T = 1.5 with |u| <= 1.5; terminal reward
    -(x1 - 1)^2/2 - x2^2/2.  No optimum is claimed; the "swing" candidate is
    a two-level control used for expansion and sensitivity studies.
    """
    T = 1.5
    p = ProblemSpec(
        n=2,
        d=1,
        T=T,
        xi0=np.array([0.4, 0.0]),
        f=lambda t, x, u: np.array([x[1], -math.sin(x[0]) + u[0]]),
        uset=Box([-1.5], [1.5]),
        g=[lambda x: -0.5 * ((x[0] - 1.0) ** 2 + x[1] ** 2)],
        jacobians={
            "d2f": lambda t, x, u: np.array([[0.0, 1.0], [-math.cos(x[0]), 0.0]]),
            "d1f": lambda t, x, u: np.zeros(2),
            "dg": [lambda x: np.array([-(x[0] - 1.0), -x[1]])],
        },
        lipschitz=1.0,
        name="pendulum",
    )
    controls = {
        "swing": PiecewiseControl.piecewise_constant([0.0, 0.75, T], [[1.0], [-0.5]]),
        "rest": PiecewiseControl.constant([0.0], T),
    }
    return p, controls


REGISTRY = {
    "double_integrator": double_integrator,
    "lqr_scalar": lqr_scalar,
    "linear_endpoint": linear_endpoint,
    "box_reach": box_reach,
    "pendulum": pendulum,
}


def names():
    return sorted(REGISTRY)


def make(name, params=None):
    if name not in REGISTRY:
        raise KeyError(f"unknown problem {name!r}; registry: {', '.join(names())}")
    return REGISTRY[name](params)
