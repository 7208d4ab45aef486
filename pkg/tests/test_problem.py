import math

import numpy as np
import pytest

from pmpverify import (
    AlreadyMayerError,
    Box,
    Candidate,
    DomainError,
    PiecewiseControl,
    ProblemSpec,
    bolza_to_mayer,
    build_costate,
    compute_resolvent,
    objective_value,
    project_augmented_costate,
    solve_rk,
    terminal_data,
    validate_jacobians,
)
from pmpverify import registry
from pmpverify.problem import dynamics_residual
from pmpverify.registry import lqr_scalar_coefficients


def scalar_bolza(f0=None):
    return ProblemSpec(
        n=1,
        d=1,
        T=1.0,
        xi0=np.array([0.0]),
        f=lambda t, x, u: np.asarray(u, float),
        f0=f0,
        uset=Box([-3.0], [3.0]),
        g=[lambda x: x[0]],
    )


class TestBolzaToMayer:
    def test_rejects_mayer(self):
        p = scalar_bolza(f0=None)
        with pytest.raises(AlreadyMayerError):
            bolza_to_mayer(p)

    def test_zero_running_cost_keeps_objective(self):
        p = scalar_bolza(f0=lambda t, x, u: 0.0)
        aug = bolza_to_mayer(p)
        u = PiecewiseControl.constant([1.0], 1.0)
        traj = solve_rk(aug.mayer, u)
        assert abs(traj.endpoint()[0]) < 1e-12  # sigma(T) = 0
        assert abs(aug.mayer.g[0](traj.endpoint()) - traj.endpoint()[1]) < 1e-12

    def test_quadratic_cost_closed_form(self):
        # f0 = u^2, f = u, u = 1 on [0,1]: sigma(T) = 1
        p = scalar_bolza(f0=lambda t, x, u: u[0] ** 2)
        aug = bolza_to_mayer(p)
        u = PiecewiseControl.constant([1.0], 1.0)
        traj = solve_rk(aug.mayer, u)
        assert abs(traj.endpoint()[0] - 1.0) < 1e-12

    def test_objective_equality_any_process(self, lqr_setup):
        # G0(X(T)) = int f0 + g0(x(T)) along an arbitrary admissible control
        p, controls, _ = lqr_setup
        aug = bolza_to_mayer(p)
        for name in ("zero", "step", "optimal"):
            u = controls[name]
            traj_aug = solve_rk(aug.mayer, u)
            lhs = aug.mayer.g[0](traj_aug.endpoint())
            traj = solve_rk(p, u)
            rhs = objective_value(p, Candidate(control=u, trajectory=traj))
            assert abs(lhs - rhs) < 1e-9

    def test_sigma_slot_differentials_exact(self):
        p = scalar_bolza(f0=lambda t, x, u: x[0] + u[0])
        aug = bolza_to_mayer(p)
        X = np.array([0.37, 1.4])
        dg = aug.mayer.jacobians["dg"][0](X)
        assert dg[0] == 1.0
        g_vals, h_vals, Dg, Dh = terminal_data(aug.mayer, X)
        assert Dg[0, 0] == 1.0

    def test_constraint_sigma_gradients_zero(self):
        p = ProblemSpec(
            n=1,
            d=1,
            T=1.0,
            xi0=np.array([0.0]),
            f=lambda t, x, u: np.asarray(u, float),
            f0=lambda t, x, u: 0.5 * u[0] ** 2,
            uset=Box([-1.0], [1.0]),
            g=[lambda x: x[0], lambda x: 1.0 - x[0]],
            h=[lambda x: x[0] - 0.25],
        )
        aug = bolza_to_mayer(p)
        X = np.array([0.1, 0.25])
        _, _, Dg, Dh = terminal_data(aug.mayer, X)
        assert Dg[1, 0] == 0.0
        assert Dh[0, 0] == 0.0

    def test_augmented_hamiltonian_identity(self):
        p = scalar_bolza(f0=lambda t, x, u: math.sin(x[0]) + u[0] ** 2)
        aug = bolza_to_mayer(p)
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = rng.uniform(0, 1)
            x = rng.normal(size=1)
            u = rng.uniform(-3, 3, size=1)
            P = rng.normal(size=2)  # (p0, p)
            lhs = P @ aug.mayer.f(t, np.concatenate(([0.3], x)), u)
            rhs = P[0] * p.f0(t, x, u) + P[1:] @ p.f(t, x, u)
            assert abs(lhs - rhs) < 1e-14


class TestTerminalData:
    def test_linear_map(self):
        p = ProblemSpec(
            n=2,
            d=1,
            T=1.0,
            xi0=np.zeros(2),
            f=lambda t, x, u: np.array([u[0], 0.0]),
            uset=Box([-1.0], [1.0]),
            g=[lambda x: x[0]],
        )
        g_vals, h_vals, Dg, Dh = terminal_data(p, np.array([2.0, 0.0]))
        assert g_vals[0] == 2.0
        assert np.allclose(Dg[0], [1.0, 0.0], atol=1e-9)

    def test_sphere_constraint(self):
        p = ProblemSpec(
            n=2,
            d=1,
            T=1.0,
            xi0=np.zeros(2),
            f=lambda t, x, u: np.array([u[0], 0.0]),
            uset=Box([-1.0], [1.0]),
            g=[lambda x: 0.0],
            h=[lambda x: x[0] ** 2 + x[1] ** 2 - 1.0],
        )
        g_vals, h_vals, Dg, Dh = terminal_data(p, np.array([1.0, 0.0]))
        assert abs(h_vals[0]) < 1e-14
        assert np.allclose(Dh[0], [2.0, 0.0], atol=1e-8)

    def test_outside_state_region(self):
        p = ProblemSpec(
            n=1,
            d=1,
            T=1.0,
            xi0=np.array([0.0]),
            f=lambda t, x, u: np.asarray(u, float),
            uset=Box([-1.0], [1.0]),
            g=[lambda x: x[0]],
            omega=lambda x: abs(x[0]) < 2.0,
        )
        with pytest.raises(DomainError):
            terminal_data(p, np.array([5.0]))

    @pytest.mark.parametrize("name", sorted(registry.REGISTRY))
    def test_registry_gradients_match_finite_differences(self, name):
        p, _ = registry.make(name)
        assert validate_jacobians(p, np.random.default_rng(0), n_samples=100) < 1e-5


class TestCandidate:
    def test_dynamics_residual_small_on_integrated_path(self, di_setup):
        p, controls, cand, _ = di_setup
        assert dynamics_residual(p, cand) < 1e-10


class TestProjectAugmentedCostate:
    def test_zero_costate(self, lqr_setup):
        p, controls, cand = lqr_setup
        aug = bolza_to_mayer(p)
        traj = solve_rk(aug.mayer, controls["optimal"])
        field = compute_resolvent(aug.mayer, Candidate(controls["optimal"], traj))
        P = build_costate([0.0], [], np.zeros((1, 2)), np.zeros((0, 2)), field)
        lam0, pc = project_augmented_costate(P)
        assert lam0 == 0.0
        assert np.allclose(pc(0.5), 0.0)

    def test_unit_p0(self, lqr_setup):
        p, controls, cand = lqr_setup
        aug = bolza_to_mayer(p)
        traj = solve_rk(aug.mayer, controls["optimal"])
        field = compute_resolvent(aug.mayer, Candidate(controls["optimal"], traj))
        Dg = np.array([[1.0, -0.5 * traj.endpoint()[1]]])
        P = build_costate([1.0], [], Dg, np.zeros((0, 2)), field)
        lam0, pc = project_augmented_costate(P, tol=1e-9)
        assert abs(lam0 - 1.0) < 1e-12

    def test_lqr_matches_closed_form(self, lqr_setup):
        # augmented propagation against the analytic two-point solution
        p, controls, cand = lqr_setup
        aug = bolza_to_mayer(p)
        traj = solve_rk(aug.mayer, controls["optimal"])
        field = compute_resolvent(aug.mayer, Candidate(controls["optimal"], traj))
        xT = traj.endpoint()
        Dg = np.array([[1.0, -0.5 * xT[1]]])
        P = build_costate([1.0], [], Dg, np.zeros((0, 2)), field)
        lam0, pc = project_augmented_costate(P)
        A, B = lqr_scalar_coefficients()
        s2 = math.sqrt(2.0)
        for t in np.linspace(0, 1, 21):
            p_exact = A * (1 + s2) * math.exp(s2 * t) + B * (1 - s2) * math.exp(-s2 * t)
            assert abs(pc(t)[0] - p_exact) < 1e-7


class TestLqrClosedForm:
    def test_trajectory_matches_eigen_solution(self, lqr_setup):
        p, controls, cand = lqr_setup
        A, B = lqr_scalar_coefficients()
        s2 = math.sqrt(2.0)
        for t in np.linspace(0, 1, 21):
            x_exact = A * math.exp(s2 * t) + B * math.exp(-s2 * t)
            assert abs(cand.trajectory(t)[0] - x_exact) < 1e-8
