import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmpverify import (
    Box,
    DomainError,
    MalformedControlError,
    PiecewiseControl,
    ProblemSpec,
    Subdivision,
    eval_control,
    merge_subdivisions,
    normalize_control,
    onesided_derivative,
    solve_rk,
)
from pmpverify.pwfun import Trajectory


def make_step(horizon=1.0, split=0.4, v1=1.0, v2=-2.0, at_split=None):
    sub = Subdivision((0.0, split, horizon))
    segs = [lambda t: np.array([v1]), lambda t: np.array([v2])]
    break_values = {1: np.array([at_split])} if at_split is not None else None
    return PiecewiseControl(sub, segs, normalized=False, break_values=break_values)


class TestSubdivision:
    def test_endpoints_enforced(self):
        with pytest.raises(ValueError):
            Subdivision((0.1, 1.0))
        with pytest.raises(ValueError):
            Subdivision((0.0, 0.5, 0.5, 1.0))

    def test_merge_plain(self):
        a = Subdivision((0.0, 2.0))
        assert merge_subdivisions(a, a).points == (0.0, 2.0)
        b = Subdivision((0.0, 1.0, 2.0))
        c = Subdivision((0.0, 1.5, 2.0))
        assert merge_subdivisions(b, c).points == (0.0, 1.0, 1.5, 2.0)

    def test_merge_dedup_tolerance(self):
        b = Subdivision((0.0, 1.0, 2.0))
        c = Subdivision((0.0, 1.0 + 1e-15, 2.0))
        assert merge_subdivisions(b, c).points == (0.0, 1.0, 2.0)


class TestNormalize:
    def test_continuous_control_unchanged(self):
        u = PiecewiseControl.from_closure(lambda t: [np.sin(t)], 1.0)
        assert normalize_control(u) is u

    def test_step_value_replaced_by_right_limit(self):
        u = make_step(at_split=5.0)  # explicit left-ish value at the breakpoint
        assert eval_control(u, 0.4)[0] == 5.0
        un = normalize_control(u)
        assert eval_control(un, 0.4)[0] == -2.0

    def test_value_at_horizon_is_left_limit(self):
        u = make_step()
        un = normalize_control(u)
        assert eval_control(un, 1.0)[0] == -2.0

    def test_idempotent(self):
        un = normalize_control(make_step(at_split=3.0))
        again = normalize_control(un)
        for t in np.linspace(0, 1, 117):
            assert eval_control(un, t)[0] == eval_control(again, t)[0]

    def test_malformed_segment_rejected(self):
        sub = Subdivision((0.0, 0.5, 1.0))
        segs = [lambda t: np.array([1.0 / (0.5 - t)]), lambda t: np.array([0.0])]
        with pytest.raises(MalformedControlError):
            normalize_control(PiecewiseControl(sub, segs))

    @given(
        split=st.floats(0.1, 0.9),
        v1=st.floats(-5, 5),
        v2=st.floats(-5, 5),
        stray=st.floats(-5, 5),
    )
    @settings(max_examples=30, deadline=None)
    def test_changes_only_breakpoints(self, split, v1, v2, stray):
        u = make_step(split=split, v1=v1, v2=v2, at_split=stray)
        un = normalize_control(u)
        rng = np.random.default_rng(0)
        for t in rng.uniform(0, 1, 200):
            if abs(t - split) < 1e-12 or t in (0.0, 1.0):
                continue
            assert eval_control(u, t)[0] == eval_control(un, t)[0]


class TestEval:
    def test_constant(self):
        u = PiecewiseControl.constant([3.0], 2.0)
        for t in (0.0, 0.3, 2.0):
            assert eval_control(u, t)[0] == 3.0

    def test_right_continuity_at_breakpoint(self):
        u = normalize_control(make_step(split=0.5, v1=1.0, v2=2.0))
        assert eval_control(u, 0.5)[0] == 2.0

    def test_left_limit_at_horizon(self):
        u = normalize_control(make_step(split=0.5, v1=1.0, v2=2.0))
        assert eval_control(u, 1.0)[0] == 2.0

    def test_domain_error(self):
        u = PiecewiseControl.constant([0.0], 1.0)
        with pytest.raises(DomainError):
            eval_control(u, -0.1)
        with pytest.raises(DomainError):
            eval_control(u, 1.1)

    def test_sampled_equality_with_normalization(self):
        u = make_step(at_split=9.0)
        un = normalize_control(u)
        rng = np.random.default_rng(7)
        times = rng.uniform(0, 1, 10_000)
        times = times[np.abs(times - 0.4) > 1e-9]
        for t in times:
            assert eval_control(u, t)[0] == eval_control(un, t)[0]


class TestPiecewiseConstantJson:
    def test_round_trip(self):
        u = PiecewiseControl.piecewise_constant([0.0, 0.5, 1.0], [[1.0, 2.0], [3.0, 4.0]])
        data = u.to_json()
        v = PiecewiseControl.from_json(data)
        assert v.to_json() == data
        assert np.allclose(eval_control(v, 0.25), [1.0, 2.0])
        assert np.allclose(eval_control(v, 0.75), [3.0, 4.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            PiecewiseControl.piecewise_constant([0.0, 1.0], [[1.0], [2.0]])

    def test_closure_has_no_json_form(self):
        u = PiecewiseControl.from_closure(lambda t: [t], 1.0)
        with pytest.raises(ValueError):
            u.to_json()


class TestTrajectoryDerivative:
    def test_constant_trajectory(self):
        x = Trajectory.constant([2.0, -1.0], 1.0, n_nodes=5)
        for t in (0.0, 0.3, 1.0):
            assert np.allclose(onesided_derivative(x, t), 0.0)

    def _corner_trajectory(self):
        # |v|-shaped path: slope +1 then -1, corner at t = 0.5
        grid = np.array([0.0, 0.5, 1.0])
        values = np.array([[0.0], [0.5], [0.0]])
        d_right = np.array([[1.0], [-1.0], [-1.0]])
        d_left = np.array([[1.0], [1.0], [-1.0]])
        return Trajectory(grid, values, d_right, d_left, corners=(0.5,))

    def test_right_derivative_at_corner(self):
        x = self._corner_trajectory()
        assert onesided_derivative(x, 0.5)[0] == -1.0

    def test_left_derivative_at_horizon(self):
        x = self._corner_trajectory()
        assert onesided_derivative(x, 1.0)[0] == -1.0

    def test_domain_error(self):
        x = self._corner_trajectory()
        with pytest.raises(DomainError):
            onesided_derivative(x, 1.5)

    def test_integral_map_recovers_integrand(self):
        # integrate x' = u with u = phi; the one-sided derivative must give phi
        # back at continuity points
        phi = PiecewiseControl.from_closure(lambda t: [np.cos(3 * t)], 1.0)
        p = ProblemSpec(
            n=1,
            d=1,
            T=1.0,
            xi0=np.array([0.7]),
            f=lambda t, x, u: np.asarray(u, float),
            uset=Box([-10.0], [10.0]),
            g=[lambda x: x[0]],
        )
        traj = solve_rk(p, phi, grid_step=1e-3)
        for t in np.linspace(0.05, 0.95, 29):
            assert abs(onesided_derivative(traj, t)[0] - np.cos(3 * t)) < 1e-6
