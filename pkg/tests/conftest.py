import numpy as np
import pytest

from pmpverify import Candidate, compute_resolvent, solve_rk
from pmpverify import registry


@pytest.fixture(scope="session")
def di_setup():
    """double_integrator problem with the integrated optimal candidate."""
    p, controls = registry.make("double_integrator")
    traj = solve_rk(p, controls["optimal"])
    cand = Candidate(control=controls["optimal"], trajectory=traj)
    field = compute_resolvent(p, cand)
    return p, controls, cand, field


@pytest.fixture(scope="session")
def le_setup():
    p, controls = registry.make("linear_endpoint")
    traj = solve_rk(p, controls["optimal"])
    cand = Candidate(control=controls["optimal"], trajectory=traj)
    field = compute_resolvent(p, cand)
    return p, controls, cand, field


@pytest.fixture(scope="session")
def pendulum_setup():
    p, controls = registry.make("pendulum")
    traj = solve_rk(p, controls["swing"])
    cand = Candidate(control=controls["swing"], trajectory=traj)
    field = compute_resolvent(p, cand)
    return p, controls, cand, field


@pytest.fixture(scope="session")
def lqr_setup():
    p, controls = registry.make("lqr_scalar")
    traj = solve_rk(p, controls["optimal"])
    cand = Candidate(control=controls["optimal"], trajectory=traj)
    return p, controls, cand


@pytest.fixture(scope="session")
def box_setup():
    p, controls = registry.make("box_reach")
    traj = solve_rk(p, controls["optimal"])
    cand = Candidate(control=controls["optimal"], trajectory=traj)
    field = compute_resolvent(p, cand)
    return p, controls, cand, field


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
