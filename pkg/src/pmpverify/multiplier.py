"""Static reduction at the terminal state and multiplier extraction.

The candidate is stationary for a needle family exactly when the linear
system

    sum_a lambda_a (Dg^a M) + sum_b mu_b (Dh^b M) + nu = 0,   nu >= 0,
    lambda >= 0, lambda_a = 0 off the active set,
    sum lambda + sum |mu| = 1,

has a solution, where M is the first-order endpoint response matrix.  The
system is solved as phase-1 feasibility with mu split into mu+ - mu-; on
infeasibility the phase-1 minimizer is still returned (normalized, signed
correctly) so downstream checks can show which conclusion breaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .needle import NeedleSpec, first_order_map
from .problem import Candidate, ProblemSpec, terminal_data
from .simplex import solve_phase1

ACTIVE_TOL = 1e-8
STATIONARITY_TOL = 1e-9


@dataclass
class StaticReduction:
    """First-order data of the endpoint optimization in needle thicknesses."""

    Lambda: np.ndarray  # (n, N) endpoint response
    g_vals: np.ndarray  # (m+1,) terminal reward + inequality values
    h_vals: np.ndarray  # (q,)
    Dg: np.ndarray  # (m+1, n)
    Dh: np.ndarray  # (q, n)
    active_set: list  # alphas >= 1 with g^alpha(x0(T)) = 0 within tolerance
    tol_act: float = ACTIVE_TOL

    @property
    def n_needles(self):
        return self.Lambda.shape[1]

    @property
    def m(self):
        return len(self.g_vals) - 1

    @property
    def q(self):
        return len(self.h_vals)


@dataclass
class MultiplierSet:
    """(lambda_0..lambda_m, mu_1..mu_q, nu_1..nu_N), normalized when flagged."""

    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    normalized: bool = True

    def weight(self):
        return float(np.sum(np.abs(self.lam)) + np.sum(np.abs(self.mu)))

    def as_dict(self):
        return {
            "lambda": [float(v) for v in self.lam],
            "mu": [float(v) for v in self.mu],
            "nu": [float(v) for v in self.nu],
            "normalized": bool(self.normalized),
        }


@dataclass
class MultiplierSolution:
    multipliers: MultiplierSet
    feasible: bool
    stationarity_residual: float
    message: str = ""


def reduce_to_static(
    p: ProblemSpec, cand: Candidate, S: NeedleSpec, field, tol_act=ACTIVE_TOL
) -> StaticReduction:
    """Assemble the endpoint response matrix and terminal data at x0(T)."""
    xT = cand.trajectory.endpoint()
    g_vals, h_vals, Dg, Dh = terminal_data(p, xT)
    M = first_order_map(p, cand, S, field)
    active = [a for a in range(1, len(g_vals)) if g_vals[a] <= tol_act]
    return StaticReduction(
        Lambda=M, g_vals=g_vals, h_vals=h_vals, Dg=Dg, Dh=Dh, active_set=active, tol_act=tol_act
    )


def stationarity_row(sr: StaticReduction, lam, mu):
    """Row sum lambda_a Dg^a M + sum mu_b Dh^b M in needle coordinates."""
    row = np.asarray(lam, float) @ (sr.Dg @ sr.Lambda)
    if sr.q:
        row = row + np.asarray(mu, float) @ (sr.Dh @ sr.Lambda)
    return row


def _pattern_system(rows_g, rows_h, lam_cols, pattern, N):
    """Stationarity + normalization rows for one sign pattern of mu."""
    q = len(pattern)
    n_lam = len(lam_cols)
    n_var = n_lam + q + N
    A = np.zeros((N + 1, n_var))
    for k, alpha in enumerate(lam_cols):
        A[:N, k] = rows_g[alpha]
    for b in range(q):
        A[:N, n_lam + b] = pattern[b] * rows_h[b]
    A[:N, n_lam + q :] = np.eye(N)
    A[N, : n_lam + q] = 1.0
    rhs = np.zeros(N + 1)
    rhs[N] = 1.0
    return A, rhs


def solve_multiplier_rule(sr: StaticReduction, tol=STATIONARITY_TOL) -> MultiplierSolution:
    """Extract a normalized multiplier set by phase-1 feasibility.

    Free-sign mu is handled by enumerating its 2^q sign patterns: inside one
    pattern the variables (lambda_0, active lambdas, |mu|, nu) are all
    nonnegative and the normalization row sum lambda + sum |mu| = 1 is exact.
    (A single split mu = mu+ - mu- would make the normalization row vacuously
    satisfiable by mu+ = mu-.)  Inactive lambdas are fixed at zero, enforcing
    complementary slackness exactly.  When every pattern is infeasible the
    least-violating normalized point is returned with feasible=False
    ("no normalized multiplier").
    """
    N = sr.n_needles
    m, q = sr.m, sr.q
    act = list(sr.active_set)
    rows_g = sr.Dg @ sr.Lambda  # (m+1, N)
    rows_h = sr.Dh @ sr.Lambda if q else np.zeros((0, N))
    lam_cols = [0] + act
    n_lam = len(lam_cols)

    def extract(x, pattern):
        lam_full = np.zeros(m + 1)
        for k, alpha in enumerate(lam_cols):
            lam_full[alpha] = x[k]
        mu = np.array([pattern[b] * x[n_lam + b] for b in range(q)])
        nu = x[n_lam + q :].copy()
        weight = float(np.sum(lam_full) + np.sum(np.abs(mu)))
        if weight <= 1e-12:
            return None
        lam_full /= weight
        mu = mu / weight if q else mu
        nu /= weight
        residual = float(np.max(np.abs(stationarity_row(sr, lam_full, mu) + nu))) if N else 0.0
        return lam_full, mu, nu, residual

    patterns = list(_sign_patterns(q))
    fallback = None
    for pattern in patterns:
        A, rhs = _pattern_system(rows_g, rows_h, lam_cols, pattern, N)
        # scale stationarity rows to O(1) so the phase-1 objective is balanced
        A_scaled = A.copy()
        if N:
            scales = np.maximum(1.0, np.max(np.abs(A[:N]), axis=1))
            A_scaled[:N] /= scales[:, None]
        x, _ = solve_phase1(A_scaled, rhs)
        got = extract(x, pattern)
        if got is not None:
            lam_full, mu, nu, residual = got
            if residual <= tol and np.all(nu >= -tol):
                ms = MultiplierSet(lam_full, mu, np.maximum(nu, 0.0), normalized=True)
                return MultiplierSolution(ms, True, residual)
        # keep the least-violating normalized point as the fallback candidate
        A_weighted = A_scaled.copy()
        rhs_weighted = rhs.copy()
        A_weighted[N] *= 1e6
        rhs_weighted[N] *= 1e6
        xw, _ = solve_phase1(A_weighted, rhs_weighted)
        gotw = extract(xw, pattern)
        if gotw is not None:
            lam_full, mu, nu, residual = gotw
            if fallback is None or residual < fallback[3]:
                fallback = (lam_full, mu, nu, residual)

    if fallback is None:
        zeros = MultiplierSet(np.zeros(m + 1), np.zeros(q), np.zeros(N), normalized=False)
        return MultiplierSolution(
            zeros,
            feasible=False,
            stationarity_residual=float("inf"),
            message="no normalized multiplier: normalization unreachable",
        )
    lam_full, mu, nu, residual = fallback
    ms = MultiplierSet(lam_full, mu, np.maximum(nu, 0.0), normalized=True)
    return MultiplierSolution(
        ms,
        feasible=False,
        stationarity_residual=residual,
        message=f"no normalized multiplier: stationarity residual {residual:.3g}",
    )


def _sign_patterns(q):
    if q == 0:
        yield ()
        return
    for bits in range(2**q):
        yield tuple(1.0 if bits & (1 << b) == 0 else -1.0 for b in range(q))


def multiplier_inequality_check(
    ms: MultiplierSet, costate, p: ProblemSpec, cand: Candidate, S: NeedleSpec, tol_mp=1e-7
):
    """Slack p(t_i) [f(t_i, x0, v_i) - f(t_i, x0, u0)] per needle; all <= tol."""
    traj = cand.trajectory
    u0 = cand.control
    slacks = []
    for i, (t_i, v_i) in enumerate(S.pairs):
        x_i = traj(t_i)
        diff = np.asarray(p.f(t_i, x_i, v_i), float) - np.asarray(p.f(t_i, x_i, u0(t_i)), float)
        slacks.append((i, float(costate(t_i) @ diff)))
    passed = all(s <= tol_mp for _, s in slacks)
    return slacks, passed


def check_qualification(i: int, sr: StaticReduction, tol=STATIONARITY_TOL):
    """Qualification (QC, i): no nonzero admissible combination annihilates
    the active terminal gradients.

    Decided by phase-1 feasibility of a normalized combination; when one
    exists the problem is disqualified and the combination is returned as the
    certificate.  Returns (qualified, certificate, residual) where the
    certificate maps 'c' (per included alpha) and 'd' (per beta).
    """
    if i not in (0, 1):
        raise ContractError("qualification index must be 0 or 1")
    n = sr.Dg.shape[1]
    alphas = ([0] if i == 0 else []) + list(sr.active_set)
    q = sr.q
    n_var = len(alphas) + 2 * q
    if n_var == 0:
        return True, None, 0.0
    A = np.zeros((n + 1, n_var))
    for k, alpha in enumerate(alphas):
        A[:n, k] = sr.Dg[alpha]
    for b in range(q):
        A[:n, len(alphas) + b] = sr.Dh[b]
        A[:n, len(alphas) + q + b] = -sr.Dh[b]
    A[n, :] = 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    x, _ = solve_phase1(A, rhs)
    c = {alpha: float(x[k]) for k, alpha in enumerate(alphas)}
    d = [float(x[len(alphas) + b] - x[len(alphas) + q + b]) for b in range(q)]
    combo = np.zeros(n)
    for alpha, cv in c.items():
        combo += cv * sr.Dg[alpha]
    for b in range(q):
        combo += d[b] * sr.Dh[b]
    residual = float(np.max(np.abs(combo))) if n else 0.0
    weight = sum(c.values()) + sum(abs(v) for v in d)
    disqualified = residual <= tol and weight >= 1.0 - 1e-9
    if disqualified:
        certificate = {
            "c": {alpha: cv / weight for alpha, cv in c.items()},
            "d": [v / weight for v in d],
        }
        return False, certificate, residual / weight
    return True, None, residual
