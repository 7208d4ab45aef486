"""Dense phase-1 simplex for equality-constrained nonnegative feasibility.

Solves: find x >= 0 with A x = b, by minimizing the total mass of two-sided
artificial variables (the L1 residual |A x - b|_1 over x >= 0) with Bland's
rule for anti-cycling.  The system is feasible iff the optimum is ~0; for
infeasible systems the returned x is a least-violating nonnegative point,
which downstream code uses as a best-effort fallback.
"""

from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-11


def solve_phase1(A, b, tol=PIVOT_TOL, max_iter=None):
    """Minimize |A x - b|_1 over x >= 0 (two-sided artificials).

    Returns (x, residual) with residual the optimal L1 violation; the system
    A x = b, x >= 0 is feasible iff residual is ~0.
    """
    A = np.array(A, float, ndmin=2)
    b = np.array(b, float).ravel()
    m, n = A.shape
    if b.shape != (m,):
        raise ValueError("shape mismatch between A and b")
    flip = b < 0
    A = A.copy()
    b = b.copy()
    A[flip] *= -1.0
    b[flip] *= -1.0

    # tableau [A | I | -I | b]; costs are 0 on x and 1 on both artificial
    # blocks; the starting basis is the positive artificial of every row
    width = n + 2 * m
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, n + m : width] = -np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, n + m : width] = 2.0
    T[m, -1] = -b.sum()
    basis = list(range(n, n + m))

    cap = max_iter or 500 * (m + n + 10)
    for _ in range(cap):
        enter = -1
        for j in range(width):
            if T[m, j] < -tol:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for i in range(m):
            coeff = T[i, enter]
            if coeff > tol:
                ratio = T[i, -1] / coeff
                if ratio < best - 1e-13 or (
                    abs(ratio - best) <= 1e-13 and (leave < 0 or basis[i] < basis[leave])
                ):
                    best = ratio
                    leave = i
        if leave < 0:
            raise RuntimeError("phase-1 simplex found an unbounded direction")
        piv = T[leave, enter]
        T[leave] /= piv
        col = T[:, enter].copy()
        col[leave] = 0.0
        T -= np.outer(col, T[leave])
        basis[leave] = enter
    else:
        raise RuntimeError("phase-1 simplex hit the iteration cap")

    x = np.zeros(n)
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = max(T[i, -1], 0.0)
    residual = max(-T[m, -1], 0.0)
    return x, residual


def feasible_point(A, b, feas_tol=1e-9):
    """Convenience wrapper: (x or None, residual)."""
    x, residual = solve_phase1(A, b)
    return (x if residual <= feas_tol else None), residual
