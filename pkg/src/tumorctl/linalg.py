"""Krylov solver and block operators for the coupled Galerkin systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class LinearSolveError(RuntimeError):
    """Unhappy GMRES breakdown (distinct from plain non-convergence)."""


@dataclass
class GmresResult:
    x: np.ndarray
    converged: bool
    iterations: int
    relative_residual: float
    flag: str                      # converged | happy_breakdown | maxiter
    residuals: list = field(default_factory=list)


def gmres_solve(matrix_action, rhs, diag_preconditioner, eps_L=1e-3, max_iters=500):
    """Full GMRES (no restart) with left diagonal preconditioning.

    Stops when the preconditioned relative residual drops to eps_L. On
    hitting max_iters the best (= last, residuals are non-increasing)
    iterate is returned with flag "maxiter". An exact-subspace solution
    (happy breakdown) returns flag "happy_breakdown"; an unhappy breakdown
    raises LinearSolveError.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.size
    d = np.asarray(diag_preconditioner, dtype=float).copy()
    d[d == 0.0] = 1.0  # zero diagonals carry no scaling information

    b = rhs / d
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return GmresResult(np.zeros(n), True, 0, 0.0, "converged", [0.0])

    V = [b / beta]
    # Hessenberg columns after Givens, rotation pairs, transformed rhs
    Hcols = []
    cs = []
    sn = []
    g = [beta]
    residuals = [1.0]

    for k in range(max_iters):
        w = np.asarray(matrix_action(V[k]), dtype=float) / d
        hcol = np.empty(k + 2)
        for i in range(k + 1):  # modified Gram-Schmidt
            hij = float(w @ V[i])
            hcol[i] = hij
            w -= hij * V[i]
        hk1 = float(np.linalg.norm(w))
        hcol[k + 1] = hk1
        happy = hk1 <= 1e-14 * beta

        for i in range(k):
            t = cs[i] * hcol[i] + sn[i] * hcol[i + 1]
            hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1]
            hcol[i] = t
        denom = math.hypot(hcol[k], hcol[k + 1])
        if denom == 0.0:
            raise LinearSolveError(
                f"GMRES breakdown at iteration {k + 1}: zero Hessenberg column"
            )
        ck, sk = hcol[k] / denom, hcol[k + 1] / denom
        cs.append(ck)
        sn.append(sk)
        hcol[k] = denom
        hcol[k + 1] = 0.0
        Hcols.append(hcol[: k + 1])
        g.append(-sk * g[k])
        g[k] = ck * g[k]

        rel = abs(g[k + 1]) / beta
        residuals.append(rel)

        done = rel <= eps_L or happy
        if done or k == max_iters - 1:
            # back substitution on the triangular system
            m = k + 1
            y = np.zeros(m)
            for i in range(m - 1, -1, -1):
                s = g[i] - sum(Hcols[j][i] * y[j] for j in range(i + 1, m))
                y[i] = s / Hcols[i][i]
            x = np.zeros(n)
            for j in range(m):
                x += y[j] * V[j]
            if done:
                flag = "happy_breakdown" if (happy and rel > eps_L) else "converged"
                return GmresResult(x, True, m, rel, flag, residuals)
            return GmresResult(x, False, m, rel, "maxiter", residuals)
        V.append(w / hk1)

    raise AssertionError("unreachable")


class BlockOperator:
    """3x3 grid of equally sized sparse blocks acting on a stacked vector."""

    def __init__(self, blocks, n_sub):
        self.blocks = blocks
        self.n_sub = n_sub

    def matvec(self, x):
        n = self.n_sub
        y = np.zeros(3 * n)
        for i in range(3):
            yi = y[i * n:(i + 1) * n]
            for j in range(3):
                a = self.blocks[i][j]
                if a is not None:
                    yi += a @ x[j * n:(j + 1) * n]
        return y

    def diagonal(self):
        n = self.n_sub
        d = np.empty(3 * n)
        for i in range(3):
            a = self.blocks[i][i]
            d[i * n:(i + 1) * n] = a.diagonal() if a is not None else 1.0
        return d
