"""Deterministic dense convex QP solver for the safety-filter program.

Solves  min 0.5 z'Hz + c'z  s.t.  Gz >= h,  lb <= z_u <= ub  with diagonal
positive-definite H.  The engine is a dual active-set iteration that starts
from the unconstrained minimizer and activates violated rows one at a time;
ties in the pivot choice break on the lowest row index, so identical inputs
reproduce identical outputs bit for bit.  Problems here are tiny (a handful
of controls plus slack variables), so robustness and reproducibility beat
asymptotics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

STATUS_NAMES = {
    _kernels.QP_OPTIMAL: "optimal",
    _kernels.QP_INFEASIBLE: "infeasible",
    _kernels.QP_MAXITER: "max-iterations",
}

MAX_ITERATIONS = 500
FEASIBILITY_TOL = 1e-8
STATIONARITY_TOL = 1e-8


@dataclass
class QuadraticProgram:
    """QP data.  Box bounds apply to the leading control block of z and are
    folded into G as general rows before solving (one code path)."""

    h_diag: np.ndarray
    c: np.ndarray
    g: np.ndarray
    h_vec: np.ndarray
    lb: np.ndarray = field(default_factory=lambda: np.empty(0))
    ub: np.ndarray = field(default_factory=lambda: np.empty(0))
    hard_indices: tuple = ()  # rows that carry no slack variable (metadata)

    def __post_init__(self):
        self.h_diag = np.asarray(self.h_diag, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        self.h_vec = np.atleast_1d(np.asarray(self.h_vec, dtype=float))
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = self.h_diag.size
        if self.g.size == 0:
            self.g = np.zeros((0, n))
        if np.any(self.h_diag <= 0):
            raise ValueError("H must be strictly positive definite (diagonal)")
        if self.g.shape[1] != n or self.c.size != n:
            raise ValueError("inconsistent QP dimensions")
        if self.lb.size != self.ub.size:
            raise ValueError("box bound arrays must have equal length")
        if np.any(self.lb > self.ub):
            raise ValueError("degenerate box bounds (lb > ub)")

    def folded(self) -> tuple[np.ndarray, np.ndarray]:
        """(G, h) with the box bounds appended as general inequality rows."""
        n = self.h_diag.size
        n_box = self.lb.size
        rows = np.zeros((self.g.shape[0] + 2 * n_box, n))
        rhs = np.empty(rows.shape[0])
        rows[: self.g.shape[0]] = self.g
        rhs[: self.g.shape[0]] = self.h_vec
        for i in range(n_box):
            rows[self.g.shape[0] + 2 * i, i] = 1.0
            rhs[self.g.shape[0] + 2 * i] = self.lb[i]
            rows[self.g.shape[0] + 2 * i + 1, i] = -1.0
            rhs[self.g.shape[0] + 2 * i + 1] = -self.ub[i]
        return rows, rhs


@dataclass
class QpSolution:
    z: np.ndarray
    status: str
    kkt_residual: float
    multipliers: np.ndarray
    iterations: int
    objective: float

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def kkt_residual(qp: QuadraticProgram, z: np.ndarray, lam: np.ndarray) -> float:
    """Scaled max of primal infeasibility, stationarity, and complementarity.

    Complementarity uses the symmetric relative form |lam*s|/max(1,|lam|,|s|)
    so a tight active row with a large multiplier is not penalized for its
    round-off-level slack.
    """
    g_all, h_all = qp.folded()
    slack = g_all @ z - h_all
    primal = max(0.0, float(np.max(h_all - g_all @ z))) if h_all.size else 0.0
    grad = qp.h_diag * z + qp.c
    if lam.size:
        grad = grad - g_all.T @ lam
    scale = max(1.0, float(np.max(np.abs(qp.h_diag * z))), float(np.max(np.abs(qp.c))))
    stationarity = float(np.max(np.abs(grad))) / scale
    comp = 0.0
    if lam.size:
        denom = np.maximum(1.0, np.maximum(np.abs(lam), np.abs(slack)))
        comp = float(np.max(np.abs(lam * slack) / denom))
    return max(primal, stationarity, comp)


def solve(qp: QuadraticProgram, max_iter: int = MAX_ITERATIONS) -> QpSolution:
    """Solve the QP; deterministic for identical inputs."""
    g_all, h_all = qp.folded()
    z, lam, code, iters = _kernels.qp_solve_gi(
        qp.h_diag, qp.c, g_all, h_all, max_iter, 1e-10
    )
    status = STATUS_NAMES[code]
    residual = kkt_residual(qp, z, lam)
    objective = float(0.5 * z @ (qp.h_diag * z) + qp.c @ z)
    return QpSolution(
        z=z,
        status=status,
        kkt_residual=residual,
        multipliers=lam,
        iterations=int(iters),
        objective=objective,
    )
