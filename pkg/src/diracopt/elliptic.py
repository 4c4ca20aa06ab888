"""Five-point discrete operator -lap + diag(c) with Dirichlet rows, CG and a dense oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import DomainGrid, GridField

__all__ = [
    "ShiftedLaplacian",
    "LinearSolveReport",
    "SolverFailure",
    "cg_solve",
    "dense_solve",
    "DENSE_SOLVE_MAX_N",
]

# Dense assembly is an oracle for small grids only.
DENSE_SOLVE_MAX_N = 33


class SolverFailure(RuntimeError):
    """A linear or nonlinear solve did not reach the requested tolerance."""


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    converged: bool

    def to_json(self) -> dict:
        return {
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "converged": bool(self.converged),
        }


@dataclass(frozen=True, eq=False)
class ShiftedLaplacian:
    """Symmetric positive definite operator -lap_h + diag(c), c >= 0 on the interior.

    Off-diagonal entries are nonpositive and the matrix is diagonally dominant,
    so solutions obey a discrete maximum principle.
    """

    grid: DomainGrid
    c: GridField

    def __post_init__(self):
        if self.c.grid != self.grid:
            raise ValueError("coefficient field lives on a different grid")
        interior = self.c.as_array()[1:-1, 1:-1]
        if interior.size and float(interior.min()) < 0.0:
            raise ValueError("shift coefficient must be nonnegative on the interior")

    def apply(self, v: GridField) -> GridField:
        """Operator action; boundary rows of the result are zero."""
        if v.grid != self.grid:
            raise ValueError("field lives on a different grid")
        out = _apply_array(v.as_array(), self.c.as_array(), self.grid.h)
        return GridField(self.grid, out)


def _apply_array(v2: np.ndarray, c2: np.ndarray, h: float) -> np.ndarray:
    inv_h2 = 1.0 / (h * h)
    out = np.zeros_like(v2)
    out[1:-1, 1:-1] = (
        4.0 * v2[1:-1, 1:-1]
        - v2[:-2, 1:-1]
        - v2[2:, 1:-1]
        - v2[1:-1, :-2]
        - v2[1:-1, 2:]
    ) * inv_h2 + c2[1:-1, 1:-1] * v2[1:-1, 1:-1]
    return out


def _zero_boundary(a: np.ndarray) -> np.ndarray:
    a[0, :] = 0.0
    a[-1, :] = 0.0
    a[:, 0] = 0.0
    a[:, -1] = 0.0
    return a


def _cg_array(
    c2: np.ndarray,
    b2: np.ndarray,
    h: float,
    tol: float,
    max_iter: int,
    x0: np.ndarray | None = None,
    use_jacobi: bool = False,
) -> tuple[np.ndarray, int, float, bool]:
    """Conjugate gradients on the interior unknowns, arrays shaped (n, n).

    Stops on the recurrence residual, then confirms against the true residual
    before reporting convergence (relative 2-norm against the rhs).
    """
    b = _zero_boundary(b2.copy())
    bnorm = float(np.sqrt(np.vdot(b, b).real))
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0, True
    target = tol * bnorm

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = _zero_boundary(np.array(x0, dtype=float, copy=True))
        r = b - _apply_array(x, c2, h)

    if use_jacobi:
        d = 4.0 / (h * h) + c2
        inv_d = np.zeros_like(d)
        inv_d[1:-1, 1:-1] = 1.0 / d[1:-1, 1:-1]
        precond = lambda rr: rr * inv_d
    else:
        precond = lambda rr: rr

    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    iterations = 0

    while iterations < max_iter:
        rnorm = float(np.sqrt(np.vdot(r, r).real))
        if rnorm <= target:
            true_r = b - _apply_array(x, c2, h)
            true_norm = float(np.sqrt(np.vdot(true_r, true_r).real))
            if true_norm <= target:
                return x, iterations, true_norm / bnorm, True
            # Recurrence drifted; restart from the true residual.
            r = true_r
            z = precond(r)
            p = z.copy()
            rz = float(np.vdot(r, z).real)
            continue
        Ap = _apply_array(p, c2, h)
        pAp = float(np.vdot(p, Ap).real)
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = precond(r)
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
        iterations += 1

    true_r = b - _apply_array(x, c2, h)
    rel = float(np.sqrt(np.vdot(true_r, true_r).real)) / bnorm
    return x, iterations, rel, rel <= tol


def cg_solve(
    op: ShiftedLaplacian,
    rhs: GridField,
    tol: float = 1e-10,
    max_iter: int | None = None,
    initial: GridField | None = None,
    use_jacobi: bool = False,
) -> tuple[GridField, LinearSolveReport]:
    """Solve op u = rhs on the interior with homogeneous Dirichlet data.

    Boundary values of rhs are ignored.  Plain CG by default; use_jacobi
    switches on diagonal preconditioning.
    """
    if rhs.grid != op.grid:
        raise ValueError("rhs lives on a different grid")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 50 * op.grid.n
    x0 = initial.as_array() if initial is not None else None
    x, iterations, rel, converged = _cg_array(
        op.c.as_array(), rhs.as_array().copy(), op.grid.h, tol, int(max_iter), x0, use_jacobi
    )
    return GridField(op.grid, x), LinearSolveReport(iterations, rel, converged)


def dense_solve(op: ShiftedLaplacian, rhs: GridField) -> GridField:
    """Direct dense factorization oracle for small grids (n <= 33)."""
    n = op.grid.n
    if n > DENSE_SOLVE_MAX_N:
        raise ValueError(f"dense_solve is limited to n <= {DENSE_SOLVE_MAX_N}, got n={n}")
    if rhs.grid != op.grid:
        raise ValueError("rhs lives on a different grid")
    h = op.grid.h
    inv_h2 = 1.0 / (h * h)
    m = n - 2
    size = m * m
    c_int = op.c.as_array()[1:-1, 1:-1].reshape(-1)
    A = np.zeros((size, size))
    idx = np.arange(size)
    A[idx, idx] = 4.0 * inv_h2 + c_int
    right = idx[(idx % m) != m - 1]
    A[right, right + 1] = -inv_h2
    A[right + 1, right] = -inv_h2
    up = idx[idx < size - m]
    A[up, up + m] = -inv_h2
    A[up + m, up] = -inv_h2

    b = rhs.as_array()[1:-1, 1:-1].reshape(-1)
    u_int = np.linalg.solve(A, b)

    u2 = np.zeros((n, n))
    u2[1:-1, 1:-1] = u_int.reshape(m, m)
    bnorm = float(np.linalg.norm(b))
    if bnorm > 0.0:
        res = float(np.linalg.norm(b - A @ u_int)) / bnorm
        if res > 1e-12:
            raise SolverFailure(f"dense solve residual {res:.3e} above 1e-12")
    return GridField(op.grid, u2)
