"""Linearized state and adjoint solves, and the reduced tracking gradient.

Both solves share the operator -lap_h + diag(exp(y)) linearized at a state y.
The gradient of the smooth tracking term with respect to the masses is the
adjoint state evaluated at the source locations; because the operator is
symmetric and the same hat discretization is used for sources and point
evaluation, that value equals the discrete directional derivative exactly
(up to linear-solver tolerance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elliptic import SolverFailure, _cg_array
from .mesh import DomainGrid, GridField, PointSet, dirac_sum, point_eval_many
from .state import CRITICAL_MASS, ControlVector, ProblemSpec, solve_state

__all__ = [
    "GradientVector",
    "solve_linearized",
    "solve_adjoint",
    "point_values",
    "gradient_from_state",
    "smooth_gradient",
]


@dataclass(frozen=True, eq=False)
class GradientVector:
    """Partial derivatives of the tracking term with respect to each mass."""

    components: np.ndarray

    def __post_init__(self):
        g = np.array(self.components, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(g)):
            raise ValueError("gradient components must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "components", g)

    def __len__(self) -> int:
        return self.components.size

    def to_json(self) -> list[float]:
        return [float(g) for g in self.components]


def _linearized_matvec_setup(state: GridField) -> np.ndarray:
    return np.exp(state.as_array())


def solve_linearized(
    grid: DomainGrid,
    state: GridField,
    points: PointSet,
    direction: ControlVector,
    tol: float = 1e-10,
    max_iter: int | None = None,
    initial: GridField | None = None,
) -> GridField:
    """Sensitivity of the state to a mass perturbation along `direction`.

    Solves (-lap_h + diag(exp(y))) z = sum_i direction[i] * delta_h(x_i).
    """
    if state.grid != grid:
        raise ValueError("state lives on a different grid")
    if len(direction) != points.k:
        raise ValueError("direction length does not match the point count")
    rhs = dirac_sum(grid, points.points, direction.masses)
    c2 = _linearized_matvec_setup(state)
    x0 = initial.as_array() if initial is not None else None
    z2, iterations, rel, ok = _cg_array(
        c2, rhs.as_array().copy(), grid.h, tol,
        max_iter if max_iter is not None else 50 * grid.n, x0,
    )
    if not ok:
        raise SolverFailure(
            f"linearized solve stalled at relative residual {rel:.3e} "
            f"after {iterations} iterations"
        )
    return GridField(grid, z2)


def solve_adjoint(
    grid: DomainGrid,
    state: GridField,
    target: GridField,
    tol: float = 1e-10,
    max_iter: int | None = None,
    initial: GridField | None = None,
) -> GridField:
    """Adjoint state: (-lap_h + diag(exp(y))) phi = y - target on the interior."""
    if state.grid != grid or target.grid != grid:
        raise ValueError("state and target must live on the given grid")
    rhs2 = state.as_array() - target.as_array()
    c2 = _linearized_matvec_setup(state)
    x0 = initial.as_array() if initial is not None else None
    phi2, iterations, rel, ok = _cg_array(
        c2, rhs2.copy(), grid.h, tol,
        max_iter if max_iter is not None else 50 * grid.n, x0,
    )
    if not ok:
        raise SolverFailure(
            f"adjoint solve stalled at relative residual {rel:.3e} "
            f"after {iterations} iterations"
        )
    return GridField(grid, phi2)


def point_values(field: GridField, points: PointSet) -> np.ndarray:
    """Bilinear values of a field at the control locations."""
    return point_eval_many(field, points.points)


def gradient_from_state(
    problem: ProblemSpec,
    state: GridField,
    tol: float = 1e-10,
    initial: GridField | None = None,
) -> tuple[GradientVector, GridField]:
    """Tracking gradient at a precomputed state; also returns the adjoint field."""
    phi = solve_adjoint(problem.grid, state, problem.target, tol=tol, initial=initial)
    return GradientVector(point_values(phi, problem.points)), phi


def smooth_gradient(
    problem: ProblemSpec,
    control: ControlVector,
    state_tol: float = 1e-10,
    lin_tol: float = 1e-10,
) -> GradientVector:
    """Gradient of the tracking term at `control`.

    Requires max mass strictly below the critical value; the tracking term is
    not differentiable at the threshold.
    """
    if control.max_mass >= CRITICAL_MASS:
        raise ValueError(
            f"max mass {control.max_mass:.6g} must be strictly below "
            f"{CRITICAL_MASS:.6g} for a gradient"
        )
    y, report = solve_state(problem, control, tol=state_tol)
    if not report.converged:
        raise SolverFailure(
            f"state solve did not converge (residual {report.residual:.3e})"
        )
    grad, _ = gradient_from_state(problem, y, tol=lin_tol)
    return grad
