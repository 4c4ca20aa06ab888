"""Damped Newton solver for the exponential semilinear state equation.

The discrete problem on the interior nodes is

    -lap_h y + (exp(y) - 1) = forcing + sum_i masses[i] * delta_h(x_i),

with homogeneous Dirichlet boundary data and the bilinear-hat discretization
delta_h of a unit point mass.  Solutions exist in the continuum only while
every mass stays at or below the critical value 4*pi; larger masses are
solved anyway (the discrete system is always well posed) with a warning and
a flag in the report.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .elliptic import _apply_array, _cg_array
from .mesh import (
    DomainGrid,
    GridField,
    PointSet,
    _check_interior_margin,
    dirac_sum,
)

__all__ = [
    "CRITICAL_MASS",
    "CONTINUATION_TRIGGER",
    "CONTINUATION_STEP",
    "ControlVector",
    "ProblemSpec",
    "NewtonReport",
    "continuation_schedule",
    "solve_state",
    "state_residual",
]

# Largest point mass for which the continuum state equation is solvable.
CRITICAL_MASS = 4.0 * math.pi

# Continuation kicks in above this max mass, in increments of at most this step.
CONTINUATION_TRIGGER = 2.0 * math.pi
CONTINUATION_STEP = math.pi


@dataclass(frozen=True, eq=False)
class ControlVector:
    """Point-source masses, one per control location."""

    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, copy=True).reshape(-1)
        if m.size < 1:
            raise ValueError("control vector needs at least one mass")
        if not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    def __len__(self) -> int:
        return self.masses.size

    @property
    def max_mass(self) -> float:
        """Largest signed mass; the solvability threshold compares this to 4*pi."""
        return float(self.masses.max())

    @property
    def l1(self) -> float:
        return float(np.abs(self.masses).sum())

    def positive_part(self) -> "ControlVector":
        return ControlVector(np.maximum(self.masses, 0.0))

    def negative_part(self) -> "ControlVector":
        return ControlVector(np.maximum(-self.masses, 0.0))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Grid, control locations, forcing, tracking target, and l1 weight."""

    grid: DomainGrid
    points: PointSet
    forcing: GridField
    target: GridField
    l1_weight: float

    def __post_init__(self):
        if self.forcing.grid != self.grid or self.target.grid != self.grid:
            raise ValueError("forcing and target must live on the problem grid")
        if not (float(self.l1_weight) > 0.0):
            raise ValueError("l1_weight must be positive")
        for i, (x, y) in enumerate(self.points.points):
            _check_interior_margin(self.grid, (x, y), f"points[{i}]")
        bdist = min(self.grid.boundary_distance(x, y) for x, y in self.points.points)
        if self.points.r0 > bdist * (1.0 + 1e-12):
            raise ValueError("separation radius r0 reaches outside the domain")
        object.__setattr__(self, "l1_weight", float(self.l1_weight))

    @property
    def k(self) -> int:
        return self.points.k


@dataclass(frozen=True)
class NewtonReport:
    converged: bool
    iterations: int
    stages: int
    residual: float
    above_threshold: bool
    history: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "stages": int(self.stages),
            "residual": float(self.residual),
            "above_threshold": bool(self.above_threshold),
            "history": [float(r) for r in self.history],
        }


def continuation_schedule(
    control: ControlVector,
    trigger: float = CONTINUATION_TRIGGER,
    step: float = CONTINUATION_STEP,
) -> np.ndarray:
    """Scaling factors for mass continuation, ending at 1.

    A single full-strength solve when max_mass <= trigger; otherwise
    ceil(max_mass / step) equal steps, so the max mass never grows by more
    than step between consecutive solves.
    """
    top = control.max_mass
    if top <= trigger:
        return np.array([1.0])
    count = int(math.ceil(top / step - 1e-12))
    return np.arange(1, count + 1, dtype=float) / count


def _defect(y2: np.ndarray, rhs2: np.ndarray, h: float) -> np.ndarray:
    """Interior defect of the discrete equation; boundary entries zero."""
    with np.errstate(over="ignore", invalid="ignore"):
        d = _apply_array(y2, np.zeros_like(y2), h)
        d[1:-1, 1:-1] += np.exp(y2[1:-1, 1:-1]) - 1.0 - rhs2[1:-1, 1:-1]
    return d


def _defect_norm(y2: np.ndarray, rhs2: np.ndarray, h: float) -> float:
    d = _defect(y2, rhs2, h)
    m = np.abs(d).max()
    return float(m) if np.isfinite(m) else math.inf


def solve_state(
    problem: ProblemSpec,
    control: ControlVector,
    tol: float = 1e-10,
    max_newton: int = 50,
    initial: GridField | None = None,
    lin_tol: float = 1e-10,
    trigger: float = CONTINUATION_TRIGGER,
    step: float = CONTINUATION_STEP,
) -> tuple[GridField, NewtonReport]:
    """Solve the state equation by damped Newton with mass continuation.

    Convergence is declared when the max-norm defect drops below
    tol * (1 + max |rhs|).  Damping halves the Newton step until the defect
    norm decreases (at most 30 halvings).  With an initial guess the
    continuation ladder is skipped and a single full-strength solve runs
    from that guess.

    Returns the last iterate and a report; non-convergence is reported, not
    raised.
    """
    if len(control) != problem.k:
        raise ValueError(
            f"control has {len(control)} masses for {problem.k} points"
        )
    grid = problem.grid
    h = grid.h
    above = control.max_mass > CRITICAL_MASS
    if above:
        warnings.warn(
            f"max mass {control.max_mass:.6g} exceeds the critical value "
            f"{CRITICAL_MASS:.6g}; the continuum problem has no solution, "
            "solving the discrete system anyway",
            RuntimeWarning,
            stacklevel=2,
        )

    forcing2 = problem.forcing.as_array()
    dirac2 = dirac_sum(grid, problem.points.points, control.masses).as_array()

    if initial is not None:
        if initial.grid != grid:
            raise ValueError("initial guess lives on a different grid")
        y2 = initial.as_array().copy()
        y2[0, :] = y2[-1, :] = 0.0
        y2[:, 0] = y2[:, -1] = 0.0
        schedule = np.array([1.0])
    else:
        y2 = np.zeros(grid.shape)
        schedule = continuation_schedule(control, trigger, step)

    history: list[float] = []
    total_iterations = 0
    converged = True

    for factor in schedule:
        rhs2 = forcing2 + factor * dirac2
        denom = 1.0 + float(np.abs(rhs2[1:-1, 1:-1]).max())
        stage_ok = False
        for _ in range(max_newton + 1):
            defect = _defect(y2, rhs2, h)
            norm = float(np.abs(defect).max())
            rel = norm / denom
            history.append(rel)
            if rel <= tol:
                stage_ok = True
                break
            c2 = np.exp(np.clip(y2, None, 700.0))
            s2, _, _, lin_ok = _cg_array(c2, -defect, h, lin_tol, 50 * grid.n)
            if not lin_ok:
                break
            scale = 1.0
            accepted = False
            for _ in range(31):
                trial = y2 + scale * s2
                if _defect_norm(trial, rhs2, h) < norm:
                    accepted = True
                    break
                scale *= 0.5
            if not accepted:
                break
            y2 = y2 + scale * s2
            total_iterations += 1
        if not stage_ok:
            converged = False
            break

    final_rhs2 = forcing2 + dirac2
    final_denom = 1.0 + float(np.abs(final_rhs2[1:-1, 1:-1]).max())
    final_rel = _defect_norm(y2, final_rhs2, h) / final_denom
    report = NewtonReport(
        converged=converged and final_rel <= tol,
        iterations=total_iterations,
        stages=int(schedule.size),
        residual=final_rel,
        above_threshold=above,
        history=tuple(history),
    )
    return GridField(grid, y2), report


def state_residual(problem: ProblemSpec, control: ControlVector, state: GridField) -> float:
    """Relative max-norm defect of a candidate state, scaled by 1 + max |rhs|."""
    if state.grid != problem.grid:
        raise ValueError("state lives on a different grid")
    if len(control) != problem.k:
        raise ValueError(f"control has {len(control)} masses for {problem.k} points")
    rhs2 = (
        problem.forcing.as_array()
        + dirac_sum(problem.grid, problem.points.points, control.masses).as_array()
    )
    denom = 1.0 + float(np.abs(rhs2[1:-1, 1:-1]).max())
    return _defect_norm(state.as_array().copy(), rhs2, problem.grid.h) / denom
