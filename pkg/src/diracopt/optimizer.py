"""Proximal gradient solver for the l1-penalized tracking problem.

The reduced objective is J(m) = 0.5 * ||y(m) - target||_L2^2 + l1_weight * ||m||_1
with y(m) the state for masses m.  Iterates move by a proximal gradient step
projected onto a box whose upper bounds stay strictly below the critical mass;
a regularization path shrinks the gap eps between cap and critical value
geometrically, warm-starting each stage.  verify_kkt classifies each mass and
reports first-order residuals built from -phi(x_i) / l1_weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import gradient_from_state, point_values, solve_adjoint
from .elliptic import SolverFailure
from .mesh import GridField, integrate
from .state import CRITICAL_MASS, ControlVector, ProblemSpec, solve_state

__all__ = [
    "BoxBounds",
    "PathConfig",
    "IterateRecord",
    "StageRecord",
    "KktEntry",
    "KktReport",
    "prox_l1",
    "project_box",
    "build_default_box",
    "tracking_value",
    "objective",
    "solve_regularized",
    "regularization_path",
    "classify_kkt",
    "verify_kkt",
]

# Accepted steps may raise the objective by at most this much (solver noise).
_DESCENT_SLACK = 1e-12
_MAX_HALVINGS = 30


@dataclass(frozen=True, eq=False)
class BoxBounds:
    """Componentwise bounds lower < upper with every upper bound below 4*pi."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float, copy=True).reshape(-1)
        hi = np.array(self.upper, dtype=float, copy=True).reshape(-1)
        if lo.size != hi.size or lo.size < 1:
            raise ValueError("lower and upper must have the same nonzero length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper componentwise")
        if float(hi.max()) >= CRITICAL_MASS:
            raise ValueError("upper bounds must stay strictly below the critical mass")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def k(self) -> int:
        return self.lower.size


def build_default_box(
    eps: float,
    k: int,
    lower_magnitude: float = 10.0,
    user_caps: ControlVector | None = None,
) -> BoxBounds:
    """Box [-lower_magnitude, min(user_cap, 4*pi - eps)] per component."""
    eps = float(eps)
    if not (0.0 < eps < CRITICAL_MASS):
        raise ValueError("eps must lie in (0, 4*pi)")
    if not (float(lower_magnitude) > 0.0):
        raise ValueError("lower_magnitude must be positive")
    cap = CRITICAL_MASS - eps
    hi = np.full(k, cap)
    if user_caps is not None:
        if len(user_caps) != k:
            raise ValueError("user_caps length does not match k")
        hi = np.minimum(hi, user_caps.masses)
    lo = np.full(k, -float(lower_magnitude))
    return BoxBounds(lo, hi)


def prox_l1(values: np.ndarray, threshold: float) -> np.ndarray:
    """Soft threshold: the proximal map of threshold * ||.||_1."""
    if threshold < 0.0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(values, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def project_box(control: ControlVector, box: BoxBounds) -> ControlVector:
    if len(control) != box.k:
        raise ValueError("control and box sizes differ")
    return ControlVector(np.clip(control.masses, box.lower, box.upper))


def tracking_value(problem: ProblemSpec, state: GridField) -> float:
    """0.5 * ||y - target||_L2^2 under the nodal quadrature."""
    diff = state.values - problem.target.values
    return 0.5 * integrate(GridField(problem.grid, diff * diff))


def objective(problem: ProblemSpec, control: ControlVector, state_tol: float = 1e-10) -> float:
    """Reduced objective; requires max mass <= critical and a converged solve."""
    if control.max_mass > CRITICAL_MASS:
        raise ValueError(
            f"max mass {control.max_mass:.6g} exceeds the critical value; "
            "the objective is undefined there"
        )
    y, report = solve_state(problem, control, tol=state_tol)
    if not report.converged:
        raise SolverFailure(
            f"state solve did not converge (residual {report.residual:.3e})"
        )
    return tracking_value(problem, y) + problem.l1_weight * control.l1


@dataclass(frozen=True)
class IterateRecord:
    stage: int
    iteration: int
    objective: float
    step: float
    delta_inf: float


@dataclass(frozen=True)
class StageRecord:
    eps: float
    control: ControlVector
    objective: float
    iterations: int
    records: tuple[IterateRecord, ...]


def _masses_in_box(masses: np.ndarray, box: BoxBounds) -> bool:
    slack = 1e-12 * (1.0 + np.abs(masses).max())
    return bool(
        np.all(masses >= box.lower - slack) and np.all(masses <= box.upper + slack)
    )


def solve_regularized(
    problem: ProblemSpec,
    box: BoxBounds,
    init: ControlVector,
    step0: float = 10.0,
    inner_tol: float = 1e-6,
    max_inner: int = 400,
    state_tol: float = 1e-10,
    lin_tol: float = 1e-10,
    stage: int = 0,
) -> tuple[ControlVector, list[IterateRecord]]:
    """Projected proximal gradient descent inside a fixed box.

    Each iteration takes m+ = project(prox_l1(m - s*grad, s*l1_weight)) and
    halves s until the objective decreases (at most 30 halvings); it stops
    when the iterate moves less than inner_tol in max norm, the iteration cap
    is hit, or no decreasing step exists.  State and adjoint solves are
    warm-started from the previous iterate.  On a failed solve a
    SolverFailure is raised with the partial log attached as exc.records.
    """
    if box.k != problem.k or len(init) != problem.k:
        raise ValueError("box, init, and problem must agree on the number of masses")
    if not _masses_in_box(init.masses, box):
        raise ValueError("initial control must lie inside the box")
    masses = np.clip(init.masses, box.lower, box.upper)
    kappa = problem.l1_weight
    records: list[IterateRecord] = []

    def solve_at(m: np.ndarray, warm: GridField | None) -> tuple[float, GridField]:
        yf, rep = solve_state(problem, ControlVector(m), tol=state_tol, initial=warm)
        if not rep.converged:
            err = SolverFailure(
                f"state solve failed at stage {stage} (residual {rep.residual:.3e})"
            )
            err.records = list(records)
            raise err
        return tracking_value(problem, yf) + kappa * float(np.abs(m).sum()), yf

    try:
        current_J, y = solve_at(masses, None)
    except SolverFailure:
        raise
    records.append(IterateRecord(stage, 0, current_J, 0.0, 0.0))

    phi: GridField | None = None
    s = float(step0)
    for it in range(1, max_inner + 1):
        try:
            grad, phi = gradient_from_state(problem, y, tol=lin_tol, initial=phi)
        except SolverFailure as err:
            err.records = list(records)
            raise
        g = grad.components
        accepted = False
        s_try = s
        for _ in range(_MAX_HALVINGS + 1):
            candidate = np.clip(prox_l1(masses - s_try * g, s_try * kappa), box.lower, box.upper)
            trial_J, trial_y = solve_at(candidate, y)
            if trial_J <= current_J + _DESCENT_SLACK:
                accepted = True
                break
            s_try *= 0.5
        if not accepted:
            break
        delta = float(np.abs(candidate - masses).max())
        masses, current_J, y = candidate, trial_J, trial_y
        records.append(IterateRecord(stage, it, current_J, s_try, delta))
        s = min(s_try * 2.0, float(step0) * 16.0)
        if delta < inner_tol:
            break

    return ControlVector(masses), records


@dataclass(frozen=True)
class PathConfig:
    """Geometric cap schedule eps_j = eps0 * factor**j plus inner-solver knobs."""

    eps0: float = 0.5
    factor: float = 0.5
    stages: int = 4
    inner_tol: float = 1e-6
    max_inner: int = 400
    step0: float = 10.0
    lower_magnitude: float = 10.0
    user_caps: ControlVector | None = None

    def __post_init__(self):
        if not (0.0 < self.eps0 < CRITICAL_MASS):
            raise ValueError("eps0 must lie in (0, 4*pi)")
        if not (0.0 < self.factor < 1.0):
            raise ValueError("factor must lie in (0, 1)")
        if self.stages < 1:
            raise ValueError("need at least one stage")
        if self.inner_tol <= 0.0 or self.max_inner < 1 or self.step0 <= 0.0:
            raise ValueError("inner_tol, max_inner, and step0 must be positive")
        if self.lower_magnitude <= 0.0:
            raise ValueError("lower_magnitude must be positive")


def regularization_path(
    problem: ProblemSpec,
    config: PathConfig = PathConfig(),
    init: ControlVector | None = None,
    state_tol: float = 1e-10,
    lin_tol: float = 1e-10,
) -> tuple[ControlVector, list[StageRecord]]:
    """Run the staged box solves with warm starts; caps only ever widen.

    Stage j uses the box from build_default_box(eps0 * factor**j), so a
    previous iterate stays feasible in the next stage.  Returns the final
    control and one record per stage.
    """
    k = problem.k
    control = init if init is not None else ControlVector(np.zeros(k))
    stage_records: list[StageRecord] = []
    for j in range(config.stages):
        eps = config.eps0 * config.factor**j
        box = build_default_box(
            eps, k, lower_magnitude=config.lower_magnitude, user_caps=config.user_caps
        )
        try:
            control, records = solve_regularized(
                problem,
                box,
                control,
                step0=config.step0,
                inner_tol=config.inner_tol,
                max_inner=config.max_inner,
                state_tol=state_tol,
                lin_tol=lin_tol,
                stage=j,
            )
        except SolverFailure as err:
            err.stage = j
            raise
        final_J = records[-1].objective if records else math.nan
        stage_records.append(
            StageRecord(eps, control, final_J, max(len(records) - 1, 0), tuple(records))
        )
    return control, stage_records


@dataclass(frozen=True)
class KktEntry:
    index: int
    mass: float
    label: str
    ratio: float
    residual: float | None

    def to_json(self) -> dict:
        return {
            "index": int(self.index),
            "mass": float(self.mass),
            "class": self.label,
            "ratio": float(self.ratio),
            "residual": None if self.residual is None else float(self.residual),
        }


@dataclass(frozen=True)
class KktReport:
    entries: tuple[KktEntry, ...]
    all_satisfied: bool
    max_residual: float
    capped_indices: tuple[int, ...]
    l1_weight: float
    tol_class: float
    tol_res: float

    def to_json(self) -> dict:
        return {
            "entries": [e.to_json() for e in self.entries],
            "all_satisfied": bool(self.all_satisfied),
            "max_residual": float(self.max_residual),
            "capped_indices": [int(i) for i in self.capped_indices],
            "l1_weight": float(self.l1_weight),
            "tol_class": float(self.tol_class),
            "tol_res": float(self.tol_res),
        }


def classify_kkt(
    masses: np.ndarray,
    adjoint_values: np.ndarray,
    l1_weight: float,
    tol_class: float = 1e-3,
    tol_res: float = 1e-2,
    box: BoxBounds | None = None,
) -> KktReport:
    """First-order residuals from masses and adjoint point values.

    ratio = -phi(x_i) / l1_weight must equal the sign of a nonzero interior
    mass, lie in [-1, 1] at a zero mass, and satisfy one-sided bounds at
    active box bounds.  Masses at the critical value carry no condition and
    are reported unchecked.
    """
    m = np.asarray(masses, dtype=float).reshape(-1)
    vals = np.asarray(adjoint_values, dtype=float).reshape(-1)
    if m.size != vals.size:
        raise ValueError("masses and adjoint values must have equal lengths")
    if box is not None and box.k != m.size:
        raise ValueError("box size does not match")
    kappa = float(l1_weight)
    if kappa <= 0.0:
        raise ValueError("l1_weight must be positive")

    entries: list[KktEntry] = []
    capped: list[int] = []
    checked: list[float] = []
    for i in range(m.size):
        ratio = -vals[i] / kappa
        mass = float(m[i])
        if abs(mass - CRITICAL_MASS) <= tol_class:
            entries.append(KktEntry(i, mass, "capped_4pi", ratio, None))
            capped.append(i)
            continue
        at_upper = box is not None and abs(mass - box.upper[i]) <= tol_class
        at_lower = box is not None and abs(mass - box.lower[i]) <= tol_class
        if at_upper or at_lower:
            # Active bound: the equality relaxes to a one-sided condition on
            # ratio against sign(mass), with sign(0) read as the slack bound.
            if abs(mass) <= tol_class:
                needed = -1.0 if at_upper else 1.0
            else:
                needed = math.copysign(1.0, mass)
            res = max(0.0, needed - ratio) if at_upper else max(0.0, ratio - needed)
            entries.append(KktEntry(i, mass, "at_box_bound", ratio, res))
            checked.append(res)
        elif abs(mass) <= tol_class:
            res = max(abs(ratio) - 1.0, 0.0)
            entries.append(KktEntry(i, mass, "zero", ratio, res))
            checked.append(res)
        elif mass > 0.0:
            res = abs(ratio - 1.0)
            entries.append(KktEntry(i, mass, "interior_positive", ratio, res))
            checked.append(res)
        else:
            res = abs(ratio + 1.0)
            entries.append(KktEntry(i, mass, "interior_negative", ratio, res))
            checked.append(res)

    max_res = max(checked) if checked else 0.0
    return KktReport(
        entries=tuple(entries),
        all_satisfied=bool(all(r <= tol_res for r in checked)),
        max_residual=float(max_res),
        capped_indices=tuple(capped),
        l1_weight=kappa,
        tol_class=float(tol_class),
        tol_res=float(tol_res),
    )


def verify_kkt(
    problem: ProblemSpec,
    control: ControlVector,
    tol_class: float = 1e-3,
    tol_res: float = 1e-2,
    box: BoxBounds | None = None,
    state_tol: float = 1e-10,
    lin_tol: float = 1e-10,
) -> KktReport:
    """Solve state and adjoint at `control` and classify first-order conditions."""
    if control.max_mass > CRITICAL_MASS + tol_class:
        raise ValueError("max mass exceeds the critical value; nothing to verify")
    y, report = solve_state(problem, control, tol=state_tol)
    if not report.converged:
        raise SolverFailure(
            f"state solve did not converge (residual {report.residual:.3e})"
        )
    phi = solve_adjoint(problem.grid, y, problem.target, tol=lin_tol)
    vals = point_values(phi, problem.points)
    return classify_kkt(
        control.masses, vals, problem.l1_weight, tol_class, tol_res, box
    )
