"""Numerical checks of the integrability estimates and the disk Green function.

The exponential moment bounds control integrals of exp(rate * |y|) for the
positive-mass linear problem -lap y = sum_i masses[i] delta(x_i); the scan
tracks L^{1+tau} norms of exp(y) for the semilinear state across mesh
refinement to expose the critical-mass transition; the closed-form Green
function of the unit disk is checked against its logarithmic upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .elliptic import SolverFailure, _cg_array
from .mesh import (
    DomainGrid,
    GridField,
    PointSet,
    angular_mean,
    build_grid,
    dirac_sum,
    integrate,
    integrate_ball,
    lp_norm,
    resample,
)
from .state import CRITICAL_MASS, ControlVector, ProblemSpec, solve_state

__all__ = [
    "EstimateReport",
    "ScanRecord",
    "moment_bound_whole",
    "moment_bound_ball",
    "check_moment_bound",
    "check_moment_bound_ball",
    "exp_norm_bound_no_forcing",
    "threshold_scan",
    "fit_log_slope",
    "green_unit_ball",
    "check_green_bound",
]


@dataclass(frozen=True)
class EstimateReport:
    name: str
    lhs: float
    rhs: float
    margin: float
    holds: bool
    slack: float
    config: dict

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "holds": bool(self.holds),
            "slack": float(self.slack),
            "config": self.config,
        }


@dataclass(frozen=True)
class ScanRecord:
    mass: float
    tau: float
    n: int
    norm: float
    converged: bool

    def to_json(self) -> dict:
        return {
            "mass": float(self.mass),
            "tau": float(self.tau),
            "n": int(self.n),
            "norm": float(self.norm),
            "converged": bool(self.converged),
        }


def _positive_masses(masses) -> np.ndarray:
    m = np.asarray(masses, dtype=float).reshape(-1)
    if m.size < 1 or not np.all(np.isfinite(m)) or np.any(m <= 0.0):
        raise ValueError("masses must be a nonempty vector of positive reals")
    return m


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < CRITICAL_MASS):
        raise ValueError("alpha must lie in (0, 4*pi)")
    return alpha


def moment_bound_whole(masses, alpha: float, radius: float, separation: float) -> float:
    """Whole-domain bound on the integral of exp((4*pi - alpha) |y| / max_mass).

    radius is half the domain diameter and separation a radius for which the
    disks around the sources are disjoint and contained in the domain.
    """
    m = _positive_masses(masses)
    alpha = _check_alpha(alpha)
    R, r0 = float(radius), float(separation)
    if not (R > 0.0 and r0 > 0.0 and 2.0 * R > r0):
        raise ValueError("need radius > 0, separation > 0, and 2*radius > separation")
    mmax = float(m.max())
    k = m.size
    base = 2.0 - alpha / (2.0 * math.pi)
    exponent = base * float(m.sum()) / mmax
    denoms = 2.0 - base * (m / mmax)
    # denoms >= alpha / (2*pi) > 0 for valid inputs
    bracket = (R * R - k * r0 * r0) + 2.0 * r0 * r0 * float(np.sum(1.0 / denoms))
    return math.pi * (2.0 * R / r0) ** exponent * bracket


def moment_bound_ball(
    masses, ball_index: int, alpha: float, radius: float, separation: float
) -> float:
    """Per-ball bound on the integral of exp((4*pi - alpha) |y| / m_j) over B(x_j, r0)."""
    m = _positive_masses(masses)
    alpha = _check_alpha(alpha)
    R, r0 = float(radius), float(separation)
    if not (R > 0.0 and r0 > 0.0 and 2.0 * R > r0):
        raise ValueError("need radius > 0, separation > 0, and 2*radius > separation")
    j = int(ball_index)
    if not (0 <= j < m.size):
        raise ValueError("ball_index out of range")
    base = 2.0 - alpha / (2.0 * math.pi)
    exponent = base * float(m.sum()) / float(m[j])
    return (4.0 * math.pi**2 * r0 * r0 / alpha) * (2.0 * R / r0) ** exponent


def _positive_mass_state(
    grid: DomainGrid, points: PointSet, masses: np.ndarray, lin_tol: float
) -> np.ndarray:
    """Solve the linear problem -lap y = sum masses delta on the grid."""
    rhs = dirac_sum(grid, points.points, masses)
    y2, iterations, rel, ok = _cg_array(
        np.zeros(grid.shape), rhs.as_array().copy(), grid.h, lin_tol, 80 * grid.n
    )
    if not ok:
        raise SolverFailure(
            f"linear solve stalled at relative residual {rel:.3e} "
            f"after {iterations} iterations"
        )
    return y2


def check_moment_bound(
    grid: DomainGrid,
    points: PointSet,
    masses,
    alpha: float,
    lin_tol: float = 1e-10,
    slack: float = 0.0,
) -> EstimateReport:
    """Evaluate the whole-domain moment bound for the discrete linear state."""
    m = _positive_masses(masses)
    alpha = _check_alpha(alpha)
    if m.size != points.k:
        raise ValueError("masses length does not match the point count")
    y2 = _positive_mass_state(grid, points, m, lin_tol)
    rate = (CRITICAL_MASS - alpha) / float(m.max())
    lhs = integrate(GridField(grid, np.exp(rate * np.abs(y2))))
    rhs = moment_bound_whole(m, alpha, grid.radius, points.r0)
    return EstimateReport(
        name="moment_bound_whole",
        lhs=lhs,
        rhs=rhs,
        margin=rhs - lhs,
        holds=lhs <= rhs * (1.0 + slack),
        slack=slack,
        config={
            "masses": [float(v) for v in m],
            "alpha": float(alpha),
            "n": int(grid.n),
            "radius": float(grid.radius),
            "separation": float(points.r0),
        },
    )


def check_moment_bound_ball(
    grid: DomainGrid,
    points: PointSet,
    masses,
    alpha: float,
    ball_index: int,
    lin_tol: float = 1e-10,
    slack: float = 0.0,
) -> EstimateReport:
    """Evaluate the per-ball moment bound over B(x_j, r0)."""
    m = _positive_masses(masses)
    alpha = _check_alpha(alpha)
    j = int(ball_index)
    if m.size != points.k:
        raise ValueError("masses length does not match the point count")
    if not (0 <= j < m.size):
        raise ValueError("ball_index out of range")
    y2 = _positive_mass_state(grid, points, m, lin_tol)
    rate = (CRITICAL_MASS - alpha) / float(m[j])
    field = GridField(grid, np.exp(rate * np.abs(y2)))
    lhs = integrate_ball(field, points.points[j], points.r0)
    rhs = moment_bound_ball(m, j, alpha, grid.radius, points.r0)
    return EstimateReport(
        name="moment_bound_ball",
        lhs=lhs,
        rhs=rhs,
        margin=rhs - lhs,
        holds=lhs <= rhs * (1.0 + slack),
        slack=slack,
        config={
            "masses": [float(v) for v in m],
            "alpha": float(alpha),
            "n": int(grid.n),
            "radius": float(grid.radius),
            "separation": float(points.r0),
            "ball_index": j,
        },
    )


def exp_norm_bound_no_forcing(
    tau: float, max_mass: float, num_points: int, radius: float, separation: float
) -> float:
    """L^{1+tau} bound on exp(y) for zero forcing and positive masses.

    Valid for 0 <= tau < 4*pi / max_mass - 1, i.e. (1 + tau) * max_mass < 4*pi.
    """
    tau = float(tau)
    M = float(max_mass)
    k = int(num_points)
    R, r0 = float(radius), float(separation)
    if not (0.0 < M < CRITICAL_MASS):
        raise ValueError("max_mass must lie in (0, 4*pi)")
    if not (0.0 <= tau < CRITICAL_MASS / M - 1.0):
        raise ValueError("tau must satisfy 0 <= tau < 4*pi/max_mass - 1")
    if k < 1 or R <= 0.0 or r0 <= 0.0:
        raise ValueError("need num_points >= 1 and positive radius/separation")
    p = 1.0 + tau
    bracket = R * R + k * p * M * r0 * r0 / (CRITICAL_MASS - p * M)
    return math.pi ** (1.0 / p) * (2.0 * R / r0) ** (2 * k) * bracket ** (1.0 / p)


def threshold_scan(
    problem: ProblemSpec,
    masses,
    tau: float,
    grid_sizes,
    state_tol: float = 1e-10,
) -> list[ScanRecord]:
    """L^{1+tau} norms of exp(y) across mesh refinement, one ladder per mass.

    The forcing must be identically zero.  Every control location carries the
    same mass.  Within a ladder each solve warm-starts from the previous
    grid's state resampled onto the new one.
    """
    tau = float(tau)
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    if float(np.abs(problem.forcing.values).max()) != 0.0:
        raise ValueError("threshold_scan requires zero forcing")
    mass_list = [float(v) for v in np.asarray(masses, dtype=float).reshape(-1)]
    sizes = [int(n) for n in grid_sizes]
    if not mass_list or not sizes:
        raise ValueError("need at least one mass and one grid size")
    bounds = (
        problem.grid.x_min,
        problem.grid.x_max,
        problem.grid.y_min,
        problem.grid.y_max,
    )
    records: list[ScanRecord] = []
    for mass in mass_list:
        prev_state: GridField | None = None
        for n in sizes:
            g = build_grid(bounds, n)
            sp = ProblemSpec(
                grid=g,
                points=problem.points,
                forcing=GridField(g, np.zeros(g.num_nodes)),
                target=GridField(g, np.zeros(g.num_nodes)),
                l1_weight=problem.l1_weight,
            )
            ctrl = ControlVector(np.full(problem.k, mass))
            init = resample(prev_state, g) if prev_state is not None else None
            y, rep = solve_state(sp, ctrl, tol=state_tol, initial=init)
            if not rep.converged and init is not None:
                # Cold restart with the full continuation ladder.
                y, rep = solve_state(sp, ctrl, tol=state_tol)
            norm = lp_norm(GridField(g, np.exp(y.values)), 1.0 + tau)
            records.append(ScanRecord(mass, tau, n, norm, rep.converged))
            prev_state = y
    return records


def fit_log_slope(
    field: GridField,
    center,
    r_min: float,
    r_max: float,
    n_radii: int = 12,
    n_angles: int = 64,
) -> float:
    """Least-squares slope of the angular mean against log(1/r).

    Radii are geometrically spaced in [r_min, r_max].  For a state with a
    single point mass at `center` the slope approximates mass / (2*pi).
    """
    r_min, r_max = float(r_min), float(r_max)
    if not (0.0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    radii = np.geomspace(r_min, r_max, int(n_radii))
    means = angular_mean(field, center, radii, n_angles=n_angles)
    logs = np.log(1.0 / radii)
    coeffs = np.polyfit(logs, means, 1)
    return float(coeffs[0])


def _green_many(x: np.ndarray, xp: np.ndarray) -> np.ndarray:
    """Vectorized Green function of the unit disk, stable near the diagonal.

    Uses |x/|x| - |x| x'|^2 = |x - x'|^2 + (1 - |x|^2)(1 - |x'|^2), which
    also covers x = 0 and avoids cancellation for nearby arguments.
    """
    diff = x - xp
    r2 = np.sum(diff * diff, axis=-1)
    if np.any(r2 <= 0.0):
        raise ValueError("arguments must be distinct points")
    sx = 1.0 - np.sum(x * x, axis=-1)
    sp = 1.0 - np.sum(xp * xp, axis=-1)
    if np.any(sx <= 0.0) or np.any(sp <= 0.0):
        raise ValueError("points must lie strictly inside the unit disk")
    return (np.log(r2 + sx * sp) - np.log(r2)) / (4.0 * math.pi)


def green_unit_ball(x, xp) -> float:
    """Dirichlet Green function of the unit disk at a pair of interior points."""
    a = np.asarray(x, dtype=float).reshape(2)
    b = np.asarray(xp, dtype=float).reshape(2)
    return float(_green_many(a, b))


def check_green_bound(
    samples: int = 10000,
    seed: int = 0,
    near_diagonal: int = 0,
    tol: float = 1e-12,
) -> EstimateReport:
    """Sample pairs in the disk and test 0 <= G <= log(2/|x - x'|) / (2*pi).

    near_diagonal adds pairs at distance 1e-8 to stress cancellation.  The
    report's lhs is the worst violation over all pairs and rhs the allowed
    slack.
    """
    samples = int(samples)
    near_diagonal = int(near_diagonal)
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(int(seed))

    def draw(count: int, rmax: float) -> np.ndarray:
        r = rmax * np.sqrt(rng.uniform(size=count))
        t = 2.0 * math.pi * rng.uniform(size=count)
        return np.column_stack((r * np.cos(t), r * np.sin(t)))

    x = draw(samples, 1.0 - 1e-9)
    xp = draw(samples, 1.0 - 1e-9)
    keep = np.sum((x - xp) ** 2, axis=1) > 0.0
    x, xp = x[keep], xp[keep]
    if near_diagonal > 0:
        base = draw(near_diagonal, 0.999)
        t = 2.0 * math.pi * rng.uniform(size=near_diagonal)
        offset = 1e-8 * np.column_stack((np.cos(t), np.sin(t)))
        x = np.vstack((x, base))
        xp = np.vstack((xp, base + offset))

    G = _green_many(x, xp)
    dist = np.sqrt(np.sum((x - xp) ** 2, axis=1))
    bound = np.log(2.0 / dist) / (2.0 * math.pi)
    worst = float(np.maximum(-G, G - bound).max())
    violation = max(worst, 0.0)
    return EstimateReport(
        name="green_bound",
        lhs=violation,
        rhs=float(tol),
        margin=float(tol) - violation,
        holds=violation <= tol,
        slack=float(tol),
        config={
            "samples": samples,
            "seed": int(seed),
            "near_diagonal": near_diagonal,
        },
    )
