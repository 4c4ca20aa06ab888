"""Command-line interface: problem files in, solver and report artifacts out.

Commands: state, optimize, kkt, scan, estimates, green-check.  Every run
writes manifest.json with the resolved configuration into the output
directory; failures write error.json.  Exit codes: 0 success, 2 bad
configuration, 3 solver failure, 4 estimate violation.  Outputs are
deterministic for a fixed configuration and seed: floats are written in
shortest round-trip form and row order never depends on the worker count.
"""

from __future__ import annotations

import argparse
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    check_green_bound,
    check_moment_bound,
    check_moment_bound_ball,
    threshold_scan,
)
from .elliptic import SolverFailure
from .mesh import (
    DomainGrid,
    GridField,
    build_grid,
    build_point_set,
    constant_field,
    field_from_function,
    read_field_csv,
    write_field_csv,
)
from .optimizer import PathConfig, regularization_path, verify_kkt
from .state import ControlVector, ProblemSpec, solve_state

__all__ = ["ConfigError", "FieldSpec", "RunConfig", "parse_problem", "run", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ESTIMATE = 4


class ConfigError(ValueError):
    """A problem file or command option failed validation."""


@dataclass(frozen=True)
class FieldSpec:
    """Declarative grid-field description from a problem file."""

    kind: str
    value: float = 0.0
    terms: tuple = ()
    path: str = ""

    @classmethod
    def parse(cls, obj, where: str) -> "FieldSpec":
        if not isinstance(obj, dict):
            raise ConfigError(f"{where}: expected an object with a 'kind' key")
        kind = obj.get("kind")
        if kind == "constant":
            value = obj.get("value")
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{where}.value: expected a number")
            return cls(kind="constant", value=float(value))
        if kind == "gaussian_sum":
            raw = obj.get("terms")
            if not isinstance(raw, list) or not raw:
                raise ConfigError(f"{where}.terms: expected a nonempty list")
            terms = []
            for i, t in enumerate(raw):
                label = f"{where}.terms[{i}]"
                if not isinstance(t, dict):
                    raise ConfigError(f"{label}: expected an object")
                center = t.get("center")
                if (
                    not isinstance(center, list)
                    or len(center) != 2
                    or not all(isinstance(v, (int, float)) for v in center)
                ):
                    raise ConfigError(f"{label}.center: expected [x, y]")
                amplitude = t.get("amplitude")
                if not isinstance(amplitude, (int, float)):
                    raise ConfigError(f"{label}.amplitude: expected a number")
                width = t.get("width")
                if not isinstance(width, (int, float)) or float(width) <= 0.0:
                    raise ConfigError(f"{label}.width: expected a positive number")
                terms.append(
                    (float(center[0]), float(center[1]), float(amplitude), float(width))
                )
            return cls(kind="gaussian_sum", terms=tuple(terms))
        if kind == "file":
            path = obj.get("path")
            if not isinstance(path, str) or not path:
                raise ConfigError(f"{where}.path: expected a file path")
            return cls(kind="file", path=path)
        raise ConfigError(
            f"{where}.kind: expected 'constant', 'gaussian_sum', or 'file', got {kind!r}"
        )

    def materialize(self, grid: DomainGrid, base_dir: Path, where: str) -> GridField:
        if self.kind == "constant":
            return constant_field(grid, self.value)
        if self.kind == "gaussian_sum":
            def fn(X, Y):
                total = np.zeros_like(X)
                for cx, cy, amp, width in self.terms:
                    total += amp * np.exp(
                        -((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width * width)
                    )
                return total

            return field_from_function(grid, fn)
        csv_path = Path(self.path)
        if not csv_path.is_absolute():
            csv_path = base_dir / csv_path
        if not csv_path.exists():
            raise ConfigError(f"{where}.path: no such file {csv_path}")
        try:
            return read_field_csv(csv_path, grid)
        except ValueError as err:
            raise ConfigError(f"{where}: {err}") from None


def parse_problem(path, grid_n: int | None = None) -> ProblemSpec:
    """Read a problem JSON file; grid_n overrides the file's grid size."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such problem file: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")

    domain = doc.get("domain")
    if not isinstance(domain, dict) or "bounds" not in domain:
        raise ConfigError("domain.bounds: missing")
    bounds = domain["bounds"]
    if (
        not isinstance(bounds, list)
        or len(bounds) != 4
        or not all(isinstance(v, (int, float)) for v in bounds)
    ):
        raise ConfigError("domain.bounds: expected [x_min, x_max, y_min, y_max]")

    grid_doc = doc.get("grid")
    if not isinstance(grid_doc, dict) or "n" not in grid_doc:
        raise ConfigError("grid.n: missing")
    n = grid_n if grid_n is not None else grid_doc["n"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigError("grid.n: expected an integer")

    try:
        grid = build_grid(bounds, n)
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from None

    raw_points = doc.get("points")
    if not isinstance(raw_points, list) or not raw_points:
        raise ConfigError("points: expected a nonempty list of [x, y] pairs")
    for i, p in enumerate(raw_points):
        if (
            not isinstance(p, list)
            or len(p) != 2
            or not all(isinstance(v, (int, float)) for v in p)
        ):
            raise ConfigError(f"points[{i}]: expected [x, y]")
    try:
        points = build_point_set(grid, raw_points)
    except ValueError as err:
        raise ConfigError(f"points: {err}") from None

    kappa = doc.get("kappa")
    if not isinstance(kappa, (int, float)) or isinstance(kappa, bool) or kappa <= 0.0:
        raise ConfigError("kappa: expected a positive number")

    base_dir = path.parent
    forcing = FieldSpec.parse(doc.get("f0"), "f0").materialize(grid, base_dir, "f0")
    target = FieldSpec.parse(doc.get("y_d"), "y_d").materialize(grid, base_dir, "y_d")
    try:
        return ProblemSpec(
            grid=grid, points=points, forcing=forcing, target=target, l1_weight=float(kappa)
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


@dataclass(frozen=True)
class RunConfig:
    command: str
    out_dir: str
    config_path: str | None = None
    grid_n: int | None = None
    tol: float = 1e-10
    seed: int = 0
    workers: int = 1
    options: dict = field(default_factory=dict)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return repr(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_masses(text: str, k: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise ConfigError(f"masses: could not parse {text!r} as comma-separated floats")
    if vals.size == 0:
        raise ConfigError("masses: empty list")
    if k is not None and vals.size != k:
        raise ConfigError(f"masses: expected {k} values, got {vals.size}")
    return vals


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"{what}: could not parse {text!r} as comma-separated ints")
    if not vals:
        raise ConfigError(f"{what}: empty list")
    return vals


def _cmd_state(cfg: RunConfig, out: Path) -> int:
    problem = parse_problem(cfg.config_path, cfg.grid_n)
    text = cfg.options.get("masses")
    masses = (
        _parse_masses(text, problem.k) if text else np.zeros(problem.k)
    )
    control = ControlVector(masses)
    y, report = solve_state(
        problem, control, tol=cfg.tol, max_newton=int(cfg.options.get("max_newton", 50))
    )
    write_field_csv(y, out / "state.csv")
    _write_json(out / "newton_report.json", report.to_json())
    return EXIT_OK if report.converged else EXIT_SOLVER


def _cmd_optimize(cfg: RunConfig, out: Path) -> int:
    problem = parse_problem(cfg.config_path, cfg.grid_n)
    opts = cfg.options
    path_cfg = PathConfig(
        eps0=float(opts.get("eps0", 0.5)),
        factor=float(opts.get("factor", 0.5)),
        stages=int(opts.get("stages", 4)),
        inner_tol=float(opts.get("inner_tol", 1e-6)),
        max_inner=int(opts.get("max_inner", 400)),
        step0=float(opts.get("step0", 10.0)),
        lower_magnitude=float(opts.get("lower_bound", 10.0)),
    )
    control, stages = regularization_path(problem, path_cfg, state_tol=cfg.tol)
    rows = [
        (r.stage, r.iteration, r.objective, r.step, r.delta_inf)
        for st in stages
        for r in st.records
    ]
    _write_csv(out / "iterates.csv", ["stage", "iteration", "objective", "step", "delta_inf"], rows)
    _write_json(
        out / "control.json",
        {
            "masses": [float(v) for v in control.masses],
            "objective": float(stages[-1].objective),
            "stages": [
                {
                    "eps": float(st.eps),
                    "masses": [float(v) for v in st.control.masses],
                    "objective": float(st.objective),
                    "iterations": int(st.iterations),
                }
                for st in stages
            ],
        },
    )
    report = verify_kkt(
        problem,
        control,
        tol_class=float(opts.get("tol_class", 1e-3)),
        tol_res=float(opts.get("tol_res", 1e-2)),
        state_tol=cfg.tol,
    )
    _write_json(out / "kkt_report.json", report.to_json())
    return EXIT_OK


def _cmd_kkt(cfg: RunConfig, out: Path) -> int:
    problem = parse_problem(cfg.config_path, cfg.grid_n)
    text = cfg.options.get("masses")
    if not text:
        raise ConfigError("kkt requires --masses")
    control = ControlVector(_parse_masses(text, problem.k))
    report = verify_kkt(
        problem,
        control,
        tol_class=float(cfg.options.get("tol_class", 1e-3)),
        tol_res=float(cfg.options.get("tol_res", 1e-2)),
        state_tol=cfg.tol,
    )
    _write_json(out / "kkt_report.json", report.to_json())
    return EXIT_OK


def _cmd_scan(cfg: RunConfig, out: Path) -> int:
    problem = parse_problem(cfg.config_path, cfg.grid_n)
    text = cfg.options.get("masses")
    if not text:
        raise ConfigError("scan requires --masses")
    masses = [float(v) for v in _parse_masses(text)]
    grids = _parse_int_list(cfg.options.get("grids", ""), "grids")
    tau = float(cfg.options.get("tau", 0.25))
    try:
        if cfg.workers > 1 and len(masses) > 1:
            def one(mass: float):
                return threshold_scan(problem, [mass], tau, grids, state_tol=cfg.tol)

            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                chunks = list(pool.map(one, masses))
            records = [r for chunk in chunks for r in chunk]
        else:
            records = threshold_scan(problem, masses, tau, grids, state_tol=cfg.tol)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    rows = [(r.mass, r.tau, r.n, r.norm, r.converged) for r in records]
    _write_csv(out / "scan.csv", ["mass", "tau", "n", "norm", "converged"], rows)
    if not all(r.converged for r in records):
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_estimates(cfg: RunConfig, out: Path) -> int:
    problem = parse_problem(cfg.config_path, cfg.grid_n)
    text = cfg.options.get("omega")
    if not text:
        raise ConfigError("estimates requires --omega")
    masses = _parse_masses(text, problem.k)
    if np.any(masses <= 0.0):
        raise ConfigError("omega: all masses must be positive")
    alphas_text = cfg.options.get("alpha")
    if not alphas_text:
        raise ConfigError("estimates requires --alpha")
    try:
        alphas = [float(v) for v in alphas_text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"alpha: could not parse {alphas_text!r}")
    reports = []
    try:
        for alpha in alphas:
            reports.append(
                check_moment_bound(problem.grid, problem.points, masses, alpha, lin_tol=cfg.tol)
            )
            for j in range(problem.k):
                reports.append(
                    check_moment_bound_ball(
                        problem.grid, problem.points, masses, alpha, j, lin_tol=cfg.tol
                    )
                )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    _write_json(out / "estimates.json", [r.to_json() for r in reports])
    if not all(r.holds for r in reports):
        return EXIT_ESTIMATE
    return EXIT_OK


def _cmd_green_check(cfg: RunConfig, out: Path) -> int:
    report = check_green_bound(
        samples=int(cfg.options.get("samples", 10000)),
        seed=cfg.seed,
        near_diagonal=int(cfg.options.get("near_diagonal", 100)),
    )
    _write_json(out / "green_check.json", report.to_json())
    return EXIT_OK if report.holds else EXIT_ESTIMATE


_COMMANDS = {
    "state": (_cmd_state, True),
    "optimize": (_cmd_optimize, True),
    "kkt": (_cmd_kkt, True),
    "scan": (_cmd_scan, True),
    "estimates": (_cmd_estimates, True),
    "green-check": (_cmd_green_check, False),
}


def run(cfg: RunConfig) -> int:
    """Execute one command; always writes manifest.json into the output directory."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": cfg.command,
        "config_path": cfg.config_path,
        "out_dir": str(cfg.out_dir),
        "grid_n": cfg.grid_n,
        "tol": cfg.tol,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "options": {k: v for k, v in sorted(cfg.options.items())},
    }
    _write_json(out / "manifest.json", manifest)

    handler_entry = _COMMANDS.get(cfg.command)
    if handler_entry is None:
        _write_json(out / "error.json", {"error": "ConfigError", "message": f"unknown command {cfg.command!r}"})
        return EXIT_CONFIG
    handler, needs_config = handler_entry
    if needs_config and not cfg.config_path:
        _write_json(
            out / "error.json",
            {"error": "ConfigError", "message": f"{cfg.command} requires --config"},
        )
        return EXIT_CONFIG
    try:
        return handler(cfg, out)
    except ConfigError as err:
        _write_json(out / "error.json", {"error": "ConfigError", "message": str(err)})
        return EXIT_CONFIG
    except ValueError as err:
        _write_json(out / "error.json", {"error": "ValueError", "message": str(err)})
        return EXIT_CONFIG
    except SolverFailure as err:
        _write_json(out / "error.json", {"error": "SolverFailure", "message": str(err)})
        return EXIT_SOLVER


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="problem JSON file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--grid-n", type=int, default=None, help="override grid size")
    common.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--workers", type=int, default=1, help="parallel workers")

    parser = argparse.ArgumentParser(
        prog="diracopt",
        description="Point-source control of a semilinear elliptic equation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state", parents=[common], help="solve the state equation")
    p.add_argument("--masses", help="comma-separated point masses (default zeros)")
    p.add_argument("--max-newton", type=int, default=50)

    p = sub.add_parser("optimize", parents=[common], help="run the regularization path")
    p.add_argument("--eps0", type=float, default=0.5)
    p.add_argument("--factor", type=float, default=0.5)
    p.add_argument("--stages", type=int, default=4)
    p.add_argument("--inner-tol", type=float, default=1e-6)
    p.add_argument("--max-inner", type=int, default=400)
    p.add_argument("--step0", type=float, default=10.0)
    p.add_argument("--lower-bound", type=float, default=10.0)
    p.add_argument("--tol-class", type=float, default=1e-3)
    p.add_argument("--tol-res", type=float, default=1e-2)

    p = sub.add_parser("kkt", parents=[common], help="check first-order conditions")
    p.add_argument("--masses", required=True)
    p.add_argument("--tol-class", type=float, default=1e-3)
    p.add_argument("--tol-res", type=float, default=1e-2)

    p = sub.add_parser("scan", parents=[common], help="norm scan across refinement")
    p.add_argument("--masses", required=True)
    p.add_argument("--grids", required=True, help="comma-separated grid sizes")
    p.add_argument("--tau", type=float, default=0.25)

    p = sub.add_parser("estimates", parents=[common], help="moment bound checks")
    p.add_argument("--omega", required=True, help="positive masses")
    p.add_argument("--alpha", required=True, help="comma-separated alpha values")

    p = sub.add_parser("green-check", parents=[common], help="Green function bound check")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--near-diagonal", type=int, default=100)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    options = {
        k: v
        for k, v in vars(args).items()
        if k not in {"command", "config", "out", "grid_n", "tol", "seed", "workers"}
        and v is not None
    }
    cfg = RunConfig(
        command=args.command,
        out_dir=args.out,
        config_path=args.config,
        grid_n=args.grid_n,
        tol=args.tol,
        seed=args.seed,
        workers=args.workers,
        options=options,
    )
    return run(cfg)
