"""Scenario-driven command-line harness.

Scenarios are flat INI files; ``richards-kit run`` executes one and
writes CSV artifacts plus a summary, ``validate`` only parses, and
``export-matrix`` dumps the Jacobian at a chosen (time step, Newton
iterate) in Matrix Market format.  Every CSV starts with a provenance
comment (config hash, package version) followed by a header row; runs
are deterministic for a fixed scenario.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .constitutive import VanGenuchtenParams, params_from_mapping
from .grid import BOUNDARY_KINDS, BoundarySpec, ProblemGrid
from .jacobian import assemble
from .newton import NewtonConfig, NewtonConvergenceError, run_simulation
from .precond import PRECOND_NAMES, PrecondConfig, make_preconditioner
from .residual import AverageKind
from .sparse_linalg import save_matrix_market
from .spectral import (
    as_equivalence_experiment,
    distribution_distance,
    eigenvalues_tridiagonal,
    matched_quantiles,
    sample_symbol_1d,
    zero_distribution_check,
)

EXPERIMENT_KINDS = (
    "simulate_1d",
    "simulate_3d",
    "spectrum_1d",
    "precond_sweep",
    "as_equivalence",
)

_ALLOWED_KEYS = {
    "experiment": {"kind", "out"},
    "grid": {"nx", "ny", "nz", "lx", "ly", "lz", "nt", "dt"},
    "boundary": {"bc_kind", "h_r", "alpha_bc", "patch", "top_p"},
    "constitutive": {
        "alpha", "beta", "gamma", "a", "s_s", "s_r", "k_s", "rho", "phi",
        "clamp_saturated",
    },
    "residual": {"average", "include_rho_phi"},
    "newton": {
        "eta", "ftol", "max_iterations", "reuse_period", "step_growth_threshold",
        "tiny_step_threshold", "gmres_restart", "gmres_maxit", "line_search",
        "full_newton",
    },
    "precond": {
        "precond", "blocks", "overlap", "theta", "coarse_stop", "smoothed",
        "build_on", "coarse_solver", "coarse_tol", "coarse_maxit",
    },
    "spectral": {"n_theta", "record"},
    "sweep": {"preconds", "grids"},
}


class ScenarioError(ValueError):
    """Configuration file problem, with section/key context."""


@dataclass(frozen=True)
class Scenario:
    """Fully validated experiment description."""

    kind: str
    grid: ProblemGrid
    boundary: BoundarySpec
    params: VanGenuchtenParams
    average: AverageKind
    newton: NewtonConfig
    precond: PrecondConfig
    include_rho_phi: bool
    out_dir: str | None
    n_theta: int
    record: tuple[tuple[int, int], ...]
    sweep_preconds: tuple[str, ...]
    sweep_grids: tuple[tuple[int, int, int, float, float, float], ...]
    config_hash: str
    name: str


def _bool(text: str, where: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"{where}: expected a boolean, got {text!r}")


def _get(cp, section, key, cast, default=None, required=False):
    where = f"[{section}] {key}"
    if not cp.has_option(section, key):
        if required:
            raise ScenarioError(f"missing required key {where}")
        return default
    raw = cp.get(section, key)
    try:
        if cast is bool:
            return _bool(raw, where)
        return cast(raw)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"{where}: cannot parse {raw!r} ({exc})") from exc


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario file shipped with the package."""
    ref = resources.files("richards_kit") / "scenarios" / name
    with resources.as_file(ref) as path:
        return Path(path)


def parse_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file.

    Raises:
        ScenarioError: On unreadable files, parse errors (with line
            numbers from the INI parser), unknown keys, missing keys, or
            out-of-range values.
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file not found: {path}")
    text = path.read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ScenarioError(f"parse error: {exc}") from exc

    for section in cp.sections():
        if section not in _ALLOWED_KEYS:
            raise ScenarioError(f"unknown section [{section}]")
        for key in cp.options(section):
            if key not in _ALLOWED_KEYS[section]:
                raise ScenarioError(f"unknown key {key!r} in section [{section}]")

    kind = _get(cp, "experiment", "kind", str, required=True)
    if kind not in EXPERIMENT_KINDS:
        raise ScenarioError(f"[experiment] kind: unknown experiment {kind!r}")
    out_dir = _get(cp, "experiment", "out", str)

    one_d = kind in ("simulate_1d", "spectrum_1d") or (
        kind == "as_equivalence" and not cp.has_option("grid", "nx")
    )
    nt = _get(cp, "grid", "nt", int, required=True)
    dt = _get(cp, "grid", "dt", float, required=True)
    nz = _get(cp, "grid", "nz", int, required=True)
    lz = _get(cp, "grid", "lz", float, required=True)
    try:
        if one_d:
            grid = ProblemGrid((nz,), (lz,), nt, dt)
        else:
            nx = _get(cp, "grid", "nx", int, required=True)
            ny = _get(cp, "grid", "ny", int, required=True)
            lx = _get(cp, "grid", "lx", float, required=True)
            ly = _get(cp, "grid", "ly", float, required=True)
            grid = ProblemGrid((nx, ny, nz), (lx, ly, lz), nt, dt)
    except ValueError as exc:
        raise ScenarioError(f"[grid]: {exc}") from exc

    try:
        fields = dict(cp.items("constitutive")) if cp.has_section("constitutive") else {}
        if "clamp_saturated" in fields:
            fields["clamp_saturated"] = _bool(
                fields["clamp_saturated"], "[constitutive] clamp_saturated"
            )
        params = params_from_mapping(fields)
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"[constitutive]: {exc}") from exc

    bc_kind = _get(cp, "boundary", "bc_kind", str, default="uniform_dirichlet")
    if bc_kind not in BOUNDARY_KINDS:
        raise ScenarioError(f"[boundary] bc_kind: unknown kind {bc_kind!r}")
    patch_raw = _get(cp, "boundary", "patch", str, default="0.25 0.75 0.25 0.75")
    try:
        patch = tuple(float(v) for v in patch_raw.split())
        if len(patch) != 4:
            raise ValueError("need exactly four fractions")
    except ValueError as exc:
        raise ScenarioError(f"[boundary] patch: {exc}") from exc
    try:
        boundary = BoundarySpec(
            kind=bc_kind,
            h_r=_get(cp, "boundary", "h_r", float, required=True),
            alpha_bc=_get(cp, "boundary", "alpha_bc", float, default=params.alpha),
            patch=patch,
            top_p=_get(cp, "boundary", "top_p", float),
        )
    except ValueError as exc:
        raise ScenarioError(f"[boundary]: {exc}") from exc

    average_name = _get(cp, "residual", "average", str, default="arithmetic")
    try:
        average = AverageKind(average_name)
    except ValueError as exc:
        raise ScenarioError(f"[residual] average: {exc}") from exc
    include_rho_phi = _get(cp, "residual", "include_rho_phi", bool, default=False)

    newton_kwargs = {}
    for key, cast in (
        ("eta", float), ("ftol", float), ("max_iterations", int),
        ("reuse_period", int), ("step_growth_threshold", float),
        ("tiny_step_threshold", float), ("gmres_restart", int),
        ("gmres_maxit", int), ("line_search", bool), ("full_newton", bool),
    ):
        value = _get(cp, "newton", key, cast)
        if value is not None:
            newton_kwargs[key] = value
    try:
        newton = NewtonConfig(**newton_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[newton]: {exc}") from exc

    precond_kwargs = {}
    name = _get(cp, "precond", "precond", str)
    if name is not None:
        if name not in PRECOND_NAMES:
            raise ScenarioError(f"[precond] precond: unknown preconditioner {name!r}")
        precond_kwargs["name"] = name
    for key, cast in (
        ("blocks", int), ("overlap", int), ("theta", float), ("coarse_stop", int),
        ("smoothed", bool), ("build_on", str), ("coarse_solver", str),
        ("coarse_tol", float), ("coarse_maxit", int),
    ):
        value = _get(cp, "precond", key, cast)
        if value is not None:
            precond_kwargs[key] = value
    try:
        precond = PrecondConfig(**precond_kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[precond]: {exc}") from exc

    n_theta = _get(cp, "spectral", "n_theta", int, default=64)
    record_raw = _get(cp, "spectral", "record", str, default="")
    record = []
    if record_raw:
        try:
            for pair in record_raw.replace(",", " ").split():
                step, it = pair.split(":")
                record.append((int(step), int(it)))
        except ValueError as exc:
            raise ScenarioError(f"[spectral] record: {exc}") from exc
    if kind == "spectrum_1d" and not record:
        raise ScenarioError("[spectral] record: spectrum_1d needs recorded pairs")

    sweep_preconds: tuple[str, ...] = ()
    sweep_grids: tuple = ()
    if kind == "precond_sweep":
        preconds_raw = _get(cp, "sweep", "preconds", str, required=True)
        sweep_preconds = tuple(p.strip() for p in preconds_raw.split(",") if p.strip())
        for p in sweep_preconds:
            if p not in PRECOND_NAMES:
                raise ScenarioError(f"[sweep] preconds: unknown preconditioner {p!r}")
        grids_raw = _get(cp, "sweep", "grids", str, required=True)
        grids = []
        try:
            for entry in grids_raw.split("|"):
                vals = entry.split()
                if len(vals) != 6:
                    raise ValueError("each grid entry is 'nx ny nz lx ly lz'")
                grids.append(
                    (int(vals[0]), int(vals[1]), int(vals[2]),
                     float(vals[3]), float(vals[4]), float(vals[5]))
                )
        except ValueError as exc:
            raise ScenarioError(f"[sweep] grids: {exc}") from exc
        sweep_grids = tuple(grids)

    return Scenario(
        kind=kind,
        grid=grid,
        boundary=boundary,
        params=params,
        average=average,
        newton=newton,
        precond=precond,
        include_rho_phi=include_rho_phi,
        out_dir=out_dir,
        n_theta=n_theta,
        record=tuple(record),
        sweep_preconds=sweep_preconds,
        sweep_grids=sweep_grids,
        config_hash=hashlib.sha256(text.encode()).hexdigest(),
        name=path.stem,
    )


# ----------------------------------------------------------------------
# Artifact emission
# ----------------------------------------------------------------------


def _provenance(scenario: Scenario) -> str:
    return (
        f"# provenance config_sha256={scenario.config_hash} "
        f"package=richards-kit/{__version__}"
    )


def _write_csv(path: Path, scenario: Scenario, header: list[str], rows) -> None:
    lines = [_provenance(scenario), ",".join(header)]
    for row in rows:
        lines.append(",".join(_format_value(row[h]) for h in header))
    path.write_text("\n".join(lines) + "\n")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _write_newton_artifacts(out: Path, scenario: Scenario, stats, elapsed: float) -> None:
    _write_csv(
        out / "newton_iterations.csv",
        scenario,
        ["time_step", "iteration", "rebuilt", "reason", "linear_iterations",
         "linear_residual", "lambda", "phi_norm"],
        stats.rows,
    )
    _write_csv(
        out / "time_steps.csv",
        scenario,
        ["time_step", "newton_iterations", "linear_iterations"],
        [
            {"time_step": s, "newton_iterations": nl, "linear_iterations": lin}
            for s, nl, lin in stats.per_step
        ],
    )
    summary = [
        f"scenario: {scenario.name}",
        f"experiment: {scenario.kind}",
        f"average: {scenario.average.value}",
        f"preconditioner: {scenario.precond.name} (build_on={scenario.precond.build_on})",
        f"converged: {stats.converged}",
        f"nonlinear_iterations: {stats.nonlinear_iterations}",
        f"jacobians_computed: {stats.jacobians_computed}",
        f"linear_iterations: {stats.linear_iterations}",
        f"avg_linear_per_newton: {stats.average_linear_per_newton():.3f}",
        f"max_linear_residual: {stats.max_linear_residual:.3e}",
        f"line_search_backtracks: {stats.backtracks}",
        f"wall_time_s: {elapsed:.3f}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")


def _run_simulation_experiment(scenario: Scenario, out: Path) -> int:
    precond = make_preconditioner(scenario.precond)
    start = time.perf_counter()
    trajectory, stats = run_simulation(
        scenario.grid, scenario.boundary, scenario.params, scenario.average,
        scenario.newton, precond, include_rho_phi=scenario.include_rho_phi,
    )
    elapsed = time.perf_counter() - start
    _write_newton_artifacts(out, scenario, stats, elapsed)
    if trajectory:
        final = trajectory[-1]
        _write_csv(
            out / "final_field.csv",
            scenario,
            ["index", "pressure_head"],
            [{"index": i, "pressure_head": v} for i, v in enumerate(final)],
        )
    return 0 if stats.converged else 1


def _run_spectrum_experiment(scenario: Scenario, out: Path) -> int:
    wanted = set(scenario.record)
    captured: dict[tuple[int, int], np.ndarray] = {}

    def recorder(step, iterate, field):
        if (step, iterate) in wanted:
            captured[(step, iterate)] = field

    precond = make_preconditioner(scenario.precond)
    start = time.perf_counter()
    _, stats = run_simulation(
        scenario.grid, scenario.boundary, scenario.params, scenario.average,
        scenario.newton, precond, include_rho_phi=scenario.include_rho_phi,
        recorder=recorder,
    )
    elapsed = time.perf_counter() - start
    _write_newton_artifacts(out, scenario, stats, elapsed)

    summary_rows = []
    hz2 = scenario.grid.hz**2
    for (step, iterate), field in sorted(captured.items()):
        jac = assemble(
            field, scenario.grid, scenario.boundary, scenario.params,
            scenario.average, include_rho_phi=scenario.include_rho_phi,
            stamp=(step, iterate),
        )
        eigs = eigenvalues_tridiagonal((hz2 * jac.matrix).tocsr())
        sym = sample_symbol_1d(
            field, scenario.grid, scenario.params, scenario.n_theta,
            rho_phi=scenario.params.rho_phi if scenario.include_rho_phi else 1.0,
        )
        evals, quantiles = matched_quantiles(eigs, sym)
        _write_csv(
            out / f"eigs_symbol_step{step}_iter{iterate}.csv",
            scenario,
            ["eigenvalue", "symbol_quantile"],
            [
                {"eigenvalue": a, "symbol_quantile": b}
                for a, b in zip(evals, quantiles)
            ],
        )
        report = zero_distribution_check(field, scenario.grid, scenario.params)
        summary_rows.append(
            {
                "time_step": step,
                "iteration": iterate,
                "distance": distribution_distance(eigs, sym),
                "max_imag": eigs.max_imag,
                "transport_norm": report.norm,
                "transport_bound": report.bound,
                "transport_pass": report.passed,
            }
        )
    _write_csv(
        out / "spectral_summary.csv",
        scenario,
        ["time_step", "iteration", "distance", "max_imag", "transport_norm",
         "transport_bound", "transport_pass"],
        summary_rows,
    )
    missing = wanted - set(captured)
    if missing:
        print(f"warning: never reached recorded pairs {sorted(missing)}", file=sys.stderr)
    return 0 if stats.converged else 1


def _run_sweep_experiment(scenario: Scenario, out: Path) -> int:
    rows = []
    status = 0
    for nx, ny, nz, lx, ly, lz in scenario.sweep_grids:
        grid = ProblemGrid((nx, ny, nz), (lx, ly, lz), scenario.grid.n_t, scenario.grid.dt)
        for name in scenario.sweep_preconds:
            precond = make_preconditioner(replace(scenario.precond, name=name))
            try:
                _, stats = run_simulation(
                    grid, scenario.boundary, scenario.params, scenario.average,
                    scenario.newton, precond,
                    include_rho_phi=scenario.include_rho_phi,
                )
                rows.append(
                    {
                        "nx": nx, "ny": ny, "nz": nz, "preconditioner": name,
                        "avg_linear_per_newton": stats.average_linear_per_newton(),
                        "nonlinear_iterations": stats.nonlinear_iterations,
                        "jacobians": stats.jacobians_computed,
                        "linear_iterations": stats.linear_iterations,
                        "converged": stats.converged,
                    }
                )
            except NewtonConvergenceError as exc:
                status = 1
                rows.append(
                    {
                        "nx": nx, "ny": ny, "nz": nz, "preconditioner": name,
                        "avg_linear_per_newton": float("nan"),
                        "nonlinear_iterations": exc.stats.nonlinear_iterations,
                        "jacobians": exc.stats.jacobians_computed,
                        "linear_iterations": exc.stats.linear_iterations,
                        "converged": False,
                    }
                )
    _write_csv(
        out / "precond_sweep.csv",
        scenario,
        ["nx", "ny", "nz", "preconditioner", "avg_linear_per_newton",
         "nonlinear_iterations", "jacobians", "linear_iterations", "converged"],
        rows,
    )
    return status


def _run_as_equivalence_experiment(scenario: Scenario, out: Path) -> int:
    # The unpreconditioned control is only affordable on 1D columns.
    rows = as_equivalence_experiment(
        scenario.grid, scenario.boundary, scenario.params, scenario.average,
        scenario.newton, scenario.precond,
        include_rho_phi=scenario.include_rho_phi,
        with_identity_control=scenario.grid.ndim == 1,
    )
    _write_csv(
        out / "as_equivalence.csv",
        scenario,
        ["variant", "avg_linear_per_newton", "nonlinear_iterations", "jacobians",
         "linear_iterations"],
        rows,
    )
    return 0


def run_scenario(scenario: Scenario, out_dir=None, threads: int = 1) -> int:
    """Execute a validated scenario; returns a process exit status.

    All kernels in this package are sequential and deterministic, so the
    ``threads`` knob is accepted for interface compatibility but does not
    change the computation.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    out = Path(out_dir) if out_dir else Path(scenario.out_dir or f"{scenario.name}_results")
    out.mkdir(parents=True, exist_ok=True)
    try:
        if scenario.kind in ("simulate_1d", "simulate_3d"):
            return _run_simulation_experiment(scenario, out)
        if scenario.kind == "spectrum_1d":
            return _run_spectrum_experiment(scenario, out)
        if scenario.kind == "precond_sweep":
            return _run_sweep_experiment(scenario, out)
        return _run_as_equivalence_experiment(scenario, out)
    except NewtonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


class _CaptureDone(Exception):
    pass


def _export_matrix(scenario: Scenario, step: int, iterate: int, out_file: Path) -> int:
    captured = {}

    def recorder(ts, it, field):
        if (ts, it) == (step, iterate):
            captured["field"] = field
            raise _CaptureDone

    precond = make_preconditioner(scenario.precond)
    try:
        run_simulation(
            scenario.grid, scenario.boundary, scenario.params, scenario.average,
            scenario.newton, precond, include_rho_phi=scenario.include_rho_phi,
            recorder=recorder,
        )
    except _CaptureDone:
        pass
    if "field" not in captured:
        print(
            f"error: simulation never reached time step {step}, iterate {iterate}",
            file=sys.stderr,
        )
        return 1
    jac = assemble(
        captured["field"], scenario.grid, scenario.boundary, scenario.params,
        scenario.average, include_rho_phi=scenario.include_rho_phi,
        stamp=(step, iterate),
    )
    save_matrix_market(out_file, jac.matrix)
    print(f"wrote {out_file}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="richards-kit",
        description="Scenario runner for the Richards-equation solver kit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario")
    p_run.add_argument("scenario", help="path to a scenario .cfg file")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--out", default=None, help="output directory")

    p_val = sub.add_parser("validate", help="parse and validate a scenario")
    p_val.add_argument("scenario")

    p_exp = sub.add_parser("export-matrix", help="dump a Jacobian in Matrix Market form")
    p_exp.add_argument("scenario")
    p_exp.add_argument("--step", type=int, required=True)
    p_exp.add_argument("--iter", type=int, required=True, dest="iterate")
    p_exp.add_argument("--out", default=None, help="output .mtx file")

    args = parser.parse_args(argv)
    try:
        scenario = parse_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"{args.scenario}: valid ({scenario.kind})")
        return 0
    if args.command == "run":
        return run_scenario(scenario, out_dir=args.out, threads=args.threads)
    out_file = Path(
        args.out or f"jacobian_step{args.step}_iter{args.iterate}.mtx"
    )
    return _export_matrix(scenario, args.step, args.iterate, out_file)


if __name__ == "__main__":
    sys.exit(main())
