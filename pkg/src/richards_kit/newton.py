"""Modified inexact Newton driver with Jacobian reuse.

Each backward-Euler step solves Phi(p) = 0 by Newton corrections
J d = -Phi computed with restarted, right-preconditioned GMRES at a
fixed forcing tolerance.  The Jacobian (and the preconditioner built
from it) is reused across iterations and across time steps; a fresh one
is assembled only when the reuse conditions fire.  Steps are globalized
by a backtracking line search with sufficient-decrease and
minimum-decrease tests on f = 0.5 ||D_F Phi||^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BoundarySpec, ProblemGrid, boundary_array, initial_field
from .jacobian import JacobianMatrix, assemble, diffusion_preconditioner_matrix
from .precond import Preconditioner
from .residual import AverageKind, _as_kind, residual_1d, residual_3d
from .sparse_linalg import gmres

_EPS = float(np.finfo(float).eps)


class NewtonConvergenceError(RuntimeError):
    """Nonlinear solve failed; carries the statistics gathered so far."""

    def __init__(self, message: str, stats: "NewtonStats"):
        super().__init__(message)
        self.stats = stats


@dataclass(eq=False)
class NewtonConfig:
    """Inexact-Newton tuning knobs.

    Args:
        eta: Linear forcing tolerance, ||J d + Phi|| < eta ||Phi||.
        max_iterations: Nonlinear iteration budget per time step.
        reuse_period: Rebuild the Jacobian every this many iterations.
        step_growth_threshold: Rebuild when ||lambda d||_{D_u,inf} grew
            past this value on the previous iteration.
        tiny_step_threshold: Rebuild when the last scaled step fell below
            this value (default eps^(2/3)).
        ftol: Nonlinear stop on ||D_F Phi||_inf (default eps^(1/3)).
        d_u: Diagonal scaling for step norms (None = identity).
        d_f: Diagonal scaling for residual norms (None = identity).
        c1: Sufficient-decrease constant of the line search.
        c2: Minimum-decrease constant of the line search.
        backtrack_factor: Step-length reduction factor.
        min_lambda: Line-search underflow bound.
        gmres_restart: Arnoldi cycle length.
        gmres_maxit: Total linear iteration cap.
        line_search: Disable to always take full steps.
        full_newton: Rebuild the Jacobian every iteration and take full
            steps (used by the spectral recording experiments).
    """

    eta: float = 1e-7
    max_iterations: int = 50
    reuse_period: int = 10
    step_growth_threshold: float = 1.5
    tiny_step_threshold: float = _EPS ** (2.0 / 3.0)
    ftol: float = _EPS ** (1.0 / 3.0)
    d_u: np.ndarray | None = None
    d_f: np.ndarray | None = None
    c1: float = 1e-4
    c2: float = 0.9
    backtrack_factor: float = 0.5
    min_lambda: float = 1e-12
    gmres_restart: int = 10
    gmres_maxit: int = 200
    line_search: bool = True
    full_newton: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if min(self.step_growth_threshold, self.tiny_step_threshold, self.ftol) <= 0:
            raise ValueError("thresholds must be positive")
        for d in (self.d_u, self.d_f):
            if d is not None and np.any(np.asarray(d) <= 0):
                raise ValueError("scaling diagonals must be positive")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class NewtonStats:
    """Iteration ledger for one or more time steps."""

    nonlinear_iterations: int = 0
    jacobians_computed: int = 0
    linear_iterations: int = 0
    backtracks: int = 0
    rebuild_reasons: list[str] = field(default_factory=list)
    per_newton_linear: list[int] = field(default_factory=list)
    per_step: list[tuple[int, int, int]] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    max_linear_residual: float = 0.0
    converged: bool = True

    def merge(self, other: "NewtonStats") -> None:
        self.nonlinear_iterations += other.nonlinear_iterations
        self.jacobians_computed += other.jacobians_computed
        self.linear_iterations += other.linear_iterations
        self.backtracks += other.backtracks
        self.rebuild_reasons.extend(other.rebuild_reasons)
        self.per_newton_linear.extend(other.per_newton_linear)
        self.per_step.extend(other.per_step)
        self.rows.extend(other.rows)
        self.max_linear_residual = max(self.max_linear_residual, other.max_linear_residual)
        self.converged = self.converged and other.converged

    def average_linear_per_newton(self) -> float:
        """Mean over time steps of (linear iterations / Newton steps)."""
        ratios = [lin / nl for _, nl, lin in self.per_step if nl > 0]
        return float(np.mean(ratios)) if ratios else 0.0


def scaled_inf_norm(v: np.ndarray, d: np.ndarray | None) -> float:
    """||D v||_inf for a diagonal scaling D (identity when None)."""
    if d is None:
        return float(np.max(np.abs(v))) if v.size else 0.0
    return float(np.max(np.abs(d * v)))


def rebuild_reasons(
    r: int,
    lambda_d_prev: float | None,
    lambda_d_curr: float | None,
    linear_failed: bool,
    linesearch_failed: bool,
    cfg: NewtonConfig,
) -> list[str]:
    """Names of the reuse conditions that fire for this iteration."""
    reasons = []
    if r % cfg.reuse_period == 0:
        reasons.append("period")
    if lambda_d_prev is not None and lambda_d_prev > cfg.step_growth_threshold:
        reasons.append("step_growth")
    if lambda_d_curr is not None and lambda_d_curr < cfg.tiny_step_threshold:
        reasons.append("tiny_step")
    if linear_failed:
        reasons.append("linear_failure")
    if linesearch_failed:
        reasons.append("line_search_failure")
    return reasons


def should_rebuild_jacobian(
    r: int,
    lambda_d_prev: float | None,
    lambda_d_curr: float | None,
    linear_failed: bool,
    linesearch_failed: bool,
    cfg: NewtonConfig,
) -> bool:
    """True iff a new Jacobian must be assembled before iteration r.

    ``r`` counts nonlinear iterations since the last build (r = 0 at
    initialization), and the step norms are those of the two previous
    accepted iterations.
    """
    return bool(
        rebuild_reasons(r, lambda_d_prev, lambda_d_curr, linear_failed, linesearch_failed, cfg)
    )


@dataclass
class LineSearchResult:
    lam: float
    accepted: bool
    backtracks: int
    slope: float
    sufficient_decrease: bool
    minimum_decrease: bool


def armijo_goldstein(
    phi_eval,
    p: np.ndarray,
    d: np.ndarray,
    cfg: NewtonConfig,
    jac_matvec,
    phi0: np.ndarray | None = None,
) -> LineSearchResult:
    """Backtracking line search on f = 0.5 ||D_F Phi||^2.

    The slope f'(0) is (D_F Phi)^T (D_F J d) with the current, possibly
    stale, Jacobian.  Backtracks by halving until the sufficient-decrease
    test holds; the minimum-decrease (lower Goldstein) bound is evaluated
    at the accepted step.  On the dyadic step grid a too-good decrease at
    the first Armijo-satisfying step cannot be improved by shrinking, so
    such steps are accepted with the bound flagged false.

    Returns:
        LineSearchResult; ``accepted`` is False when the direction is
        non-descending or the step length underflows ``min_lambda``.
    """
    df = cfg.d_f
    if phi0 is None:
        phi0 = phi_eval(p)
    scaled0 = phi0 if df is None else df * phi0
    f0 = 0.5 * float(scaled0 @ scaled0)
    jd = jac_matvec(d)
    scaled_jd = jd if df is None else df * jd
    slope = float(scaled0 @ scaled_jd)
    if slope >= 0.0:
        return LineSearchResult(0.0, False, 0, slope, False, False)

    lam = 1.0
    backtracks = 0
    while lam >= cfg.min_lambda:
        phi_t = phi_eval(p + lam * d)
        scaled_t = phi_t if df is None else df * phi_t
        ft = 0.5 * float(scaled_t @ scaled_t)
        if ft <= f0 + cfg.c1 * lam * slope:
            goldstein = ft >= f0 + cfg.c2 * lam * slope
            return LineSearchResult(lam, True, backtracks, slope, True, goldstein)
        lam *= cfg.backtrack_factor
        backtracks += 1
    return LineSearchResult(lam, False, backtracks, slope, False, False)


@dataclass
class NewtonState:
    """Jacobian/preconditioner reuse state carried across time steps."""

    jac: JacobianMatrix | None = None
    iters_since_build: int = 0
    lambda_d_prev: float | None = None
    lambda_d_curr: float | None = None
    linear_failed: bool = False
    linesearch_failed: bool = False


def _make_residual(grid, spec, params, kind, include_rho_phi, f, boundary):
    if grid.ndim == 1:
        def phi(p, p_old):
            return residual_1d(
                p, p_old, grid, spec, params, kind,
                include_rho_phi=include_rho_phi, f=f, boundary=boundary,
            )
    else:
        def phi(p, p_old):
            return residual_3d(
                p, p_old, grid, spec, params, kind, f=f, boundary=boundary,
            )
    return phi


def solve_timestep(
    p_old: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params,
    kind: AverageKind | str,
    cfg: NewtonConfig,
    precond: Preconditioner,
    include_rho_phi: bool = False,
    f: np.ndarray | None = None,
    state: NewtonState | None = None,
    time_step: int = 1,
    recorder=None,
    boundary: np.ndarray | None = None,
) -> tuple[np.ndarray, NewtonStats]:
    """Advance one backward-Euler step with the modified Newton method.

    Args:
        p_old: Converged field of the previous step.
        state: Reuse state; pass the same object across steps to carry
            the Jacobian and preconditioner forward.
        recorder: Optional callback ``(time_step, iterate_index, p)``
            invoked at the start of every Newton iteration.

    Raises:
        NewtonConvergenceError: On iteration-budget exhaustion or on a
            linear-solver / line-search failure with a fresh Jacobian.
    """
    kind = _as_kind(kind)
    if state is None:
        state = NewtonState()
    if boundary is None:
        boundary = boundary_array(grid, spec)
    phi_of = _make_residual(grid, spec, params, kind, include_rho_phi, f, boundary)
    stats = NewtonStats()

    p = p_old.astype(float).copy()
    it = 0
    attempts = 0
    step_linear = 0
    while True:
        phi = phi_of(p, p_old)
        phi_norm_inf = scaled_inf_norm(phi, cfg.d_f)
        if phi_norm_inf <= cfg.ftol:
            break
        if it >= cfg.max_iterations or attempts >= 2 * cfg.max_iterations:
            stats.converged = False
            raise NewtonConvergenceError(
                f"no convergence in {it} Newton iterations at time step {time_step} "
                f"(||D_F Phi||_inf = {phi_norm_inf:.3e})",
                stats,
            )
        attempts += 1
        if recorder is not None:
            recorder(time_step, it, p.copy())

        if state.jac is None:
            rebuilt, reasons = True, ["initial"]
        elif cfg.full_newton:
            rebuilt, reasons = True, ["full_newton"]
        else:
            reasons = rebuild_reasons(
                state.iters_since_build, state.lambda_d_prev, state.lambda_d_curr,
                state.linear_failed, state.linesearch_failed, cfg,
            )
            rebuilt = bool(reasons)
        if rebuilt:
            state.jac = assemble(
                p, grid, spec, params, kind,
                include_rho_phi=include_rho_phi, stamp=(time_step, it),
                boundary=boundary,
            )
            if precond.build_on == "diffusion":
                base = diffusion_preconditioner_matrix(
                    p, grid, spec, params, kind,
                    include_rho_phi=include_rho_phi, boundary=boundary,
                )
            else:
                base = state.jac.matrix
            precond.setup(base)
            state.iters_since_build = 0
            state.linear_failed = False
            state.linesearch_failed = False
            stats.jacobians_computed += 1
            stats.rebuild_reasons.append("+".join(reasons))

        jmat = state.jac.matrix
        d, report = gmres(
            jmat, -phi, m_apply=precond.m_apply,
            restart=cfg.gmres_restart, tol=cfg.eta, maxit=cfg.gmres_maxit,
        )
        stats.linear_iterations += report.iterations
        step_linear += report.iterations
        if not report.converged:
            if state.iters_since_build == 0:
                stats.converged = False
                raise NewtonConvergenceError(
                    f"linear solver stalled with a fresh Jacobian at time step "
                    f"{time_step} (relative residual {report.relative_residual:.3e})",
                    stats,
                )
            state.linear_failed = True
            continue

        true_lin = float(
            np.linalg.norm(jmat @ d + phi) / np.linalg.norm(phi)
        )
        stats.max_linear_residual = max(stats.max_linear_residual, true_lin)

        if cfg.line_search and not cfg.full_newton:
            ls = armijo_goldstein(
                lambda q: phi_of(q, p_old), p, d, cfg,
                lambda v: jmat @ v, phi0=phi,
            )
            stats.backtracks += ls.backtracks
            if not ls.accepted:
                if state.iters_since_build == 0:
                    stats.converged = False
                    raise NewtonConvergenceError(
                        f"line search failed with a fresh Jacobian at time step "
                        f"{time_step}", stats,
                    )
                state.linesearch_failed = True
                continue
            lam = ls.lam
        else:
            lam = 1.0

        p = p + lam * d
        state.lambda_d_prev = state.lambda_d_curr
        state.lambda_d_curr = scaled_inf_norm(lam * d, cfg.d_u)
        state.iters_since_build += 1
        it += 1
        stats.nonlinear_iterations += 1
        stats.per_newton_linear.append(report.iterations)
        stats.rows.append(
            {
                "time_step": time_step,
                "iteration": it - 1,
                "rebuilt": rebuilt,
                "reason": "+".join(reasons) if rebuilt else "",
                "linear_iterations": report.iterations,
                "linear_residual": true_lin,
                "lambda": lam,
                "phi_norm": phi_norm_inf,
            }
        )

    stats.per_step.append((time_step, it, step_linear))
    return p, stats


def run_simulation(
    grid: ProblemGrid,
    spec: BoundarySpec,
    params,
    kind: AverageKind | str,
    cfg: NewtonConfig,
    precond: Preconditioner,
    n_steps: int | None = None,
    include_rho_phi: bool = False,
    f: np.ndarray | None = None,
    recorder=None,
) -> tuple[list[np.ndarray], NewtonStats]:
    """Backward-Euler time stepping from the constant initial field.

    Returns the trajectory (one field per completed step) and the
    aggregated statistics.  The Jacobian/preconditioner state carries
    over between steps, so reuse happens across the whole simulation.
    """
    if n_steps is None:
        n_steps = grid.n_t
    boundary = boundary_array(grid, spec)
    p = initial_field(grid, spec)
    state = NewtonState()
    stats = NewtonStats()
    trajectory: list[np.ndarray] = []
    for step in range(1, n_steps + 1):
        p, st = solve_timestep(
            p, grid, spec, params, kind, cfg, precond,
            include_rho_phi=include_rho_phi, f=f, state=state,
            time_step=step, recorder=recorder, boundary=boundary,
        )
        stats.merge(st)
        trajectory.append(p)
    return trajectory, stats
