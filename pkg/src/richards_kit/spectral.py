"""Spectral diagnostics for the Jacobian sequence.

Samples the predicted eigenvalue symbol of the scaled Jacobians,

    1D:  f(x, theta) = C s'(p(x)) + K(p(x)) (2 - 2 cos theta),
         C = hz^2 / dt,

computes true eigenvalues of the tridiagonal Jacobians, and compares the
two empirically by sorted-quantile matching.  The symbol does not depend
on the interface average, which is exactly the point of the comparison.
Also checks that the vertical-transport block is asymptotically
negligible (norm of hz^2 T bounded by hz max K' and shrinking like hz).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .constitutive import VanGenuchtenParams, conductivity, d_conductivity, d_saturation
from .grid import BoundarySpec, ProblemGrid
from .jacobian import JacobianMatrix, _tridiagonal
from .newton import NewtonConfig, run_simulation
from .precond import PrecondConfig, make_preconditioner
from .residual import AverageKind


@dataclass(frozen=True)
class SymbolGrid:
    """Samples f(x_i, theta_j) of the predicted eigenvalue symbol.

    ``values`` has one row per x sample; for 3D symbols the columns run
    over the flattened (theta_1, theta_2, theta_3) grid.
    """

    x: np.ndarray
    theta: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class EigDistribution:
    """Sorted real parts of a computed spectrum."""

    values: np.ndarray
    max_imag: float
    dimension: int


def sample_symbol_1d(
    p: np.ndarray,
    grid: ProblemGrid,
    params: VanGenuchtenParams,
    n_theta: int = 64,
    rho_phi: float = 1.0,
) -> SymbolGrid:
    """Symbol samples over interior nodes x_i = i/(N-1) and theta in [0, pi]."""
    if grid.ndim != 1:
        raise ValueError("sample_symbol_1d needs a 1D grid")
    if p.shape != (grid.n_interior,):
        raise ValueError("field size does not match the grid interior")
    n = grid.n[0]
    x = np.arange(1, n - 1) / (n - 1)
    theta = np.linspace(0.0, np.pi, n_theta)
    c = grid.hz**2 / grid.dt
    diag_term = c * rho_phi * d_saturation(p, params)
    k = conductivity(p, params)
    values = diag_term[:, None] + k[:, None] * (2.0 - 2.0 * np.cos(theta))[None, :]
    return SymbolGrid(x, theta, values)


def sample_symbol_3d(
    p: np.ndarray,
    grid: ProblemGrid,
    params: VanGenuchtenParams,
    n_theta: int = 8,
    rho_phi: float | None = None,
) -> SymbolGrid:
    """Qualitative 3D symbol samples along the central vertical column.

    Every interior z slice contributes the field value of the column
    through the domain center, and theta runs over [0, pi]^3.  The grid
    constant is realized as C = (hx hy hz)^(2/3) / dt; 3D comparisons
    stay qualitative because the scaled-sequence normalization is only
    pinned down in 1D.
    """
    if grid.ndim != 3:
        raise ValueError("sample_symbol_3d needs a 3D grid")
    if rho_phi is None:
        rho_phi = params.rho_phi
    interior = grid.interior_view(p)
    nzi, nyi, nxi = interior.shape
    column = interior[:, nyi // 2, nxi // 2]
    x = np.arange(1, grid.n[2] - 1) / (grid.n[2] - 1)
    theta = np.linspace(0.0, np.pi, n_theta)
    c = float(np.prod(grid.h)) ** (2.0 / 3.0) / grid.dt
    lap = (
        (2.0 - 2.0 * np.cos(theta))[:, None, None]
        + (2.0 - 2.0 * np.cos(theta))[None, :, None]
        + (2.0 - 2.0 * np.cos(theta))[None, None, :]
    ).ravel()
    diag_term = c * rho_phi * d_saturation(column, params)
    k = conductivity(column, params)
    values = diag_term[:, None] + k[:, None] * lap[None, :]
    return SymbolGrid(x, theta, values)


def eigenvalues_tridiagonal(jac: JacobianMatrix | csr_matrix) -> EigDistribution:
    """All eigenvalues of a tridiagonal matrix by dense Hessenberg QR.

    A tridiagonal matrix is already Hessenberg, so the LAPACK double-
    shift QR used by ``eigvals`` consumes it directly.
    """
    mat = jac.matrix if isinstance(jac, JacobianMatrix) else jac
    n = mat.shape[0]
    if n > 4000:
        raise ValueError(f"dimension {n} too large for a dense eigensolve")
    coo = mat.tocoo()
    if np.any(np.abs(coo.row - coo.col) > 1):
        raise ValueError("matrix is not tridiagonal")
    try:
        w = np.linalg.eigvals(mat.toarray())
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"QR iteration did not converge: {exc}") from exc
    order = np.argsort(w.real)
    return EigDistribution(w.real[order], float(np.max(np.abs(w.imag), initial=0.0)), n)


def matched_quantiles(eigs: EigDistribution, sym: SymbolGrid) -> tuple[np.ndarray, np.ndarray]:
    """Sorted eigenvalues paired with symbol quantiles at the same ranks."""
    if eigs.values.size == 0 or sym.values.size == 0:
        raise ValueError("empty eigenvalue or symbol sample")
    s = np.sort(sym.values.ravel())
    q = (np.arange(eigs.values.size) + 0.5) / eigs.values.size
    return eigs.values, np.quantile(s, q)


def distribution_distance(eigs: EigDistribution, sym: SymbolGrid) -> float:
    """Normalized l1 distance between sorted eigenvalues and symbol quantiles.

    A discrete Wasserstein-1 surrogate: both samples are sorted, the
    symbol sample is resampled onto the eigenvalue count by quantiles,
    and the mean absolute gap is divided by the symbol value range.
    """
    e, matched = matched_quantiles(eigs, sym)
    s = np.sort(sym.values.ravel())
    span = s[-1] - s[0]
    if span == 0.0:
        span = max(abs(s[-1]), 1.0)
    return float(np.mean(np.abs(e - matched)) / span)


def transport_matrix_1d(
    p: np.ndarray, grid: ProblemGrid, params: VanGenuchtenParams
) -> csr_matrix:
    """Vertical-transport block of the 1D Jacobian over interior unknowns.

    Sub-diagonal +K'(p_{i-1})/(2 hz), super-diagonal -K'(p_{i+1})/(2 hz),
    zero diagonal; couplings into boundary nodes are eliminated.
    """
    if grid.ndim != 1:
        raise ValueError("transport_matrix_1d needs a 1D grid")
    hz = grid.hz
    dk = d_conductivity(p, params)
    zeros = np.zeros(grid.n_interior)
    sub = np.empty_like(zeros)
    sup = np.empty_like(zeros)
    sub[1:] = dk[:-1] / (2.0 * hz)
    sub[0] = 0.0
    sup[:-1] = -dk[1:] / (2.0 * hz)
    sup[-1] = 0.0
    return _tridiagonal(zeros, sub, sup)


def _sigma_max(mat: csr_matrix, iterations: int = 300, tol: float = 1e-13) -> float:
    """Largest singular value by power iteration on T^T T."""
    rng = np.random.default_rng(0)
    v = rng.standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    mt = mat.T.tocsr()
    sigma = 0.0
    for _ in range(iterations):
        w = mt @ (mat @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        sigma_new = np.sqrt(norm_w)
        v = w / norm_w
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return sigma_new
        sigma = sigma_new
    return sigma


@dataclass(frozen=True)
class ZeroDistributionReport:
    """Outcome of the transport-term negligibility check."""

    norm: float
    bound: float
    passed: bool


def zero_distribution_check(
    p: np.ndarray, grid: ProblemGrid, params: VanGenuchtenParams
) -> ZeroDistributionReport:
    """Check ||hz^2 T||_2 <= hz max K'(p) for the transport block."""
    t = transport_matrix_1d(p, grid, params)
    norm = grid.hz**2 * _sigma_max(t)
    bound = grid.hz * float(np.max(d_conductivity(p, params)))
    return ZeroDistributionReport(norm, bound, norm <= bound * (1.0 + 1e-9))


def as_equivalence_experiment(
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str,
    cfg: NewtonConfig,
    precond_cfg: PrecondConfig | None = None,
    include_rho_phi: bool = False,
    with_identity_control: bool = True,
) -> list[dict]:
    """Average linear iterations of AS built on the full Jacobian versus
    AS built on the diffusion-only matrix, plus an unpreconditioned
    control run.

    Returns one row per variant with the averaged linear-iteration count
    and the Newton bookkeeping of the full simulation.
    """
    if precond_cfg is None:
        precond_cfg = PrecondConfig(name="as")
    variants = [
        ("as_full", {"name": "as", "build_on": "full"}),
        ("as_diffusion", {"name": "as", "build_on": "diffusion"}),
    ]
    if with_identity_control:
        variants.append(("identity", {"name": "none"}))
    rows = []
    for label, overrides in variants:
        precond = make_preconditioner(precond_cfg, **overrides)
        _, stats = run_simulation(
            grid, spec, params, kind, cfg, precond,
            include_rho_phi=include_rho_phi,
        )
        rows.append(
            {
                "variant": label,
                "avg_linear_per_newton": stats.average_linear_per_newton(),
                "nonlinear_iterations": stats.nonlinear_iterations,
                "jacobians": stats.jacobians_computed,
                "linear_iterations": stats.linear_iterations,
            }
        )
    return rows
