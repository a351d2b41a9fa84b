"""Analytic sparse Jacobians of the discrete flow operator.

Closed-form tridiagonal (1D) and 7-point (3D) Jacobians for the
arithmetic and upstream interface averages, obtained by differentiating
the residual stencil.  Also provides a central-difference Jacobian used
as an independent oracle, the diffusion-only matrix that drops every
gravity-derived term (the spectrally equivalent preconditioner source),
and the vertical-transport part on its own.

Boundary handling is Dirichlet elimination: couplings into boundary
nodes are omitted, so the matrix is square over the interior unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .constitutive import (
    VanGenuchtenParams,
    conductivity,
    d_conductivity,
    d_saturation,
)
from .grid import BoundarySpec, ProblemGrid, extend_field
from .residual import AverageKind, _as_kind

SUPPORTED_KINDS = (AverageKind.ARITHMETIC, AverageKind.UPSTREAM)


@dataclass
class JacobianMatrix:
    """Sparse Jacobian with reuse bookkeeping.

    Args:
        matrix: CSR matrix over interior unknowns.
        average: Interface average the entries were derived for.
        stamp: Optional (time step, Newton iterate) identifiers.
    """

    matrix: csr_matrix
    average: AverageKind
    stamp: tuple[int, int] | None = None


def _axis_coeffs(pm, pc, pp, km, kc, kp, dkm, dkc, dkp, h, kind):
    """(diag, off_minus, off_plus) contributions of one axis, no gravity."""
    h2 = h * h
    if kind is AverageKind.ARITHMETIC:
        diag = (km + kp + 2.0 * kc) / (2.0 * h2) + dkc * (2.0 * pc - pm - pp) / (2.0 * h2)
        offm = -(km + kc) / (2.0 * h2) + (pc - pm) * dkm / (2.0 * h2)
        offp = -(kp + kc) / (2.0 * h2) - (pp - pc) * dkp / (2.0 * h2)
        return diag, offm, offp
    if kind is AverageKind.UPSTREAM:
        up_p = pp - pc >= 0.0
        up_m = pc - pm >= 0.0
        kup_p = np.where(up_p, kp, kc)
        kup_m = np.where(up_m, kc, km)
        diag = (kup_p + kup_m) / h2 + dkc / h2 * (
            np.where(up_m, pc - pm, 0.0) - np.where(up_p, 0.0, pp - pc)
        )
        offm = -kup_m / h2 + (pc - pm) * np.where(up_m, 0.0, dkm) / h2
        offp = -kup_p / h2 - (pp - pc) * np.where(up_p, dkp, 0.0) / h2
        return diag, offm, offp
    raise ValueError(
        f"no closed-form Jacobian for average kind {kind.value!r}; use fd_jacobian"
    )


def _assemble_1d_arrays(ext, grid, params, kind, include_gravity, storage_scale):
    hz = grid.hz
    kext = conductivity(ext, params)
    dkext = d_conductivity(ext, params)
    pm, pc, pp = ext[:-2], ext[1:-1], ext[2:]
    km, kc, kp = kext[:-2], kext[1:-1], kext[2:]
    dkm, dkc, dkp = dkext[:-2], dkext[1:-1], dkext[2:]

    diag, offm, offp = _axis_coeffs(pm, pc, pp, km, kc, kp, dkm, dkc, dkp, hz, kind)
    diag = diag + storage_scale * d_saturation(pc, params) / grid.dt
    if include_gravity:
        offm = offm + dkm / (2.0 * hz)
        offp = offp - dkp / (2.0 * hz)
    return diag, offm, offp


def _tridiagonal(diag, offm, offp) -> csr_matrix:
    n = diag.size
    rows = np.concatenate([np.arange(n), np.arange(1, n), np.arange(n - 1)])
    cols = np.concatenate([np.arange(n), np.arange(n - 1), np.arange(1, n)])
    vals = np.concatenate([diag, offm[1:], offp[:-1]])
    mat = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def assemble_1d(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    include_rho_phi: bool = False,
    stamp: tuple[int, int] | None = None,
    boundary: np.ndarray | None = None,
) -> JacobianMatrix:
    """Tridiagonal Jacobian of the 1D residual at the iterate ``p``."""
    if grid.ndim != 1:
        raise ValueError("assemble_1d needs a 1D grid")
    kind = _require_supported(kind)
    ext = extend_field(p, grid, spec, boundary=boundary)
    scale = params.rho_phi if include_rho_phi else 1.0
    diag, offm, offp = _assemble_1d_arrays(ext, grid, params, kind, True, scale)
    return JacobianMatrix(_tridiagonal(diag, offm, offp), kind, stamp)


def _require_supported(kind: AverageKind | str) -> AverageKind:
    kind = _as_kind(kind)
    if kind not in SUPPORTED_KINDS:
        raise ValueError(
            f"no closed-form Jacobian for average kind {kind.value!r}; use fd_jacobian"
        )
    return kind


_AXES = (
    # (array axis, shift slices) for z, y, x of arrays indexed [k, j, i]
    {"axis": 0, "minus": (slice(0, -2), slice(1, -1), slice(1, -1)),
     "plus": (slice(2, None), slice(1, -1), slice(1, -1))},
    {"axis": 1, "minus": (slice(1, -1), slice(0, -2), slice(1, -1)),
     "plus": (slice(1, -1), slice(2, None), slice(1, -1))},
    {"axis": 2, "minus": (slice(1, -1), slice(1, -1), slice(0, -2)),
     "plus": (slice(1, -1), slice(1, -1), slice(2, None))},
)


def _assemble_3d_matrix(
    ext: np.ndarray,
    grid: ProblemGrid,
    params: VanGenuchtenParams,
    kind: AverageKind,
    include_gravity: bool,
) -> csr_matrix:
    hx, hy, hz = grid.h
    h_for_axis = {0: hz, 1: hy, 2: hx}
    kext = conductivity(ext, params)
    dkext = d_conductivity(ext, params)

    c = (slice(1, -1),) * 3
    pc, kc, dkc = ext[c], kext[c], dkext[c]
    shape = pc.shape  # (nz-2, ny-2, nx-2)
    n = pc.size
    rows_flat = np.arange(n).reshape(shape)

    diag = params.rho_phi * d_saturation(pc, params) / grid.dt
    rows, cols, vals = [rows_flat.ravel()], [rows_flat.ravel()], [None]

    # Flat-index strides for neighbors in (k, j, i) layout, x fastest.
    strides = {0: shape[1] * shape[2], 1: shape[2], 2: 1}

    for ax in _AXES:
        a = ax["axis"]
        pm, pp = ext[ax["minus"]], ext[ax["plus"]]
        km, kp = kext[ax["minus"]], kext[ax["plus"]]
        dkm, dkp = dkext[ax["minus"]], dkext[ax["plus"]]
        d_ax, offm, offp = _axis_coeffs(
            pm, pc, pp, km, kc, kp, dkm, dkc, dkp, h_for_axis[a], kind
        )
        if include_gravity and a == 0:
            offm = offm + dkm / (2.0 * hz)
            offp = offp - dkp / (2.0 * hz)
        diag = diag + d_ax

        # Keep off-diagonal couplings only where the neighbor is interior.
        sel_m = [slice(None)] * 3
        sel_m[a] = slice(1, None)
        sel_p = [slice(None)] * 3
        sel_p[a] = slice(0, -1)
        sel_m, sel_p = tuple(sel_m), tuple(sel_p)
        stride = strides[a]

        r_m = rows_flat[sel_m].ravel()
        rows.append(r_m)
        cols.append(r_m - stride)
        vals.append(offm[sel_m].ravel())

        r_p = rows_flat[sel_p].ravel()
        rows.append(r_p)
        cols.append(r_p + stride)
        vals.append(offp[sel_p].ravel())

    vals[0] = diag.ravel()
    mat = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    mat.sort_indices()
    return mat


def assemble_3d(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    stamp: tuple[int, int] | None = None,
    boundary: np.ndarray | None = None,
) -> JacobianMatrix:
    """7-point Jacobian of the 3D residual at the iterate ``p``."""
    if grid.ndim != 3:
        raise ValueError("assemble_3d needs a 3D grid")
    kind = _require_supported(kind)
    ext = extend_field(p, grid, spec, boundary=boundary)
    mat = _assemble_3d_matrix(ext, grid, params, kind, include_gravity=True)
    return JacobianMatrix(mat, kind, stamp)


def assemble(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    include_rho_phi: bool = False,
    stamp: tuple[int, int] | None = None,
    boundary: np.ndarray | None = None,
) -> JacobianMatrix:
    """Dimension-dispatching Jacobian assembly."""
    if grid.ndim == 1:
        return assemble_1d(p, grid, spec, params, kind, include_rho_phi, stamp, boundary)
    return assemble_3d(p, grid, spec, params, kind, stamp, boundary)


def diffusion_preconditioner_matrix(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    include_rho_phi: bool = False,
    boundary: np.ndarray | None = None,
) -> csr_matrix:
    """Jacobian of the pure-diffusion operator (all gravity terms dropped).

    Equals the full Jacobian minus :func:`gravity_matrix`; its symmetric
    part is dominant, which makes it the natural matrix to hand to the
    SPD-oriented preconditioners.
    """
    kind = _require_supported(kind)
    ext = extend_field(p, grid, spec, boundary=boundary)
    if grid.ndim == 1:
        scale = params.rho_phi if include_rho_phi else 1.0
        diag, offm, offp = _assemble_1d_arrays(ext, grid, params, kind, False, scale)
        return _tridiagonal(diag, offm, offp)
    return _assemble_3d_matrix(ext, grid, params, kind, include_gravity=False)


def gravity_matrix(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    boundary: np.ndarray | None = None,
) -> csr_matrix:
    """Vertical-transport part of the Jacobian (average independent).

    Entries are -K'(p_up)/(2 hz) on the upper-z neighbor and
    +K'(p_down)/(2 hz) on the lower-z neighbor, zero diagonal.
    """
    hz = grid.hz
    ext = extend_field(p, grid, spec, boundary=boundary)
    dkext = d_conductivity(ext, params)
    if grid.ndim == 1:
        zeros = np.zeros(grid.n_interior)
        return _tridiagonal(zeros, dkext[:-2] / (2.0 * hz), -dkext[2:] / (2.0 * hz))

    shape = grid.interior_view(np.empty(grid.n_interior)).shape
    n = grid.n_interior
    rows_flat = np.arange(n).reshape(shape)
    stride = shape[1] * shape[2]
    ax = _AXES[0]
    offm = dkext[ax["minus"]] / (2.0 * hz)
    offp = -dkext[ax["plus"]] / (2.0 * hz)
    sel_m = (slice(1, None), slice(None), slice(None))
    sel_p = (slice(0, -1), slice(None), slice(None))
    rows = np.concatenate([rows_flat[sel_m].ravel(), rows_flat[sel_p].ravel()])
    cols = np.concatenate(
        [rows_flat[sel_m].ravel() - stride, rows_flat[sel_p].ravel() + stride]
    )
    vals = np.concatenate([offm[sel_m].ravel(), offp[sel_p].ravel()])
    mat = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def fd_jacobian(
    p: np.ndarray,
    f_eval,
    rel_step: float = 1e-7,
    abs_step: float = 1e-9,
) -> csr_matrix:
    """Central-difference Jacobian of ``f_eval`` at ``p`` (column by column).

    Step delta_m = max(rel_step * |p_m|, abs_step).  Structural zeros of a
    local stencil come out exactly zero and are dropped.
    """
    n = p.size
    cols = []
    for m in range(n):
        delta = max(rel_step * abs(p[m]), abs_step)
        p_hi = p.copy()
        p_hi[m] += delta
        p_lo = p.copy()
        p_lo[m] -= delta
        cols.append((f_eval(p_hi) - f_eval(p_lo)) / (2.0 * delta))
    dense = np.column_stack(cols)
    mat = csr_matrix(dense)
    mat.sort_indices()
    return mat
