"""Discrete nonlinear operator of the mixed-form flow equation.

Backward-Euler, cell-centered finite differences on a tensor mesh.  At an
interior node the residual collects the storage term, the six (two in 1D)
interface flux differences, the vertical gravity term and the source:

    Phi = rho phi (s(p) - s(p_old)) / dt
          - Kx+ (pE - pC)/hx^2 + Kx- (pC - pW)/hx^2
          - Ky+ (pN - pC)/hy^2 + Ky- (pC - pS)/hy^2
          - Kz+ (pU - pC)/hz^2 + Kz- (pC - pD)/hz^2
          - (K(pU) - K(pD)) / (2 hz)
          + f

where each K* is an interface average of the conductivity and U/D are the
upper/lower vertical neighbors.  Dirichlet neighbors are read from the
boundary data.  The 1/h^2 scaling is folded into the fluxes, so flux
differences are already divided by h^2.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.integrate import quad

from .constitutive import VanGenuchtenParams, conductivity, saturation
from .grid import BoundarySpec, ProblemGrid, extend_field


class AverageKind(str, Enum):
    """Interface averaging rule for the hydraulic conductivity."""

    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"
    UPSTREAM = "upstream"
    INTEGRAL = "integral"


def _as_kind(kind: AverageKind | str) -> AverageKind:
    try:
        return AverageKind(kind)
    except ValueError:
        raise ValueError(f"unknown average kind {kind!r}") from None


def _integral_mean_scalar(p_l: float, p_u: float, params: VanGenuchtenParams) -> float:
    if p_l == p_u:
        return float(conductivity(p_u, params))
    val, _ = quad(
        lambda psi: float(conductivity(psi, params)),
        p_l,
        p_u,
        epsabs=1e-12 * params.k_s,
        epsrel=1e-12,
        limit=200,
    )
    return val / (p_u - p_l)


def interface_k(
    p_l,
    p_u,
    kind: AverageKind | str,
    params: VanGenuchtenParams,
    k_l=None,
    k_u=None,
):
    """Conductivity at the interface between pressure heads p_l and p_u.

    ``p_u`` is the higher-index side of the interface.  Precomputed
    conductivities may be passed to avoid re-evaluating K.
    """
    kind = _as_kind(kind)
    p_l = np.asarray(p_l, dtype=float)
    p_u = np.asarray(p_u, dtype=float)
    if kind is AverageKind.INTEGRAL:
        # Mean value of K over [p_l, p_u]; the degenerate branch returns K(p_u).
        flat = np.broadcast_arrays(p_l, p_u)
        out = np.array(
            [
                _integral_mean_scalar(float(a), float(b), params)
                for a, b in zip(flat[0].ravel(), flat[1].ravel())
            ]
        ).reshape(flat[0].shape)
        return out if out.ndim else float(out)
    if k_l is None:
        k_l = conductivity(p_l, params)
    if k_u is None:
        k_u = conductivity(p_u, params)
    if kind is AverageKind.ARITHMETIC:
        return 0.5 * (k_u + k_l)
    if kind is AverageKind.GEOMETRIC:
        return np.sqrt(k_u * k_l)
    # Upstream: the tie p_u - p_l = 0 takes the upper branch.
    return np.where(p_u - p_l >= 0.0, k_u, k_l)


def _flux_difference(p_lo, p_c, p_hi, h, kind, params, k_lo, k_c, k_hi):
    """q_{+1/2} - q_{-1/2} along one axis, without the gravity term."""
    k_plus = interface_k(p_c, p_hi, kind, params, k_l=k_c, k_u=k_hi)
    k_minus = interface_k(p_lo, p_c, kind, params, k_l=k_lo, k_u=k_c)
    h2 = h * h
    return -k_plus * (p_hi - p_c) / h2 + k_minus * (p_c - p_lo) / h2


def residual_3d(
    p_new: np.ndarray,
    p_old: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    f: np.ndarray | None = None,
    boundary: np.ndarray | None = None,
) -> np.ndarray:
    """Residual on all interior nodes of a 3D grid (flat, x fastest).

    Args:
        p_new: Current iterate (interior, flat).
        p_old: Previous time-step field (interior, flat).
        grid: Mesh description (must be 3D).
        spec: Dirichlet boundary description.
        params: Constitutive constants; ``rho * phi`` scales the storage term.
        kind: Interface average for K.
        f: Optional source field (interior, flat); defaults to zero.
        boundary: Optional full-grid array overriding the spec boundary data.
    """
    if grid.ndim != 3:
        raise ValueError("residual_3d needs a 3D grid")
    if p_new.shape != (grid.n_interior,) or p_old.shape != (grid.n_interior,):
        raise ValueError("field size does not match the grid interior")
    kind = _as_kind(kind)
    hx, hy, hz = grid.h

    ext = extend_field(p_new, grid, spec, boundary=boundary)
    kext = conductivity(ext, params)

    c = (slice(1, -1),) * 3
    pc = ext[c]
    kc = kext[c]

    out = params.rho_phi / grid.dt * (
        saturation(p_new, params) - saturation(p_old, params)
    )
    out = grid.interior_view(out).copy()

    # x axis (last array dimension), then y, then z.
    out += _flux_difference(
        ext[1:-1, 1:-1, :-2], pc, ext[1:-1, 1:-1, 2:], hx, kind, params,
        kext[1:-1, 1:-1, :-2], kc, kext[1:-1, 1:-1, 2:],
    )
    out += _flux_difference(
        ext[1:-1, :-2, 1:-1], pc, ext[1:-1, 2:, 1:-1], hy, kind, params,
        kext[1:-1, :-2, 1:-1], kc, kext[1:-1, 2:, 1:-1],
    )
    out += _flux_difference(
        ext[:-2, 1:-1, 1:-1], pc, ext[2:, 1:-1, 1:-1], hz, kind, params,
        kext[:-2, 1:-1, 1:-1], kc, kext[2:, 1:-1, 1:-1],
    )
    # Vertical gravity contribution of q_{k+1/2} - q_{k-1/2}.
    out -= (kext[2:, 1:-1, 1:-1] - kext[:-2, 1:-1, 1:-1]) / (2.0 * hz)

    flat = out.ravel()
    if f is not None:
        if f.shape != flat.shape:
            raise ValueError("source field size does not match the grid interior")
        flat = flat + f
    return flat


def residual_1d(
    p_new: np.ndarray,
    p_old: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    params: VanGenuchtenParams,
    kind: AverageKind | str = AverageKind.ARITHMETIC,
    include_rho_phi: bool = False,
    f: np.ndarray | None = None,
    boundary: np.ndarray | None = None,
) -> np.ndarray:
    """Residual on the interior of a 1D vertical column.

    The storage term is (s(p) - s(p_old)) / dt by default; set
    ``include_rho_phi`` to scale it by rho * phi as in 3D.
    """
    if grid.ndim != 1:
        raise ValueError("residual_1d needs a 1D grid")
    if p_new.shape != (grid.n_interior,) or p_old.shape != (grid.n_interior,):
        raise ValueError("field size does not match the grid interior")
    kind = _as_kind(kind)
    hz = grid.hz

    ext = extend_field(p_new, grid, spec, boundary=boundary)
    kext = conductivity(ext, params)

    scale = params.rho_phi if include_rho_phi else 1.0
    out = scale / grid.dt * (saturation(p_new, params) - saturation(p_old, params))
    out = out + _flux_difference(
        ext[:-2], ext[1:-1], ext[2:], hz, kind, params,
        kext[:-2], kext[1:-1], kext[2:],
    )
    out -= (kext[2:] - kext[:-2]) / (2.0 * hz)
    if f is not None:
        if f.shape != out.shape:
            raise ValueError("source field size does not match the grid interior")
        out = out + f
    return out
