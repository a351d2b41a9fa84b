"""Tensor mesh, time grid, unknown indexing and Dirichlet boundary data.

The unknown vector holds interior nodes only; boundary nodes carry known
Dirichlet values that enter residual and Jacobian stencils touching the
boundary.  Interior unknowns are ordered lexicographically with the x
index fastest, then y, then z.  One-dimensional problems live on the z
axis (gravity active).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOUNDARY_KINDS = ("uniform_dirichlet", "top_patch")


@dataclass(frozen=True)
class ProblemGrid:
    """Uniform tensor mesh with a uniform time grid.

    Args:
        n: Mesh points per axis, ``(nx, ny, nz)`` in 3D or ``(nz,)`` in 1D.
            The outermost points of each axis lie on the physical boundary.
        extent: Domain lengths per axis, same arity as ``n``.
        n_t: Number of time steps.
        dt: Time step size.
    """

    n: tuple[int, ...]
    extent: tuple[float, ...]
    n_t: int
    dt: float

    def __post_init__(self) -> None:
        if len(self.n) not in (1, 3) or len(self.extent) != len(self.n):
            raise ValueError("n and extent must both have length 1 or 3")
        if any(int(m) < 3 for m in self.n):
            raise ValueError("need at least 3 mesh points per axis")
        if any(length <= 0 for length in self.extent):
            raise ValueError("extent components must be positive")
        if self.n_t < 0 or self.dt <= 0:
            raise ValueError("need n_t >= 0 and dt > 0")
        object.__setattr__(self, "n", tuple(int(m) for m in self.n))
        object.__setattr__(self, "extent", tuple(float(length) for length in self.extent))

    @property
    def ndim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        """Spacings h = extent / (n - 1)."""
        return tuple(length / (m - 1) for length, m in zip(self.extent, self.n))

    @property
    def hz(self) -> float:
        """Vertical spacing (last axis)."""
        return self.h[-1]

    @property
    def shape_interior(self) -> tuple[int, ...]:
        """Interior node counts per axis, (nx-2, ny-2, nz-2) or (nz-2,)."""
        return tuple(m - 2 for m in self.n)

    @property
    def n_interior(self) -> int:
        return math.prod(self.shape_interior)

    def linear_index(self, i: int, j: int | None = None, k: int | None = None) -> int:
        """Flat index of interior node (i, j, k); x fastest, then y, then z.

        Coordinates are full-grid indices, so interior means
        ``1 <= i <= n-2`` on each axis.
        """
        if self.ndim == 1:
            if j is not None or k is not None:
                raise ValueError("1D grids take a single coordinate")
            if not 1 <= i <= self.n[0] - 2:
                raise IndexError(f"z index {i} outside interior range")
            return i - 1
        if j is None or k is None:
            raise ValueError("3D grids need all of i, j, k")
        nx, ny, nz = self.n
        if not (1 <= i <= nx - 2 and 1 <= j <= ny - 2 and 1 <= k <= nz - 2):
            raise IndexError(f"node ({i}, {j}, {k}) outside interior range")
        return (i - 1) + (nx - 2) * ((j - 1) + (ny - 2) * (k - 1))

    def inverse_index(self, m: int) -> tuple[int, ...]:
        """Inverse of :meth:`linear_index`."""
        if not 0 <= m < self.n_interior:
            raise IndexError(f"flat index {m} out of range")
        if self.ndim == 1:
            return (m + 1,)
        nx, ny, _ = self.n
        i = m % (nx - 2)
        j = (m // (nx - 2)) % (ny - 2)
        k = m // ((nx - 2) * (ny - 2))
        return (i + 1, j + 1, k + 1)

    def interior_view(self, flat: np.ndarray) -> np.ndarray:
        """Reshape a flat interior vector to (nz-2, ny-2, nx-2) [3D] or (nz-2,) [1D]."""
        if flat.shape != (self.n_interior,):
            raise ValueError(
                f"field has {flat.shape[0] if flat.ndim == 1 else flat.shape} values, "
                f"expected {self.n_interior}"
            )
        if self.ndim == 1:
            return flat
        nx, ny, nz = self.n
        return flat.reshape(nz - 2, ny - 2, nx - 2)


@dataclass(frozen=True)
class BoundarySpec:
    """Dirichlet boundary description.

    ``uniform_dirichlet`` fixes every boundary node to ``h_r`` (in 1D the
    top node may be overridden by ``top_p``).  ``top_patch`` applies the
    log-blend infiltration condition on a rectangle of the top face,

        p = (1/alpha_bc) * ln[exp(alpha_bc h_r) + (1 - exp(alpha_bc h_r)) chi],

    which evaluates to 0 inside the patch and to ``h_r`` elsewhere, with
    ``h_r`` on all remaining faces.

    Args:
        kind: ``uniform_dirichlet`` or ``top_patch``.
        h_r: Background pressure head.
        alpha_bc: Blend coefficient of the patch formula.
        patch: Fractions (x0, x1, y0, y1) of the top-face extents.
        top_p: Optional 1D top-boundary value (defaults to ``h_r``).
    """

    kind: str = "uniform_dirichlet"
    h_r: float = 0.0
    alpha_bc: float = 1.0
    patch: tuple[float, float, float, float] = (0.25, 0.75, 0.25, 0.75)
    top_p: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        x0, x1, y0, y1 = self.patch
        ok = 0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0
        if not ok:
            raise ValueError("patch fractions must be ordered and within [0, 1]")
        if self.alpha_bc == 0.0:
            raise ValueError("alpha_bc must be nonzero")


def _patch_value(spec: BoundarySpec) -> float:
    # (1/alpha) ln[exp(alpha h_r) + (1 - exp(alpha h_r))]; identically 0,
    # evaluated through the formula so alpha_bc keeps its documented role.
    u = math.exp(spec.alpha_bc * spec.h_r)
    return math.log(u + (1.0 - u)) / spec.alpha_bc


def boundary_value(
    x: float,
    y: float,
    z: float,
    t: float,
    spec: BoundarySpec,
    grid: ProblemGrid,
) -> float:
    """Dirichlet value at a physical boundary point (time independent).

    Raises:
        ValueError: If (x, y, z) does not lie on the domain boundary.
    """
    if grid.ndim == 1:
        length = grid.extent[0]
        tol = 1e-12 * max(length, 1.0)
        if abs(z) <= tol:
            return spec.h_r
        if abs(z - length) <= tol:
            return spec.h_r if spec.top_p is None else spec.top_p
        raise ValueError(f"z = {z} is not a boundary point")

    lx, ly, lz = grid.extent
    tol = 1e-12 * max(max(grid.extent), 1.0)
    on_face = (
        abs(x) <= tol
        or abs(x - lx) <= tol
        or abs(y) <= tol
        or abs(y - ly) <= tol
        or abs(z) <= tol
        or abs(z - lz) <= tol
    )
    if not on_face:
        raise ValueError(f"point ({x}, {y}, {z}) is not on the boundary")

    if spec.kind == "top_patch" and abs(z - lz) <= tol:
        x0, x1, y0, y1 = spec.patch
        inside = (x0 * lx <= x <= x1 * lx) and (y0 * ly <= y <= y1 * ly)
        if inside:
            return _patch_value(spec)
    return spec.h_r


def boundary_array(grid: ProblemGrid, spec: BoundarySpec, t: float = 0.0) -> np.ndarray:
    """Full-grid array with boundary nodes filled and interior set to NaN.

    3D arrays are indexed ``[k, j, i]`` so that a C-order ravel of the
    interior block matches the x-fastest unknown ordering.
    """
    if grid.ndim == 1:
        nz = grid.n[0]
        full = np.full(nz, np.nan)
        full[0] = boundary_value(0.0, 0.0, 0.0, t, spec, grid)
        full[-1] = boundary_value(0.0, 0.0, grid.extent[0], t, spec, grid)
        return full

    nx, ny, nz = grid.n
    lx, ly, lz = grid.extent
    full = np.full((nz, ny, nx), np.nan)
    # Side walls and bottom carry the uniform background value.
    full[:, :, 0] = spec.h_r
    full[:, :, -1] = spec.h_r
    full[:, 0, :] = spec.h_r
    full[:, -1, :] = spec.h_r
    full[0, :, :] = spec.h_r
    # Top face, possibly with the infiltration patch.
    top = np.full((ny, nx), spec.h_r)
    if spec.kind == "top_patch":
        xs = np.arange(nx) * (lx / (nx - 1))
        ys = np.arange(ny) * (ly / (ny - 1))
        x0, x1, y0, y1 = spec.patch
        in_x = (xs >= x0 * lx) & (xs <= x1 * lx)
        in_y = (ys >= y0 * ly) & (ys <= y1 * ly)
        top[np.outer(in_y, in_x)] = _patch_value(spec)
    full[-1, :, :] = top
    return full


def extend_field(
    p: np.ndarray,
    grid: ProblemGrid,
    spec: BoundarySpec,
    boundary: np.ndarray | None = None,
) -> np.ndarray:
    """Embed an interior field into a full-grid array with Dirichlet data.

    Args:
        p: Flat interior field.
        grid: Mesh description.
        spec: Boundary description (ignored when ``boundary`` is given).
        boundary: Optional precomputed full-grid array whose boundary
            entries override the spec-derived values.
    """
    full = boundary_array(grid, spec) if boundary is None else boundary.copy()
    if grid.ndim == 1:
        full[1:-1] = p
    else:
        full[1:-1, 1:-1, 1:-1] = grid.interior_view(p)
    return full


def initial_field(grid: ProblemGrid, spec: BoundarySpec) -> np.ndarray:
    """Constant initial pressure-head field equal to the background value."""
    return np.full(grid.n_interior, spec.h_r)
