"""Preconditioner suite.

One-level methods (ILU(0), block-Jacobi, overlapping additive Schwarz)
and a smoothed-aggregation multigrid V-cycle with two coarsening
schemes: the classic greedy strong-neighborhood aggregation and a
pairwise matching scheme that bounds aggregate sizes by a power of two.
The V-cycle smooths with one forward Gauss-Seidel sweep before and one
backward sweep after the coarse correction, so the cycle operator is
symmetric whenever the level matrices are.  Hierarchies support a cheap
refresh that swaps in a new fine matrix while keeping every transfer
operator and coarse matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse import csr_matrix, issparse

from . import _kernels
from .sparse_linalg import pcg, triple_product

PRECOND_NAMES = ("none", "ilu0", "bjac", "as", "amg_vmb", "amg_match")


class ZeroPivotError(RuntimeError):
    """Raised when ILU(0) elimination hits a zero pivot."""

    def __init__(self, row: int):
        super().__init__(f"zero pivot in row {row}")
        self.row = row


def _prepare_csr(a) -> csr_matrix:
    if not issparse(a):
        raise TypeError("expected a sparse matrix")
    a = a.tocsr().copy()
    a.sort_indices()
    return a


def _diag_positions(a: csr_matrix) -> np.ndarray:
    n = a.shape[0]
    pos = np.full(n, -1, dtype=np.int64)
    indptr, indices = a.indptr, a.indices
    for i in range(n):
        lo = np.searchsorted(indices[indptr[i] : indptr[i + 1]], i)
        k = indptr[i] + lo
        if k < indptr[i + 1] and indices[k] == i:
            pos[i] = k
    return pos


# ----------------------------------------------------------------------
# One-level preconditioners
# ----------------------------------------------------------------------


class Ilu0:
    """Incomplete LU with no fill-in on the pattern of A."""

    def __init__(self, a: csr_matrix):
        a = _prepare_csr(a)
        self.shape = a.shape
        self._indptr = a.indptr.astype(np.int64)
        self._indices = a.indices.astype(np.int64)
        self._data = a.data.astype(float).copy()
        self._diag = _diag_positions(a)
        missing = np.nonzero(self._diag < 0)[0]
        if missing.size:
            raise ZeroPivotError(int(missing[0]))
        bad = _kernels.ilu0_factor(
            a.shape[0], self._indptr, self._indices, self._data, self._diag
        )
        if bad >= 0:
            raise ZeroPivotError(int(bad))

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Forward/backward substitution with the stored factors."""
        x = np.empty_like(r, dtype=float)
        _kernels.ilu0_solve(
            self.shape[0], self._indptr, self._indices, self._data, self._diag,
            np.asarray(r, dtype=float), x,
        )
        return x

    def factors_dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (L, U) factors, for diagnostics and tests."""
        n = self.shape[0]
        low = np.eye(n)
        up = np.zeros((n, n))
        for i in range(n):
            for k in range(self._indptr[i], self._indptr[i + 1]):
                j = self._indices[k]
                if j < i:
                    low[i, j] = self._data[k]
                else:
                    up[i, j] = self._data[k]
        return low, up


@dataclass(frozen=True)
class SubdomainPartition:
    """Partition of the index space into possibly overlapping blocks.

    ``owner`` maps each dof to its core block; ``blocks`` holds the
    overlapped index sets (core dilated ``overlap`` times through the
    matrix adjacency graph).
    """

    owner: np.ndarray
    blocks: tuple[np.ndarray, ...]
    overlap: int

    def __post_init__(self) -> None:
        n = self.owner.shape[0]
        covered = np.zeros(n, dtype=bool)
        for b in self.blocks:
            covered[b] = True
        if not covered.all():
            raise ValueError("blocks do not cover the index space")


def partition_from_matrix(a: csr_matrix, n_blocks: int, overlap: int) -> SubdomainPartition:
    """Contiguous-range core blocks dilated through the adjacency of A."""
    n = a.shape[0]
    n_blocks = max(1, min(n_blocks, n))
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    owner = np.empty(n, dtype=np.int64)
    blocks = []
    for b in range(n_blocks):
        core = np.arange(edges[b], edges[b + 1])
        owner[core] = b
        mask = np.zeros(n, dtype=bool)
        mask[core] = True
        for _ in range(overlap):
            rows = np.nonzero(mask)[0]
            nbrs = np.unique(
                np.concatenate([a.indices[a.indptr[i] : a.indptr[i + 1]] for i in rows])
            )
            mask[nbrs] = True
        blocks.append(np.nonzero(mask)[0])
    return SubdomainPartition(owner, tuple(blocks), overlap)


class AdditiveSchwarz:
    """Overlapping additive Schwarz with ILU(0) local solves.

    The action is sum_i P_i M_i^{-1} R_i with M_i the principal
    submatrix on block i.  Zero overlap gives block-Jacobi; a single
    block with zero overlap reduces to plain ILU(0).
    """

    def __init__(self, a: csr_matrix, partition: SubdomainPartition):
        self.partition = partition
        self.shape = a.shape
        self._locals = []
        a = a.tocsr()
        for idx in partition.blocks:
            sub = a[idx][:, idx].tocsr()
            self._locals.append((idx, Ilu0(sub)))

    def apply(self, r: np.ndarray) -> np.ndarray:
        x = np.zeros_like(r, dtype=float)
        for idx, solver in self._locals:
            x[idx] += solver.apply(r[idx])
        return x

    def update(self, a_new: csr_matrix) -> "AdditiveSchwarz":
        """Refactor the local solves on a new matrix, same partition."""
        if a_new.shape != self.shape:
            raise ValueError("matrix size changed; rebuild the partition")
        self.__init__(a_new, self.partition)
        return self


def additive_schwarz(a: csr_matrix, n_blocks: int, overlap: int = 1) -> AdditiveSchwarz:
    """Build an AS preconditioner from a block count and overlap depth."""
    return AdditiveSchwarz(a, partition_from_matrix(a, n_blocks, overlap))


def block_jacobi(a: csr_matrix, n_blocks: int) -> AdditiveSchwarz:
    """Block-Jacobi with ILU(0) blocks (additive Schwarz, zero overlap)."""
    return additive_schwarz(a, n_blocks, overlap=0)


# ----------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AggregationMap:
    """Disjoint assignment of fine dofs to aggregates."""

    assignment: np.ndarray
    n_aggregates: int

    def __post_init__(self) -> None:
        used = np.unique(self.assignment)
        if used.size != self.n_aggregates or used.min() < 0 or used.max() >= self.n_aggregates:
            raise ValueError("assignment is not a surjection onto the aggregate ids")


def _strength_graph(a: csr_matrix, theta: float) -> csr_matrix:
    """Off-diagonal entries with |a_ij| > theta sqrt(|a_ii a_jj|)."""
    a = a.tocsr()
    d = np.sqrt(np.abs(a.diagonal()))
    coo = a.tocoo()
    off = coo.row != coo.col
    strong = off & (np.abs(coo.data) > theta * d[coo.row] * d[coo.col])
    out = csr_matrix(
        (np.abs(coo.data[strong]), (coo.row[strong], coo.col[strong])), shape=a.shape
    )
    out.sort_indices()
    return out


def vmb_aggregate(a: csr_matrix, theta: float = 0.08) -> AggregationMap:
    """Greedy strong-neighborhood aggregation.

    Pass 1 visits nodes by decreasing strong degree and seeds an
    aggregate from every node whose whole strong neighborhood is still
    free; pass 2 attaches leftovers to the strongest adjacent aggregate;
    pass 3 turns the rest into singletons.
    """
    n = a.shape[0]
    s = _strength_graph(a, theta)
    degree = np.diff(s.indptr)
    order = np.lexsort((np.arange(n), -degree)).astype(np.int64)
    agg = np.full(n, -1, dtype=np.int64)
    count = _kernels.vmb_pass1(
        n, s.indptr.astype(np.int64), s.indices.astype(np.int64), order, agg
    )
    agg_out = agg.copy()
    _kernels.vmb_pass2(
        n, s.indptr.astype(np.int64), s.indices.astype(np.int64),
        s.data.astype(float), agg, agg_out,
    )
    remaining = np.nonzero(agg_out == -1)[0]
    for i in remaining:
        agg_out[i] = count
        count += 1
    return AggregationMap(agg_out, int(count))


def matching_aggregate(a: csr_matrix, target_size: int = 8) -> AggregationMap:
    """Pairwise greedy matching applied log2(target_size) times.

    Each round matches current aggregates along their heaviest
    connections (summed |a_ij| across the cut); unmatched aggregates
    stay as they are.  Aggregate sizes never exceed ``target_size``.
    """
    rounds = max(1, int(round(np.log2(target_size))))
    if 2 ** rounds != target_size:
        raise ValueError("target_size must be a power of two")
    n = a.shape[0]
    coo = a.tocoo()
    off = coo.row != coo.col
    absa = csr_matrix(
        (np.abs(coo.data[off]), (coo.row[off], coo.col[off])), shape=a.shape
    )

    assign = np.arange(n, dtype=np.int64)
    n_agg = n
    for _ in range(rounds):
        q = csr_matrix(
            (np.ones(n), (np.arange(n), assign)), shape=(n, n_agg)
        )
        w = (q.T @ absa @ q).tocoo()
        upper = (w.row < w.col) & (w.data > 0)
        ei, ej, ew = w.row[upper], w.col[upper], w.data[upper]
        if ei.size == 0:
            break
        order = np.lexsort((ej, ei, -ew))
        partner = np.full(n_agg, -1, dtype=np.int64)
        _kernels.greedy_match(
            n_agg, ei[order].astype(np.int64), ej[order].astype(np.int64), partner
        )
        new_id = np.full(n_agg, -1, dtype=np.int64)
        count = 0
        for g in range(n_agg):
            if new_id[g] != -1:
                continue
            new_id[g] = count
            if partner[g] != -1:
                new_id[partner[g]] = count
            count += 1
        assign = new_id[assign]
        if count == n_agg:
            break
        n_agg = count
    return AggregationMap(assign, int(n_agg))


# ----------------------------------------------------------------------
# Smoothed-aggregation multigrid
# ----------------------------------------------------------------------


@dataclass
class AmgLevel:
    """One multigrid level: its matrix, smoother data and prolongation."""

    matrix: csr_matrix
    diag_pos: np.ndarray
    prolongation: csr_matrix | None  # None on the coarsest level


@dataclass
class AmgHierarchy:
    """Galerkin hierarchy with Gauss-Seidel smoothing.

    ``coarse_solver`` is ``"pcg"`` (conjugate gradients preconditioned
    by ILU(0), the default coarse treatment) or ``"direct"`` (dense LU,
    which keeps the V-cycle an exactly linear, symmetric operator).
    """

    levels: list[AmgLevel]
    coarse_solver: str
    coarse_tol: float
    coarse_maxit: int
    coarse_state: object = field(repr=False, default=None)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> list[int]:
        return [lvl.matrix.shape[0] for lvl in self.levels]

    def operator_complexity(self) -> float:
        nnz0 = self.levels[0].matrix.nnz
        return sum(lvl.matrix.nnz for lvl in self.levels) / nnz0


def _estimate_rho_dinv_a(a: csr_matrix, iterations: int = 20) -> float:
    """Power-method estimate of the spectral radius of D^-1 A."""
    dinv = 1.0 / a.diagonal()
    n = a.shape[0]
    v = np.ones(n) / np.sqrt(n)
    rho = 1.0
    for _ in range(iterations):
        w = dinv * (a @ v)
        rho = np.linalg.norm(w)
        if rho == 0.0:
            return 1.0
        v = w / rho
    return rho


def _tentative_prolongation(agg: AggregationMap) -> csr_matrix:
    n = agg.assignment.shape[0]
    p = csr_matrix(
        (np.ones(n), (np.arange(n), agg.assignment)), shape=(n, agg.n_aggregates)
    )
    p.sort_indices()
    return p


def _make_coarse_state(
    matrix: csr_matrix, solver: str, tol: float, maxit: int
):
    if solver == "direct":
        return lu_factor(matrix.toarray())
    if solver == "pcg":
        return Ilu0(matrix)
    raise ValueError(f"unknown coarse solver {solver!r}")


def build_amg(
    a: csr_matrix,
    aggregation: str = "vmb",
    coarse_stop: int = 200,
    smoothed: bool = True,
    theta: float = 0.08,
    target_size: int = 8,
    coarse_solver: str = "pcg",
    coarse_tol: float = 1e-4,
    coarse_maxit: int = 30,
    max_levels: int = 25,
) -> AmgHierarchy:
    """Build a smoothed-aggregation hierarchy by Galerkin products.

    The tentative prolongation is the piecewise-constant aggregate
    indicator; the smoothed variant applies one damped Jacobi step,
    P = (I - omega D^-1 A) P_tent with omega = 4 / (3 rho_hat) and
    rho_hat a 20-step power-method estimate of rho(D^-1 A).  Coarsening
    stops once a level has at most ``coarse_stop`` dofs; if an
    aggregation pass makes no progress the hierarchy stops early with a
    warning.
    """
    if aggregation not in ("vmb", "match"):
        raise ValueError(f"unknown aggregation scheme {aggregation!r}")
    current = _prepare_csr(a)
    levels: list[AmgLevel] = []
    while current.shape[0] > coarse_stop and len(levels) < max_levels - 1:
        if aggregation == "vmb":
            agg = vmb_aggregate(current, theta)
        else:
            agg = matching_aggregate(current, target_size)
        if agg.n_aggregates >= current.shape[0]:
            warnings.warn(
                f"coarsening stagnated at {current.shape[0]} dofs; "
                "stopping the hierarchy early",
                stacklevel=2,
            )
            break
        p = _tentative_prolongation(agg)
        if smoothed:
            omega = 4.0 / (3.0 * _estimate_rho_dinv_a(current))
            dinv = 1.0 / current.diagonal()
            p = (p - csr_matrix(current.multiply(dinv[:, None])) @ p * omega).tocsr()
            p.sort_indices()
        coarse = triple_product(p, current)
        levels.append(AmgLevel(current, _diag_positions(current), p))
        current = coarse
    levels.append(AmgLevel(current, _diag_positions(current), None))
    state = _make_coarse_state(current, coarse_solver, coarse_tol, coarse_maxit)
    return AmgHierarchy(levels, coarse_solver, coarse_tol, coarse_maxit, state)


def _coarse_solve(h: AmgHierarchy, r: np.ndarray) -> np.ndarray:
    if h.coarse_solver == "direct":
        return lu_solve(h.coarse_state, r)
    x, _ = pcg(
        h.levels[-1].matrix, r, h.coarse_state.apply,
        tol=h.coarse_tol, maxit=h.coarse_maxit,
    )
    return x


def _cycle(h: AmgHierarchy, level: int, r: np.ndarray) -> np.ndarray:
    if level == h.n_levels - 1:
        return _coarse_solve(h, r)
    lvl = h.levels[level]
    m = lvl.matrix
    n = m.shape[0]
    x = np.zeros(n)
    _kernels.gauss_seidel_forward(
        n, m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data,
        lvl.diag_pos, x, r,
    )
    rc = lvl.prolongation.T @ (r - m @ x)
    x += lvl.prolongation @ _cycle(h, level + 1, rc)
    _kernels.gauss_seidel_backward(
        n, m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data,
        lvl.diag_pos, x, r,
    )
    return x


def v_cycle_apply(h: AmgHierarchy, r: np.ndarray) -> np.ndarray:
    """One symmetric V-cycle: forward GS, coarse correction, backward GS."""
    if r.shape[0] != h.levels[0].matrix.shape[0]:
        raise ValueError("vector size does not match the hierarchy")
    return _cycle(h, 0, np.asarray(r, dtype=float))


def update_smoothers(h: AmgHierarchy, a_new: csr_matrix) -> AmgHierarchy:
    """Swap in a new fine matrix, rebuilding only its smoother data.

    Transfer operators, coarse matrices and the coarse solver stay
    untouched; the new matrix must share the fine-level pattern.
    """
    a_new = _prepare_csr(a_new)
    fine = h.levels[0].matrix
    if a_new.shape != fine.shape:
        raise ValueError("dimension changed; rebuild the hierarchy")
    if not (
        np.array_equal(a_new.indptr, fine.indptr)
        and np.array_equal(a_new.indices, fine.indices)
    ):
        raise ValueError("sparsity pattern changed; rebuild the hierarchy")
    h.levels[0] = AmgLevel(a_new, _diag_positions(a_new), h.levels[0].prolongation)
    if h.n_levels == 1:
        h.coarse_state = _make_coarse_state(
            a_new, h.coarse_solver, h.coarse_tol, h.coarse_maxit
        )
    return h


# ----------------------------------------------------------------------
# Factory used by the Newton driver
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PrecondConfig:
    """Preconditioner selection and tuning knobs."""

    name: str = "ilu0"
    blocks: int = 4
    overlap: int = 1
    theta: float = 0.08
    coarse_stop: int = 200
    smoothed: bool = True
    build_on: str = "diffusion"  # "diffusion" or "full"
    coarse_solver: str = "pcg"
    coarse_tol: float = 1e-4
    coarse_maxit: int = 30

    def __post_init__(self) -> None:
        if self.name not in PRECOND_NAMES:
            raise ValueError(f"unknown preconditioner {self.name!r}")
        if self.build_on not in ("diffusion", "full"):
            raise ValueError("build_on must be 'diffusion' or 'full'")
        if self.blocks < 1 or self.overlap < 0 or self.coarse_stop < 1:
            raise ValueError("invalid preconditioner sizes")


class Preconditioner:
    """Stateful preconditioner with full-build and refresh paths.

    The first :meth:`setup` call builds from scratch; later calls only
    refresh the smoother/factorization state (for the multigrid variants
    the aggregation hierarchy is kept, mirroring the operator-reuse
    strategy of the solver driver).
    """

    def __init__(self, cfg: PrecondConfig):
        self.cfg = cfg
        self._state = None

    @property
    def build_on(self) -> str:
        return self.cfg.build_on

    def setup(self, matrix: csr_matrix | None) -> None:
        cfg = self.cfg
        if cfg.name == "none":
            return
        if cfg.name in ("amg_vmb", "amg_match") and self._state is not None:
            self._state = update_smoothers(self._state, matrix)
            return
        if cfg.name == "ilu0":
            self._state = Ilu0(matrix)
        elif cfg.name == "bjac":
            self._state = block_jacobi(matrix, cfg.blocks)
        elif cfg.name == "as":
            self._state = additive_schwarz(matrix, cfg.blocks, cfg.overlap)
        else:
            self._state = build_amg(
                matrix,
                aggregation="vmb" if cfg.name == "amg_vmb" else "match",
                coarse_stop=cfg.coarse_stop,
                smoothed=cfg.smoothed,
                theta=cfg.theta,
                coarse_solver=cfg.coarse_solver,
                coarse_tol=cfg.coarse_tol,
                coarse_maxit=cfg.coarse_maxit,
            )

    def apply(self, r: np.ndarray) -> np.ndarray:
        if self.cfg.name == "none" or self._state is None:
            return r
        if self.cfg.name in ("amg_vmb", "amg_match"):
            return v_cycle_apply(self._state, r)
        return self._state.apply(r)

    @property
    def m_apply(self):
        """Callable preconditioner action, or None for the identity."""
        if self.cfg.name == "none":
            return None
        return self.apply


def make_preconditioner(cfg: PrecondConfig | None = None, **overrides) -> Preconditioner:
    """Create a fresh stateful preconditioner from a config."""
    if cfg is None:
        cfg = PrecondConfig(**overrides)
    elif overrides:
        cfg = replace(cfg, **overrides)
    return Preconditioner(cfg)
