"""Finite-difference operators on uniform grids over (truncated) convex domains.

Nodes sit on the lattice ``origin + h * index``. Dirichlet conditions on an
obstacle set are imposed by deleting the nodes inside it; Neumann conditions on
the outer boundary come for free from keeping only edges between active nodes.
An edge from an active node into the obstacle keeps its weight on the diagonal
(the removed value is zero), so rows next to the obstacle have positive sums.
The factor 1/2 in front of the Laplacian is applied at assembly.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import EllipticityViolation, EmptyInterior, InvalidParams
from .geometry import BallUnion

OUTSIDE, INTERIOR, NEUMANN_BOUNDARY, DIRICHLET_REMOVED = 0, 1, 2, 3
LABELS = {OUTSIDE: "outside", INTERIOR: "interior", NEUMANN_BOUNDARY: "neumann_boundary", DIRICHLET_REMOVED: "dirichlet_removed"}


class ResolutionWarning(UserWarning):
    """Grid spacing too coarse for the smallest ball (want h <= radius / 4)."""


@dataclass(frozen=True, eq=False)
class GridDiscretization:
    h: float
    origin: np.ndarray
    shape: tuple
    labels: np.ndarray
    dof_index: np.ndarray
    dim: int

    @property
    def n_dofs(self):
        return int(np.count_nonzero(self.dof_index >= 0))

    @property
    def active(self):
        return self.dof_index >= 0

    def node_points(self):
        axes = [self.origin[k] + self.h * np.arange(n) for k, n in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def dof_points(self):
        """Coordinates of the active nodes in dof order."""
        flat = self.dof_index.reshape(-1)
        idx = np.flatnonzero(flat >= 0)
        order = np.argsort(flat[idx])
        multi = np.unravel_index(idx[order], self.shape)
        return self.origin + self.h * np.stack(multi, axis=-1).astype(float)

    def dof_mask(self, region, tol=None):
        """Per-dof indicator of node membership in a ball union (or any ``contains``)."""
        if region is None or (isinstance(region, BallUnion) and len(region) == 0):
            return np.zeros(self.n_dofs, dtype=bool)
        tol = 1e-9 * self.h if tol is None else tol
        return np.asarray(region.contains(self.dof_points(), tol=tol), dtype=bool)

    def counts(self):
        return {name: int(np.count_nonzero(self.labels == code)) for code, name in LABELS.items()}


def _node_tol(h):
    return 1e-9 * h


def classify_grid(G, S=None, h=0.1, truncation=None, margin=1):
    """Lay a grid of spacing h over closure(G) and classify every node.

    ``G`` may be any object with ``contains`` and ``bounding_box`` (ConvexDomain,
    CubeUnion). A whole-space domain uses its own truncation box unless
    ``truncation`` is given explicitly.
    """
    if not h > 0:
        raise InvalidParams("grid spacing must be positive")
    dom = G
    if getattr(G, "kind", None) == "whole_space":
        from .geometry import ConvexDomain

        if truncation is not None:
            dom = truncation if isinstance(truncation, ConvexDomain) else ConvexDomain.box(*truncation)
        else:
            dom = G.effective()
    lo, hi = dom.bounding_box()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.shape[0]
    n_in = np.floor((hi - lo) / h + 1e-9).astype(int) + 1
    shape = tuple(int(n) + 2 * margin for n in n_in)
    origin = lo - margin * h
    axes = [origin[k] + h * np.arange(n) for k, n in enumerate(shape)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    tol = _node_tol(h)
    in_g = np.asarray(dom.contains(pts, tol=tol))
    in_s = np.zeros(shape, dtype=bool)
    if S is not None and len(S) > 0:
        if h > S.radii.min() / 4:
            warnings.warn(
                f"h = {h:g} exceeds a quarter of the smallest obstacle radius {S.radii.min():g}",
                ResolutionWarning,
                stacklevel=2,
            )
        in_s = np.asarray(S.contains(pts, tol=tol)) & in_g
    labels = np.full(shape, OUTSIDE, dtype=np.int8)
    active = in_g & ~in_s
    # boundary: an active node with a neighbour outside closure(G)
    padded = np.pad(in_g, 1, constant_values=False)
    has_out = np.zeros(shape, dtype=bool)
    for k in range(d):
        for s in (-1, 1):
            sl = [slice(1, -1)] * d
            sl[k] = slice(1 + s, padded.shape[k] - 1 + s)
            has_out |= ~padded[tuple(sl)]
    labels[active & ~has_out] = INTERIOR
    labels[active & has_out] = NEUMANN_BOUNDARY
    labels[in_s] = DIRICHLET_REMOVED
    n = int(np.count_nonzero(active))
    if n == 0:
        raise EmptyInterior("no active grid nodes remain")
    dof = np.full(shape, -1, dtype=np.int64)
    dof[active] = np.arange(n)
    return GridDiscretization(h=float(h), origin=origin, shape=shape, labels=labels, dof_index=dof, dim=d)


@dataclass(frozen=True, eq=False)
class SparseSymmetricOperator:
    """Assembled operator ``laplacian + diag(potential)`` on the active dofs.

    ``matrix`` is the full CSR matrix, ``laplacian`` the potential-free part.
    """

    matrix: sp.csr_matrix
    laplacian: sp.csr_matrix
    potential: np.ndarray | None = None
    grid: GridDiscretization | None = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v

    def norm1(self):
        return float(abs(self.matrix).sum(axis=0).max()) if self.n else 0.0

    def asymmetry(self):
        diff = self.matrix - self.matrix.T
        return float(abs(diff).max()) if diff.nnz else 0.0

    def with_potential(self, beta, mask):
        pot = beta * np.asarray(mask, dtype=float)
        return SparseSymmetricOperator(
            matrix=(self.laplacian + sp.diags(pot)).tocsr(), laplacian=self.laplacian, potential=pot, grid=self.grid
        )

    def scaled(self, s):
        pot = None if self.potential is None else s * self.potential
        return SparseSymmetricOperator(matrix=(s * self.matrix).tocsr(), laplacian=(s * self.laplacian).tocsr(), potential=pot, grid=self.grid)


def _edges(grid, axis):
    """Pairs of dof indices joined by an edge along ``axis``, plus the lower node's multi-index."""
    d = grid.dim
    lo = [slice(None)] * d
    up = [slice(None)] * d
    lo[axis] = slice(0, -1)
    up[axis] = slice(1, None)
    a = grid.dof_index[tuple(lo)]
    b = grid.dof_index[tuple(up)]
    both = (a >= 0) & (b >= 0)
    where = np.nonzero(both)
    return a[both], b[both], where


def _dirichlet_edges(grid, axis):
    """Edges along ``axis`` from an active node to a removed one.

    Returns the active dof and the multi-index of the lower endpoint of each edge.
    """
    d = grid.dim
    lo = [slice(None)] * d
    up = [slice(None)] * d
    lo[axis] = slice(0, -1)
    up[axis] = slice(1, None)
    a = grid.dof_index[tuple(lo)]
    b = grid.dof_index[tuple(up)]
    ra = grid.labels[tuple(lo)] == DIRICHLET_REMOVED
    rb = grid.labels[tuple(up)] == DIRICHLET_REMOVED
    m1 = (a >= 0) & rb
    m2 = ra & (b >= 0)
    w1 = np.nonzero(m1)
    w2 = np.nonzero(m2)
    dofs = np.concatenate([a[m1], b[m2]])
    where = tuple(np.concatenate([x, y]) for x, y in zip(w1, w2))
    return dofs, where


def _dirichlet_diagonal(n, dofs, weights):
    return sp.coo_matrix((weights, (dofs, dofs)), shape=(n, n)).tocsr()


def _graph_laplacian(n, rows, cols, weights):
    """Weighted graph Laplacian; every edge enters both triangles with the same value."""
    r = np.concatenate([rows, cols, rows, cols])
    c = np.concatenate([cols, rows, rows, cols])
    v = np.concatenate([-weights, -weights, weights, weights])
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def assemble_laplacian(grid, beta=0.0, B=None):
    """(1/2) graph Laplacian of the active nodes (edge weight 1/h^2) + beta on nodes in B.

    Edges into removed (Dirichlet) nodes contribute to the diagonal only; edges to
    nodes outside closure(G) are dropped (Neumann).
    """
    n = grid.n_dofs
    rows, cols = [], []
    for k in range(grid.dim):
        a, b, _ = _edges(grid, k)
        rows.append(a)
        cols.append(b)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    w = np.full(rows.shape[0], 0.5 / grid.h**2)
    lap = _graph_laplacian(n, rows, cols, w)
    # an edge into S keeps its weight on the diagonal: the removed value is 0
    dd = np.concatenate([_dirichlet_edges(grid, k)[0] for k in range(grid.dim)])
    if dd.size:
        lap = (lap + _dirichlet_diagonal(n, dd, np.full(dd.shape[0], 0.5 / grid.h**2))).tocsr()
    return _with_beta(lap, grid, beta, B)


def _with_beta(lap, grid, beta, B):
    if beta and B is not None and len(B) > 0:
        pot = beta * grid.dof_mask(B).astype(float)
        return SparseSymmetricOperator(matrix=(lap + sp.diags(pot)).tocsr(), laplacian=lap, potential=pot, grid=grid)
    return SparseSymmetricOperator(matrix=lap.copy(), laplacian=lap, potential=None, grid=grid)


def _check_elliptic(mats, pts, eta0):
    mats = np.asarray(mats, dtype=float)
    if not np.allclose(mats, np.swapaxes(mats, -1, -2), rtol=0, atol=1e-14):
        k = int(np.argmax(np.abs(mats - np.swapaxes(mats, -1, -2)).reshape(len(mats), -1).max(axis=1)))
        raise EllipticityViolation("coefficient matrix is not symmetric", cell=tuple(pts[k]))
    ev = np.linalg.eigvalsh(mats)[:, 0]
    bad = ev < eta0 * (1 - 1e-12)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise EllipticityViolation(
            f"min eigenvalue {ev[k]:.6g} < eta0 = {eta0:g} at {tuple(np.round(pts[k], 12))}",
            cell=tuple(pts[k]),
            min_eig=float(ev[k]),
        )


def assemble_divergence_form(grid, a_field, eta0, beta=0.0, B=None):
    """Discretise (1/2) div(a grad) with Neumann outer and node-removal Dirichlet conditions.

    ``a_field(points)`` maps an ``(n, d)`` array to ``(n, d, d)`` symmetric matrices.
    Diagonal entries are sampled at edge midpoints (flux faces) and weight the edges
    like :func:`assemble_laplacian`; off-diagonal entries are sampled at cell
    centres and coupled through cell-averaged difference quotients on cells whose
    corners are all active. For a = identity the result is entry-identical to the
    plain Laplacian.
    """
    d = grid.dim
    h = grid.h
    n = grid.n_dofs
    rows, cols, weights = [], [], []
    for k in range(d):
        a, b, where = _edges(grid, k)
        lower = grid.origin + h * np.stack(where, axis=-1).astype(float)
        mid = lower.copy()
        mid[:, k] += h / 2
        if mid.shape[0]:
            mats = np.asarray(a_field(mid), dtype=float).reshape(-1, d, d)
            _check_elliptic(mats, mid, eta0)
            weights.append(0.5 * mats[:, k, k] / h**2)
        else:
            weights.append(np.zeros(0))
        rows.append(a)
        cols.append(b)
    lap = _graph_laplacian(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(weights))
    dd, dw = [], []
    for k in range(d):
        dofs, where = _dirichlet_edges(grid, k)
        if dofs.size:
            mid = grid.origin + h * np.stack(where, axis=-1).astype(float)
            mid[:, k] += h / 2
            mats = np.asarray(a_field(mid), dtype=float).reshape(-1, d, d)
            _check_elliptic(mats, mid, eta0)
            dd.append(dofs)
            dw.append(0.5 * mats[:, k, k] / h**2)
    if dd:
        lap = (lap + _dirichlet_diagonal(n, np.concatenate(dd), np.concatenate(dw))).tocsr()
    cross = _cross_terms(grid, a_field, eta0)
    if cross is not None:
        lap = (lap + cross).tocsr()
    return _with_beta(lap, grid, beta, B)


def _cross_terms(grid, a_field, eta0):
    d = grid.dim
    h = grid.h
    corners = np.array(list(itertools.product((0, 1), repeat=d)))
    # cells whose 2^d corners are all active
    corner_dofs = []
    for c in corners:
        sl = tuple(slice(int(ci), grid.shape[k] - 1 + int(ci)) for k, ci in enumerate(c))
        corner_dofs.append(grid.dof_index[sl])
    corner_dofs = np.stack(corner_dofs, axis=-1)
    full = np.all(corner_dofs >= 0, axis=-1)
    if not np.any(full):
        return None
    where = np.nonzero(full)
    centers = grid.origin + h * (np.stack(where, axis=-1).astype(float) + 0.5)
    mats = np.asarray(a_field(centers), dtype=float).reshape(-1, d, d)
    _check_elliptic(mats, centers, eta0)
    off = mats.copy()
    off[:, np.arange(d), np.arange(d)] = 0.0
    if not np.any(np.abs(off) > 0):
        return None
    dofs = corner_dofs[full]  # (m, 2^d)
    # g_k = mean over the 2^(d-1) edges along k of (u_hi - u_lo)/h, as a row over corners
    grad = np.zeros((d, len(corners)))
    for k in range(d):
        grad[k] = np.where(corners[:, k] == 1, 1.0, -1.0) / (2 ** (d - 1) * h)
    # local form (1/2) sum_{k != l} a_kl g_k g_l
    local = 0.5 * np.einsum("mkl,ki,lj->mij", off, grad, grad)
    m, q = dofs.shape
    r = np.repeat(dofs, q, axis=1).reshape(-1)
    c = np.tile(dofs, (1, q)).reshape(-1)
    out = sp.coo_matrix((local.reshape(-1), (r, c)), shape=(grid.n_dofs, grid.n_dofs)).tocsr()
    return ((out + out.T) * 0.5).tocsr()


def scalar_field(fn, dim=3):
    """Wrap a scalar coefficient ``fn(points) -> (n,)`` as isotropic matrices."""

    def field(pts):
        v = np.asarray(fn(pts), dtype=float)
        return v[:, None, None] * np.eye(dim)[None, :, :]

    return field


def checkerboard_field(low, high, period, dim=3, origin=0.0):
    """Isotropic coefficient alternating between ``low`` and ``high`` on cubes of side ``period``."""

    def fn(pts):
        idx = np.floor((np.asarray(pts) - origin) / period + 1e-9).astype(int)
        return np.where(idx.sum(axis=-1) % 2 == 0, low, high)

    return scalar_field(fn, dim)


def embedding(small, big):
    """Indices in ``big``'s dof space of the dofs of ``small`` (same lattice, fewer dofs)."""
    if small.shape != big.shape or not np.allclose(small.origin, big.origin) or small.h != big.h:
        raise InvalidParams("grids do not share a lattice")
    sel = small.dof_index >= 0
    target = big.dof_index[sel]
    order = np.argsort(small.dof_index[sel])
    idx = target[order]
    if np.any(idx < 0):
        raise InvalidParams("small grid has dofs that are inactive in the big grid")
    return idx


def richardson(coarse, fine, order=1):
    """Extrapolate values at spacing h and h/2 assuming an O(h^order) error."""
    f = 2.0**order
    return (f * fine - coarse) / (f - 1)


def grid_spacing_for(length, n_nodes):
    """Spacing that puts exactly ``n_nodes`` nodes on a segment of the given length."""
    return length / (n_nodes - 1)


def min_ball_resolution(S, factor=4.0):
    return math.inf if S is None or len(S) == 0 else float(S.radii.min() / factor)
