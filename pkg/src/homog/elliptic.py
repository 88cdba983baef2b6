"""Piecewise-linear finite elements for ``-div(A grad u) = f + div F`` on a 2-D box.

Every cell is split into two triangles along the diagonal from its lower-left
to its upper-right corner.  The coefficient is constant per cell (its cell
centre value).  Dirichlet data enter through a node lift ``g``: the unknown is
``w = u - g`` with ``w = 0`` on the boundary.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import GridMismatch, SolverDivergence
from .fields import Grid, MatrixField, ScalarField, VectorField, check_ellipticity

log = logging.getLogger(__name__)

# local vertices as (di, dj) offsets and unit-spacing basis gradients
_TRIANGLES = (
    (((0, 0), (1, 0), (1, 1)), np.array([[-1.0, 0.0], [1.0, -1.0], [0.0, 1.0]])),
    (((0, 0), (1, 1), (0, 1)), np.array([[0.0, -1.0], [1.0, 0.0], [-1.0, 1.0]])),
)
_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(frozen=True)
class EllipticProblem:
    """Coefficient, sources and Dirichlet lift of one boundary-value problem.

    ``source`` is ``f`` (cell or node values), ``div_source`` is ``F`` in the
    right-hand side ``f + div F``; the latter is assembled weakly as
    ``-int F . grad phi`` so discontinuous ``F`` is fine.
    """

    A: MatrixField
    source: ScalarField | None = None
    div_source: VectorField | None = None
    lift: ScalarField | None = None

    def __post_init__(self):
        grid = self.A.grid
        if grid.ndim != 2:
            raise ValueError("the solver is two-dimensional")
        for item in (self.source, self.div_source, self.lift):
            if item is not None and item.grid != grid:
                raise GridMismatch("problem data must share the coefficient grid")
        if self.lift is not None and self.lift.location != "node":
            raise ValueError("lift must be a node field")


@dataclass(frozen=True)
class LinearSystem:
    K: sp.csr_matrix          # full stiffness, all nodes
    K_ii: sp.csr_matrix       # interior block
    rhs: np.ndarray           # interior right-hand side, lift already moved over
    load: np.ndarray          # full load vector from f and F
    lift: np.ndarray          # flattened node lift
    interior: np.ndarray      # interior node indices
    symmetric: bool
    rounding_floor: float     # residual norm below which the rhs is rounding noise


@dataclass(frozen=True)
class SolveReport:
    u: ScalarField
    iterations: int
    residual: float
    energy: float


def _node_index(grid: Grid):
    n = grid.n_cells
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    tris = []
    for offsets, unit_grads in _TRIANGLES:
        nodes = np.stack([(i + di) * (n + 1) + (j + dj) for di, dj in offsets], axis=1)
        grads = unit_grads / np.asarray(grid.spacing)
        tris.append((nodes, grads))
    return tris


@lru_cache(maxsize=32)
def _triangles(grid: Grid):
    return _node_index(grid)


def _scatter(grid: Grid, local: list[np.ndarray]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for (nodes, _), block in zip(_triangles(grid), local):
        rows.append(np.repeat(nodes[:, :, None], 3, axis=2).ravel())
        cols.append(np.repeat(nodes[:, None, :], 3, axis=1).ravel())
        vals.append(block.ravel())
    size = int(np.prod(grid.node_shape))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    mat.sort_indices()
    return mat


def stiffness_matrix(A: MatrixField) -> sp.csr_matrix:
    """``K[a, b] = int A grad phi_b . grad phi_a`` over all nodes."""
    grid = A.grid
    area = grid.cell_volume / 2
    coeff = A.entries.reshape(-1, 2, 2)
    local = [area * np.einsum("ak,ckl,bl->cab", G, coeff, G) for _, G in _triangles(grid)]
    return _scatter(grid, local)


@lru_cache(maxsize=8)
def mass_matrix(grid: Grid) -> sp.csr_matrix:
    n_cells = grid.n_cells**2
    block = np.broadcast_to(_LOCAL_MASS * grid.cell_volume / 2, (n_cells, 3, 3))
    return _scatter(grid, [block, block])


def _accumulate(grid: Grid, per_triangle: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(int(np.prod(grid.node_shape)))
    for (nodes, _), vals in zip(_triangles(grid), per_triangle):
        np.add.at(out, nodes.ravel(), vals.ravel())
    return out


def scalar_load(f: ScalarField) -> np.ndarray:
    """``b_k = int f phi_k``; cell values are taken constant per cell."""
    grid = f.grid
    if f.location == "node":
        return mass_matrix(grid) @ f.values.ravel()
    share = f.values.ravel() * grid.cell_volume / 6
    return _accumulate(grid, [np.repeat(share[:, None], 3, axis=1)] * 2)


def divergence_load(F: VectorField) -> np.ndarray:
    """Weak divergence ``b_k = -int F . grad phi_k`` of a cellwise-constant field."""
    grid = F.grid
    area = grid.cell_volume / 2
    flat = F.entries.reshape(-1, 2)
    return _accumulate(grid, [-area * flat @ G.T for _, G in _triangles(grid)])


def assemble(problem: EllipticProblem) -> LinearSystem:
    """Assemble the Dirichlet-reduced system for ``problem``.

    Raises ``NotCoercive``/``SingularCell`` when the coefficient leaves the
    ellipticity class.
    """
    A = problem.A
    grid = A.grid
    check_ellipticity(A)
    K = stiffness_matrix(A)
    size = K.shape[0]
    load = np.zeros(size)
    if problem.source is not None:
        load += scalar_load(problem.source)
    if problem.div_source is not None:
        load += divergence_load(problem.div_source)
    g = np.zeros(size) if problem.lift is None else problem.lift.values.ravel().copy()
    interior = np.flatnonzero(~grid.boundary_mask().ravel())
    K_i = K[interior]
    K_ii = K_i[:, interior].tocsr()
    K_ii.sort_indices()
    rhs = load[interior] - K_i @ g
    scale = np.linalg.norm(load[interior]) + np.linalg.norm(abs(K_i) @ np.abs(g))
    asym = abs(K_ii - K_ii.T).max() if K_ii.nnz else 0.0
    symmetric = bool(asym <= 1e-13 * abs(K_ii).max())
    return LinearSystem(K, K_ii, rhs, load, g, interior, symmetric, 64 * np.finfo(float).eps * scale)


def _iterate(K_ii: sp.csr_matrix, rhs: np.ndarray, symmetric: bool, atol: float, maxiter: int):
    x0 = np.zeros_like(rhs)
    if symmetric:
        dinv = 1.0 / K_ii.diagonal()
        return _kernels.pcg(K_ii.indptr, K_ii.indices, K_ii.data, rhs, x0, dinv, atol, maxiter)
    # symmetrized normal form K^T K w = K^T b, Jacobi-preconditioned
    KT = K_ii.T.tocsr()
    KT.sort_indices()
    dinv = 1.0 / np.asarray(K_ii.multiply(K_ii).sum(axis=0)).ravel()
    return _kernels.cgnr(
        K_ii.indptr, K_ii.indices, K_ii.data, KT.indptr, KT.indices, KT.data, rhs, x0, dinv, atol, maxiter
    )


def solve_dirichlet(problem: EllipticProblem, tol: float = 1e-10, maxiter: int | None = None) -> SolveReport:
    """Solve to relative residual ``tol``.

    ``maxiter`` defaults to ``20 N`` for symmetric systems and ``20 N^2`` for
    the normal-equation path used with nonsymmetric coefficients.
    Raises ``SolverDivergence`` when the budget runs out.
    """
    system = assemble(problem)
    grid = problem.A.grid
    n = grid.n_cells
    if maxiter is None:
        maxiter = 20 * n if system.symmetric else 20 * n * n
    bnorm = float(np.linalg.norm(system.rhs))
    atol = max(tol * bnorm, system.rounding_floor)
    w, iters, res = _iterate(system.K_ii, system.rhs, system.symmetric, atol, maxiter)
    if not res <= atol:
        raise SolverDivergence(
            f"no convergence in {iters} iterations (residual {res:.3e}, target {atol:.3e})", iters, res
        )
    u = system.lift.copy()
    u[system.interior] += w
    energy = float(u @ (system.K @ u))
    rel = res / bnorm if bnorm > 0 else 0.0
    log.debug("solve N=%d: %d iterations, relative residual %.2e", n, iters, rel)
    return SolveReport(ScalarField(grid, u.reshape(grid.node_shape)), int(iters), float(rel), energy)


def gradient(u: ScalarField) -> VectorField:
    """Cell-centre gradient: mean of the two triangle gradients of the interpolant."""
    if u.location != "node":
        raise ValueError("gradient needs node values")
    v = u.values
    hx, hy = u.grid.spacing
    d1 = (v[1:, :-1] - v[:-1, :-1] + v[1:, 1:] - v[:-1, 1:]) / (2 * hx)
    d2 = (v[:-1, 1:] - v[:-1, :-1] + v[1:, 1:] - v[1:, :-1]) / (2 * hy)
    return VectorField(u.grid, np.stack([d1, d2], axis=-1))


def flux(A: MatrixField, u: ScalarField) -> VectorField:
    """``D = A E`` with ``E = gradient(u)``, cellwise."""
    if A.grid != u.grid:
        raise GridMismatch("coefficient and solution live on different grids")
    E = gradient(u)
    return VectorField(A.grid, np.einsum("...ij,...j->...i", A.entries, E.entries))


def flux_divergence_load(A: MatrixField, u: ScalarField) -> np.ndarray:
    """Weak divergence of the element flux: ``b_k = -int A grad u_h . grad phi_k``.

    Uses the per-triangle gradients, so on interior nodes it reproduces the
    discrete equation: ``b = -(f + div F)`` load up to the solver tolerance.
    """
    if A.grid != u.grid:
        raise GridMismatch("coefficient and solution live on different grids")
    return -(stiffness_matrix(A) @ u.values.ravel())


def l2_norm(u: ScalarField) -> float:
    """Exact L2 norm of the piecewise-linear interpolant of node values."""
    flat = u.values.ravel()
    return float(np.sqrt(max(flat @ (mass_matrix(u.grid) @ flat), 0.0)))


def l2_error(u: ScalarField, exact) -> float:
    """L2 distance from the interpolant of ``u`` to ``exact(x1, x2)``.

    Edge-midpoint rule per triangle, exact for quadratics.
    """
    grid = u.grid
    flat = u.values.ravel()
    x1, x2 = (c.ravel() for c in grid.nodes())
    area = grid.cell_volume / 2
    total = 0.0
    for nodes, _ in _triangles(grid):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            na, nb = nodes[:, a], nodes[:, b]
            uh = 0.5 * (flat[na] + flat[nb])
            ue = exact(0.5 * (x1[na] + x1[nb]), 0.5 * (x2[na] + x2[nb]))
            total += area / 3 * np.sum((uh - ue) ** 2)
    return float(np.sqrt(total))


@lru_cache(maxsize=8)
def _laplacian(grid: Grid):
    K = stiffness_matrix(MatrixField.constant(grid, np.eye(2)))
    interior = np.flatnonzero(~grid.boundary_mask().ravel())
    K_ii = K[interior][:, interior].tocsr()
    K_ii.sort_indices()
    return K_ii, interior


def dual_norm(grid: Grid, load: np.ndarray, tol: float = 1e-12) -> float:
    """``sqrt(b^T K^{-1} b)`` over interior nodes, K the Dirichlet Laplacian.

    Equals ``||grad w||`` for the discrete solution of ``-lap w = b``.
    """
    K_ii, interior = _laplacian(grid)
    b = load[interior]
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return 0.0
    w, iters, res = _kernels.pcg(
        K_ii.indptr, K_ii.indices, K_ii.data, b, np.zeros_like(b), 1.0 / K_ii.diagonal(), tol * bnorm, 40 * grid.n_cells
    )
    if not res <= tol * bnorm:
        raise SolverDivergence(f"H^-1 solve did not converge (residual {res:.3e})", iters, res)
    return float(np.sqrt(max(w @ b, 0.0)))
