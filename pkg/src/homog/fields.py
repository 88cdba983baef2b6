"""Grids, sampled fields and the pointwise/differential operators acting on them.

Cell-centred fields store their values in arrays whose leading axes are the
cell indices in ``ij`` order (axis ``k`` runs along coordinate ``x_{k+1}``);
trailing axes hold the vector or matrix components.  Node fields use the same
ordering with one extra point per axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, GridTooCoarse, NotCoercive, SingularCell

ROLES = ("A", "M", "P", "N", "Q", "other")


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid of ``n_cells`` cells per side on a box."""

    n_cells: int
    lower: tuple[float, ...] = (0.0, 0.0)
    upper: tuple[float, ...] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ValueError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        if len(self.lower) != len(self.upper) or not 1 <= len(self.lower) <= 3:
            raise ValueError("lower/upper must have the same length, between 1 and 3")
        if any(u <= lo for lo, u in zip(self.lower, self.upper)):
            raise ValueError("domain must have positive measure")

    @property
    def ndim(self) -> int:
        return len(self.lower)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((u - lo) / self.n_cells for lo, u in zip(self.lower, self.upper))

    @property
    def h(self) -> float:
        return max(self.spacing)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return (self.n_cells,) * self.ndim

    @property
    def node_shape(self) -> tuple[int, ...]:
        return (self.n_cells + 1,) * self.ndim

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers_1d(self, axis: int) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.n_cells) + 0.5) * self.spacing[axis]

    def nodes_1d(self, axis: int) -> np.ndarray:
        return self.lower[axis] + np.arange(self.n_cells + 1) * self.spacing[axis]

    def centers(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.centers_1d(k) for k in range(self.ndim)], indexing="ij"))

    def nodes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.nodes_1d(k) for k in range(self.ndim)], indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        """Boolean node array, True on the boundary of the box."""
        mask = np.zeros(self.node_shape, dtype=bool)
        for axis in range(self.ndim):
            idx = [slice(None)] * self.ndim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CellField:
    """Tensor-valued field sampled at cell centres; ``rank`` trailing axes."""

    grid: Grid
    entries: np.ndarray

    rank = 0

    def __post_init__(self):
        arr = _frozen(self.entries)
        g = self.grid
        expected = g.cell_shape
        if arr.shape[: g.ndim] != expected or arr.ndim != g.ndim + self.rank:
            raise ValueError(
                f"{type(self).__name__} on {expected} cells needs {self.rank} trailing axes, got shape {arr.shape}"
            )
        if any(s != g.ndim for s in arr.shape[g.ndim:]):
            raise ValueError(f"component axes must have length {g.ndim}, got {arr.shape[g.ndim:]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{type(self).__name__} has non-finite entries")
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.grid.ndim

    def max_norm(self) -> float:
        return float(np.max(np.abs(self.entries)))


@dataclass(frozen=True, eq=False)
class VectorField(CellField):
    rank = 1

    @classmethod
    def constant(cls, grid: Grid, vector) -> VectorField:
        v = np.asarray(vector, dtype=float)
        return cls(grid, np.broadcast_to(v, grid.cell_shape + v.shape))


@dataclass(frozen=True, eq=False)
class MatrixField(CellField):
    role: str = "other"

    rank = 2

    def __post_init__(self):
        super().__post_init__()
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")

    @classmethod
    def constant(cls, grid: Grid, matrix, role: str = "other") -> MatrixField:
        m = np.asarray(matrix, dtype=float)
        return cls(grid, np.broadcast_to(m, grid.cell_shape + m.shape), role)

    @classmethod
    def from_function(cls, grid: Grid, fn, role: str = "other") -> MatrixField:
        """Sample ``fn(*coords) -> (..., n, n)`` at the cell centres."""
        return cls(grid, np.asarray(fn(*grid.centers()), dtype=float), role)

    def with_role(self, role: str) -> MatrixField:
        return MatrixField(self.grid, self.entries, role)

    def transpose(self) -> MatrixField:
        return MatrixField(self.grid, np.swapaxes(self.entries, -1, -2), self.role)

    def is_constant(self, tol: float = 0.0) -> bool:
        flat = self.entries.reshape(-1, self.dim, self.dim)
        return bool(np.max(np.abs(flat - flat[0])) <= tol)


@dataclass(frozen=True, eq=False)
class TensorField(CellField):
    """Rank-3 field, e.g. the curl of a matrix field."""

    rank = 3


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar values either at the grid nodes or at the cell centres."""

    grid: Grid
    values: np.ndarray
    location: str = "node"

    def __post_init__(self):
        if self.location not in ("node", "cell"):
            raise ValueError(f"location must be 'node' or 'cell', got {self.location!r}")
        arr = _frozen(self.values)
        shape = self.grid.node_shape if self.location == "node" else self.grid.cell_shape
        if arr.shape != shape:
            raise ValueError(f"{self.location} values need shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarField has non-finite values")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_function(cls, grid: Grid, fn, location: str = "node") -> ScalarField:
        coords = grid.nodes() if location == "node" else grid.centers()
        vals = np.broadcast_to(np.asarray(fn(*coords), dtype=float), coords[0].shape)
        return cls(grid, vals, location)


@dataclass(frozen=True)
class EllipticityBounds:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= self.beta):
            raise ValueError(f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}")

    def admits(self, A: MatrixField, rtol: float = 1e-12) -> bool:
        """True when ``A`` lies in the class with these bounds."""
        got = check_ellipticity(A)
        return got.alpha >= self.alpha * (1 - rtol) and got.beta <= self.beta * (1 + rtol)


def _require_same_grid(*fields):
    grids = {f.grid for f in fields}
    if len(grids) != 1:
        raise GridMismatch(f"fields live on different grids: {sorted(map(repr, grids))}")


def _checked_inverse(mats: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(mats, compute_uv=False)
    smin, smax = s[..., -1], s[..., 0]
    bad = ~(smin > 1e-14 * np.maximum(smax, np.finfo(float).tiny))
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularCell(f"matrix is singular (or numerically so) at cell {where}")
    return np.linalg.inv(mats)


def ellipticity_of(mats: np.ndarray) -> EllipticityBounds:
    """Bounds for a stack of matrices ``mats[..., n, n]``; see ``check_ellipticity``."""
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    mats = mats.reshape(-1, n, n)
    inv = _checked_inverse(mats)
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    alpha = float(np.min(np.linalg.eigvalsh(sym)[:, 0]))
    if not alpha > 0.0:
        raise NotCoercive(f"symmetric part not positive definite: alpha = {alpha:.3e}")
    sym_inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
    inv_beta = float(np.min(np.linalg.eigvalsh(sym_inv)[:, 0]))
    if not inv_beta > 0.0:
        raise NotCoercive(f"symmetric part of the inverse not positive definite: {inv_beta:.3e}")
    # alpha <= beta holds in exact arithmetic; guard rounding at equality
    return EllipticityBounds(alpha, max(1.0 / inv_beta, alpha))


def check_ellipticity(A: MatrixField) -> EllipticityBounds:
    """Tightest ``(alpha, beta)`` with ``A`` in the class M(alpha, beta).

    ``alpha`` is the smallest eigenvalue of the symmetric part of ``A`` over
    all cells, ``1/beta`` the smallest eigenvalue of the symmetric part of
    ``A^{-1}``.  Raises ``SingularCell`` or ``NotCoercive``.
    """
    return ellipticity_of(A.entries)


def field_algebra(op: str, X: MatrixField, Y: MatrixField | None = None) -> MatrixField:
    """Cellwise ``multiply`` (X @ Y), ``invert`` or ``transpose``."""
    if op == "multiply":
        if Y is None:
            raise ValueError("multiply needs two operands")
        _require_same_grid(X, Y)
        return MatrixField(X.grid, X.entries @ Y.entries)
    if op == "invert":
        inv = _checked_inverse(X.entries.reshape(-1, X.dim, X.dim))
        return MatrixField(X.grid, inv.reshape(X.entries.shape))
    if op == "transpose":
        return X.transpose()
    raise ValueError(f"unknown op {op!r}")


def _partial(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    # central differences inside, first-order one-sided at the boundary cells
    return np.gradient(values, grid.spacing[axis], axis=axis, edge_order=1)


def _as_rows(F: CellField) -> np.ndarray:
    if isinstance(F, MatrixField):
        return F.entries
    if isinstance(F, VectorField):
        return F.entries[..., None, :]
    raise TypeError(f"expected a VectorField or MatrixField, got {type(F).__name__}")


def discrete_div(P: MatrixField | VectorField):
    """Row-wise divergence ``(div P)_i = sum_j d P_ij / d x_j``.

    A ``VectorField`` input is treated as a single row and yields a cell
    ``ScalarField``.
    """
    grid = P.grid
    if grid.n_cells < 3:
        raise GridTooCoarse("discrete_div needs at least 3 cells per side")
    rows = _as_rows(P)
    out = np.zeros(rows.shape[:-1])
    for j in range(grid.ndim):
        out += _partial(rows[..., j], grid, j)
    if isinstance(P, VectorField):
        return ScalarField(grid, out[..., 0], location="cell")
    return VectorField(grid, out)


def discrete_curl(M: MatrixField | VectorField) -> TensorField | MatrixField:
    """Row-wise curl ``(curl M)_ijk = d M_ij / d x_k - d M_ik / d x_j``.

    Antisymmetric in ``(j, k)`` by construction.  A ``VectorField`` input gives
    the ``(n, n)`` curl ``(curl E)_jk = d E_j / d x_k - d E_k / d x_j``.
    """
    grid = M.grid
    if grid.n_cells < 3:
        raise GridTooCoarse("discrete_curl needs at least 3 cells per side")
    rows = _as_rows(M)
    n = grid.ndim
    # grads[..., i, j, k] = d rows_ij / d x_k
    grads = np.stack([_partial(rows, grid, k) for k in range(n)], axis=-1)
    curl = grads - np.swapaxes(grads, -1, -2)
    if isinstance(M, VectorField):
        return MatrixField(grid, curl[..., 0, :, :])
    return TensorField(grid, curl)


def staggered_curl(F: VectorField | MatrixField) -> np.ndarray:
    """2-D curl ``d F_1/dx_2 - d F_2/dx_1`` at interior vertices.

    Uses the compact four-cell stencil that commutes with ``elliptic.gradient``,
    so it vanishes (up to rounding) on discrete gradients of node fields.
    Returns shape ``(N-1, N-1)`` for vectors, ``(N-1, N-1, n)`` per row for
    matrices.
    """
    grid = F.grid
    if grid.ndim != 2:
        raise ValueError("staggered_curl is two-dimensional")
    rows = _as_rows(F)
    hx, hy = grid.spacing
    f1, f2 = rows[..., 0], rows[..., 1]
    d2_f1 = (f1[:-1, 1:] + f1[1:, 1:] - f1[:-1, :-1] - f1[1:, :-1]) / (2 * hy)
    d1_f2 = (f2[1:, :-1] + f2[1:, 1:] - f2[:-1, :-1] - f2[:-1, 1:]) / (2 * hx)
    out = d2_f1 - d1_f2
    return out[..., 0] if isinstance(F, VectorField) else out


def cell_l2_norm(F, mask: np.ndarray | None = None) -> float:
    """Midpoint-rule L2 norm of a cell field, optionally restricted to ``mask``."""
    vals = F.values if isinstance(F, ScalarField) else F.entries
    if isinstance(F, ScalarField) and F.location != "cell":
        raise ValueError("cell_l2_norm needs cell values")
    sq = vals**2
    sq = sq.reshape(F.grid.cell_shape + (-1,)).sum(axis=-1)
    if mask is not None:
        sq = sq[mask]
    return float(np.sqrt(np.sum(sq) * F.grid.cell_volume))


# ----------------------------------------------------------- H^{-1} proxies

def hminus1_estimate(g: ScalarField, tol: float = 1e-12) -> float:
    """Discrete H^{-1} norm proxy: ``||grad w||`` with ``-lap w = g``, ``w = 0`` on the boundary."""
    from . import elliptic

    return elliptic.dual_norm(g.grid, elliptic.scalar_load(g), tol=tol)


def hminus1_div(F: VectorField | MatrixField, tol: float = 1e-12) -> float:
    """H^{-1} proxy of the (row-wise) divergence, taken weakly: ``phi -> -int F . grad phi``.

    Rows are combined in the Euclidean sense (norm in H^{-1}(Omega)^n).
    """
    from . import elliptic

    rows = _as_rows(F)
    total = 0.0
    for i in range(rows.shape[-2]):
        load = elliptic.divergence_load(VectorField(F.grid, rows[..., i, :]))
        total += elliptic.dual_norm(F.grid, load, tol=tol) ** 2
    return float(np.sqrt(total))


def hminus1_curl(M: VectorField | MatrixField, tol: float = 1e-12) -> float:
    """H^{-1} proxy of the 2-D row-wise curl, taken weakly."""
    from . import elliptic

    if M.grid.ndim != 2:
        raise ValueError("hminus1_curl is two-dimensional")
    rows = _as_rows(M)
    total = 0.0
    for i in range(rows.shape[-2]):
        # d2 M_i1 - d1 M_i2 = div(-M_i2, M_i1)
        rotated = np.stack([-rows[..., i, 1], rows[..., i, 0]], axis=-1)
        load = elliptic.divergence_load(VectorField(M.grid, rotated))
        total += elliptic.dual_norm(M.grid, load, tol=tol) ** 2
    return float(np.sqrt(total))
