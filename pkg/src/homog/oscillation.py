"""Laminated coefficient families ``A_eps(x) = A_per(frac(x_1 / eps))`` and weak limits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, QuadratureFailure, UnderResolved
from .fields import (
    EllipticityBounds,
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    ellipticity_of,
)
from .quotient import stratified_matrices

SMOOTH_QUADRATURE_POINTS = 2048
# smooth profiles have no layer widths; resolve them like two equal layers
SMOOTH_RESOLUTION_FRACTION = 0.5


@dataclass(frozen=True)
class TrigSeries:
    """``mean + sum_k cos[k-1] cos(2 pi k t) + sin[k-1] sin(2 pi k t)``."""

    mean: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, float(self.mean))
        for k, c in enumerate(self.cos, start=1):
            out += c * np.cos(2 * np.pi * k * t)
        for k, s in enumerate(self.sin, start=1):
            out += s * np.sin(2 * np.pi * k * t)
        return out

    @property
    def degree(self) -> int:
        return max(len(self.cos), len(self.sin))


@dataclass(frozen=True, eq=False)
class PeriodicProfile:
    """One period ``t in [0, 1)`` of a laminate.

    Either ``layers`` (ordered ``(fraction, matrix)`` pairs) or ``smooth``
    (entry ``(i, j)`` -> ``TrigSeries``; unspecified entries are those of the
    identity).  Use :meth:`layered` / :meth:`smooth_entries` to build one.
    """

    dim: int
    fractions: np.ndarray | None = None
    matrices: np.ndarray | None = None
    smooth: dict = field(default_factory=dict)
    bounds: EllipticityBounds = field(init=False)

    def __post_init__(self):
        if (self.fractions is None) == (not self.smooth):
            raise ValueError("give exactly one of layers or smooth entries")
        if self.fractions is not None:
            fr = np.array(self.fractions, dtype=float)
            mats = np.array(self.matrices, dtype=float)
            if mats.shape != (len(fr), self.dim, self.dim):
                raise ValueError(f"layer matrices must be {self.dim}x{self.dim}")
            if np.any(fr <= 0) or np.any(fr > 1):
                raise ValueError("layer fractions must lie in (0, 1]")
            if abs(fr.sum() - 1.0) > 1e-12:
                raise ValueError(f"layer fractions sum to {fr.sum()!r}, not 1")
            fr.setflags(write=False)
            mats.setflags(write=False)
            object.__setattr__(self, "fractions", fr)
            object.__setattr__(self, "matrices", mats)
            samples = mats
        else:
            for (i, j) in self.smooth:
                if not (0 <= i < self.dim and 0 <= j < self.dim):
                    raise ValueError(f"smooth entry {(i, j)} outside a {self.dim}x{self.dim} matrix")
            samples = self(_midpoints(SMOOTH_QUADRATURE_POINTS))
        object.__setattr__(self, "bounds", ellipticity_of(samples))

    @classmethod
    def layered(cls, layers) -> PeriodicProfile:
        layers = list(layers)
        mats = np.array([np.asarray(m, dtype=float) for _, m in layers])
        return cls(mats.shape[-1], np.array([f for f, _ in layers], dtype=float), mats)

    @classmethod
    def smooth_entries(cls, entries: dict, dim: int = 2) -> PeriodicProfile:
        return cls(dim, smooth=dict(entries))

    @classmethod
    def constant(cls, matrix) -> PeriodicProfile:
        return cls.layered([(1.0, matrix)])

    @property
    def is_layered(self) -> bool:
        return self.fractions is not None

    @property
    def min_fraction(self) -> float:
        return float(self.fractions.min()) if self.is_layered else SMOOTH_RESOLUTION_FRACTION

    def __call__(self, t) -> np.ndarray:
        """``A_per(t)`` for an array of ``t`` in ``[0, 1)``; shape ``t.shape + (n, n)``."""
        t = np.asarray(t, dtype=float)
        if self.is_layered:
            edges = np.cumsum(self.fractions)[:-1]
            idx = np.searchsorted(edges, t, side="right")
            return self.matrices[idx]
        out = np.broadcast_to(np.eye(self.dim), t.shape + (self.dim, self.dim)).copy()
        for (i, j), series in self.smooth.items():
            out[..., i, j] = series(t)
        return out

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Matrices and weights whose weighted sum is the period mean."""
        if self.is_layered:
            return self.matrices, self.fractions
        q = SMOOTH_QUADRATURE_POINTS
        return self(_midpoints(q)), np.full(q, 1.0 / q)


def _midpoints(q: int) -> np.ndarray:
    return (np.arange(q) + 0.5) / q


def reciprocal_index(eps: float) -> int:
    """``k`` with ``eps = 1/k``; rejects anything else."""
    if not 0 < eps <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {eps!r}")
    k = round(1.0 / eps)
    if abs(k * eps - 1.0) > 1e-9:
        raise ValueError(f"epsilon must be the reciprocal of an integer, got {eps!r}")
    return int(k)


def sample_oscillating(profile: PeriodicProfile, eps: float, grid: Grid) -> MatrixField:
    """Sample ``A_per(frac(x_1/eps))`` at cell centres.

    Raises ``UnderResolved`` unless ``h <= eps * min_fraction / 4``.
    """
    if grid.ndim != profile.dim:
        raise GridMismatch(f"{profile.dim}x{profile.dim} profile on a {grid.ndim}-D grid")
    k = reciprocal_index(eps)
    h1 = grid.spacing[0]
    need = profile.min_fraction / (4 * k)
    if h1 > need * (1 + 1e-12):
        raise UnderResolved(f"h = {h1:.4g} exceeds eps*theta_min/4 = {need:.4g} for eps = 1/{k}")
    t = np.mod(grid.centers_1d(0) * k, 1.0)
    line = profile(t)
    shape = grid.cell_shape + (profile.dim, profile.dim)
    expand = (slice(None),) + (None,) * (grid.ndim - 1)
    return MatrixField(grid, np.broadcast_to(line[expand], shape), "A")


def period_average(profile: PeriodicProfile, g) -> np.ndarray | float:
    """Period mean of ``g(A_per(t))``.

    ``g`` maps a stack of matrices ``(K, n, n)`` to ``(K, ...)``.  Exact for
    layered profiles; midpoint rule on 2048 points otherwise (exact for
    trigonometric polynomials of degree below 2048).
    """
    mats, weights = profile.quadrature()
    vals = np.asarray(g(mats), dtype=float)
    if vals.shape[:1] != (len(weights),):
        vals = np.broadcast_to(vals, (len(weights),) + vals.shape)
    if not np.all(np.isfinite(vals)):
        raise QuadratureFailure("integrand is not finite on the profile")
    out = np.tensordot(weights, vals, axes=(0, 0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class HomogenizedLaminate:
    A_hom: np.ndarray
    M_bar: np.ndarray
    P_bar: np.ndarray

    def as_field(self, grid: Grid) -> MatrixField:
        return MatrixField.constant(grid, self.A_hom, "A")


def homogenized_laminate(profile: PeriodicProfile) -> HomogenizedLaminate:
    """Effective tensor ``M_bar^{-1} P_bar`` from period means of the explicit factors."""
    M_bar = period_average(profile, lambda A: stratified_matrices(A)[0])
    P_bar = period_average(profile, lambda A: stratified_matrices(A)[1])
    return HomogenizedLaminate(np.linalg.solve(M_bar, P_bar), M_bar, P_bar)


# ------------------------------------------------------------ weak pairings

def _gauss_norms(fns, grid: Grid, points: int = 24) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(points)
    nodes, weights = [], []
    for axis in range(2):
        lo, hi = grid.lower[axis], grid.upper[axis]
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append(w * (hi - lo) / 2)
    X1, X2 = np.meshgrid(*nodes, indexing="ij")
    W = np.outer(*weights)
    return np.array([np.sqrt(np.sum(W * fn(X1, X2) ** 2)) for fn in fns])


def _monomial(a, b):
    return lambda x, y: x**a * y**b


@dataclass(frozen=True)
class TestFunctionFamily:
    """Fixed ordered test functions: ``x1^a x2^b`` (``a, b <= degree``) and three sines.

    The default degree 3 gives 19 members.
    """

    __test__ = False  # not a pytest class

    degree: int = 3

    @property
    def members(self) -> list[tuple[str, object]]:
        out = [
            (f"x1^{a}*x2^{b}", _monomial(a, b))
            for a in range(self.degree + 1)
            for b in range(self.degree + 1)
        ]
        out += [
            ("sin(pi x1)", lambda x, y: np.sin(np.pi * x) + 0 * y),
            ("sin(pi x2)", lambda x, y: np.sin(np.pi * y) + 0 * x),
            ("sin(pi x1) sin(pi x2)", lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)),
        ]
        return out

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.members]

    def __len__(self):
        return (self.degree + 1) ** 2 + 3

    def norms(self, grid: Grid) -> np.ndarray:
        return _gauss_norms([fn for _, fn in self.members], grid)

    def values(self, grid: Grid) -> np.ndarray:
        """Member values at cell centres, shape ``(m,) + cell_shape``."""
        X1, X2 = grid.centers()
        return np.array([fn(X1, X2) for _, fn in self.members])

    def pairings(self, values: np.ndarray, grid: Grid) -> np.ndarray:
        """Normalized midpoint-rule integrals ``int phi F / ||phi||``.

        ``values`` has the cell shape as leading axes; output ``(m,) + rest``.
        """
        phi = self.values(grid).reshape(len(self), -1)
        flat = values.reshape(phi.shape[1], -1)
        ints = phi @ flat * grid.cell_volume
        return (ints / self.norms(grid)[:, None]).reshape((len(self),) + values.shape[grid.ndim:])


def _components(sample) -> tuple[np.ndarray, list[str]]:
    if isinstance(sample, ScalarField):
        if sample.location != "cell":
            raise ValueError("weak pairings use cell values")
        return sample.values, ["u"]
    if isinstance(sample, MatrixField):
        n = sample.dim
        return sample.entries, [f"{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    if isinstance(sample, VectorField):
        return sample.entries, [str(i + 1) for i in range(sample.dim)]
    raise TypeError(f"unsupported field type {type(sample).__name__}")


@dataclass(frozen=True, eq=False)
class WeakErrorTable:
    """``values[e, c] = max_phi |int phi (F_eps - F)_c| / ||phi||``."""

    epsilons: tuple[float, ...]
    components: tuple[str, ...]
    values: np.ndarray

    def worst(self) -> np.ndarray:
        """Largest entry per epsilon."""
        return self.values.max(axis=1)

    def ratios(self) -> np.ndarray:
        w = self.worst()
        return w[1:] / w[:-1]


def weak_pairing_errors(sequence, limit, family: TestFunctionFamily) -> WeakErrorTable:
    """Normalized weak-L2 errors of ``(eps, field)`` pairs against ``limit``.

    ``limit`` is a field of the same kind or a constant (array-like)
    broadcast over the grid.
    """
    sequence = list(sequence)
    if not sequence:
        raise ValueError("empty sequence")
    grid = sequence[0][1].grid
    if any(F.grid != grid for _, F in sequence):
        raise GridMismatch("sequence fields live on different grids")
    if hasattr(limit, "grid"):
        if limit.grid != grid:
            raise GridMismatch("limit lives on a different grid")
        lim_vals, _ = _components(limit)
    else:
        lim_vals = np.asarray(limit, dtype=float)
    rows, labels = [], None
    for _, F in sequence:
        vals, labels = _components(F)
        diff = vals - lim_vals
        pair = family.pairings(diff, grid)
        rows.append(np.abs(pair).reshape(len(family), -1).max(axis=0))
    return WeakErrorTable(tuple(float(e) for e, _ in sequence), tuple(labels), np.array(rows))
