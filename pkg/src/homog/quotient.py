"""Quotient representations ``M A = P`` of a conductivity field.

For coefficients depending on ``x_1`` only, the factors are explicit: ``E_1``
and ``D_2 .. D_n`` are solved for in terms of ``D_1`` and ``E_2 .. E_n``,
which gives

    M = [[1/A11, 0], [-A_i1/A11, delta_ij]]
    P = [[1, A_1j/A11], [0, A_ij - A_i1 A_1j / A11]]

(block rows/columns ``i, j >= 2``).  ``curl M = 0`` and ``div P = 0`` hold
identically, and ``det M = 1/A11``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePivot, GridMismatch, NotStratified, SingularCell
from .fields import (
    MatrixField,
    _checked_inverse,
    discrete_curl,
    discrete_div,
    hminus1_curl,
    hminus1_div,
)

STRATIFIED_TOL = 1e-12
SOURCES = ("stratified", "bvp", "gauge-transformed")


@dataclass(frozen=True)
class QuotientPair:
    M: MatrixField
    P: MatrixField
    source: str = "stratified"

    def __post_init__(self):
        if self.M.grid != self.P.grid:
            raise GridMismatch("M and P live on different grids")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        det = np.linalg.det(self.M.entries)
        if not np.all(np.abs(det) > 0):
            raise SingularCell("M is singular at some cell")

    def identity_residual(self, A: MatrixField) -> float:
        """``max |M A - P|`` over cells and entries."""
        return float(np.max(np.abs(self.M.entries @ A.entries - self.P.entries)))


@dataclass(frozen=True)
class GaugeField:
    """Invertible left multiplier ``R(x)`` with its sampled Lipschitz bound."""

    R: MatrixField
    lipschitz: float

    def __post_init__(self):
        _checked_inverse(self.R.entries.reshape(-1, self.R.dim, self.R.dim))
        measured = lipschitz_bound(self.R)
        if not np.isclose(measured, self.lipschitz, rtol=1e-9, atol=1e-12):
            raise ValueError(f"recorded Lipschitz bound {self.lipschitz} != sampled {measured}")

    @classmethod
    def from_field(cls, R: MatrixField) -> GaugeField:
        return cls(R, lipschitz_bound(R))


def lipschitz_bound(R: MatrixField) -> float:
    """Largest finite-difference slope of any entry between neighbouring cells."""
    grid = R.grid
    slope = 0.0
    for axis in range(grid.ndim):
        diff = np.diff(R.entries, axis=axis) / grid.spacing[axis]
        if diff.size:
            slope = max(slope, float(np.max(np.abs(diff))))
    return slope


def stratified_matrices(A: np.ndarray, pivot_guard: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Explicit ``(M, P)`` for stacked matrices ``A[..., n, n]``."""
    A = np.asarray(A, dtype=float)
    a11 = A[..., 0, 0]
    if np.any(~(np.abs(a11) > pivot_guard)):
        raise DegeneratePivot(f"|A11| = {np.min(np.abs(a11)):.3e} below guard {pivot_guard:.3e}")
    n = A.shape[-1]
    M = np.zeros_like(A)
    P = np.zeros_like(A)
    M[..., 0, 0] = 1.0 / a11
    M[..., 1:, 0] = -A[..., 1:, 0] / a11[..., None]
    M[..., 1:, 1:] = np.eye(n - 1)
    P[..., 0, 0] = 1.0
    P[..., 0, 1:] = A[..., 0, 1:] / a11[..., None]
    P[..., 1:, 1:] = A[..., 1:, 1:] - A[..., 1:, 0, None] * A[..., 0, None, 1:] / a11[..., None, None]
    return M, P


def stratification_defect(A: MatrixField) -> float:
    """Largest variation of any entry along ``x_2 .. x_n``."""
    defect = 0.0
    for axis in range(1, A.grid.ndim):
        ref = np.take(A.entries, [0], axis=axis)
        defect = max(defect, float(np.max(np.abs(A.entries - ref))))
    return defect


def stratified_quotient(A: MatrixField, pivot_guard: float = 0.0) -> QuotientPair:
    """Explicit pair for a coefficient that depends on ``x_1`` only.

    Raises ``NotStratified`` if entries vary along other axes by more than
    1e-12, ``DegeneratePivot`` if ``|A11|`` drops to ``pivot_guard``.
    """
    defect = stratification_defect(A)
    if defect > STRATIFIED_TOL:
        raise NotStratified(f"coefficient varies across layers by {defect:.3e}")
    M, P = stratified_matrices(A.entries, pivot_guard)
    return QuotientPair(MatrixField(A.grid, M, "M"), MatrixField(A.grid, P, "P"), "stratified")


def reconstruct_A(q: QuotientPair) -> MatrixField:
    """``M^{-1} P`` cellwise."""
    dim = q.M.dim
    shape = q.M.entries.shape
    inv = _checked_inverse(q.M.entries.reshape(-1, dim, dim)).reshape(shape)
    return MatrixField(q.M.grid, inv @ q.P.entries, "A")


def quotient_residuals(q: QuotientPair) -> dict[str, float]:
    """Max-norm and H^{-1}-proxy sizes of ``curl M`` and ``div P``."""
    curl = discrete_curl(q.M)
    div = discrete_div(q.P)
    out = {"curlM_max": curl.max_norm(), "divP_max": div.max_norm()}
    if q.M.grid.ndim == 2:
        out["curlM_hminus1"] = hminus1_curl(q.M)
        out["divP_hminus1"] = hminus1_div(q.P)
    return out


def gauge_transform(q: QuotientPair, R: GaugeField) -> QuotientPair:
    """``(R M, R P)``; represents the same ``A``."""
    if R.R.grid != q.M.grid:
        raise GridMismatch("gauge and pair live on different grids")
    M = MatrixField(q.M.grid, R.R.entries @ q.M.entries, "M")
    P = MatrixField(q.P.grid, R.R.entries @ q.P.entries, "P")
    return QuotientPair(M, P, "gauge-transformed")
