"""Corrector matrices ``N_eps``, ``Q_eps`` and their local strong-error checks.

The quotient construction applied to the transposed coefficients gives
``tN_eps tA_eps = tQ_eps`` with ``tN_eps -> I`` and ``tQ_eps -> tA`` weakly.
Then ``N_eps E`` and ``Q_eps E`` approximate ``E_eps`` and ``D_eps`` strongly
in L2 on interior subdomains.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, SubdomainNotInterior
from .fields import MatrixField, VectorField, cell_l2_norm


@dataclass(frozen=True, eq=False)
class CorrectorPair:
    N: MatrixField
    Q: MatrixField
    N_max: float
    Q_max: float

    def identity_residual(self, A: MatrixField) -> float:
        """``max |tN tA - tQ|``, i.e. ``max |A N - Q|``."""
        return float(np.max(np.abs(A.entries @ self.N.entries - self.Q.entries)))


@dataclass(frozen=True)
class LocalErrorRecord:
    omega: tuple[tuple[float, float], tuple[float, float]]
    corr_E: float
    corr_D: float
    naive_E: float
    naive_D: float
    pairing: float
    terms: tuple[float, float, float, float]

    @property
    def expansion_sum(self) -> float:
        """``(D,E) - (D,NE) - (QE,E) + (QE,NE)`` integrated over ``omega``."""
        t1, t2, t3, t4 = self.terms
        return t1 - t2 - t3 + t4


def build_correctors(A_eps: MatrixField, A_hom, tol: float = 1e-10) -> CorrectorPair:
    from .hconv import build_quotient_via_bvp

    grid = A_eps.grid
    target = A_hom if isinstance(A_hom, MatrixField) else MatrixField.constant(grid, A_hom, "A")
    q = build_quotient_via_bvp(A_eps.transpose(), target.transpose(), tol=tol)
    N = MatrixField(grid, np.swapaxes(q.M.entries, -1, -2), "N")
    Q = MatrixField(grid, np.swapaxes(q.P.entries, -1, -2), "Q")
    return CorrectorPair(N, Q, N.max_norm(), Q.max_norm())


def _check_omega(grid, omega):
    (a1, a2), (b1, b2) = omega
    lo, hi = grid.lower, grid.upper
    if not (lo[0] < a1 < b1 < hi[0] and lo[1] < a2 < b2 < hi[1]):
        raise SubdomainNotInterior(f"subdomain {omega} is not strictly inside {lo}-{hi}")


def corrector_error(
    pair: CorrectorPair,
    E_eps: VectorField,
    D_eps: VectorField,
    E: VectorField,
    D: VectorField,
    omega=((0.25, 0.25), (0.75, 0.75)),
) -> LocalErrorRecord:
    """Corrected and naive L2 errors on ``omega`` (given as ``(lower, upper)``)."""
    grid = pair.N.grid
    if any(f.grid != grid for f in (E_eps, D_eps, E, D)):
        raise GridMismatch("corrector and fields live on different grids")
    _check_omega(grid, omega)
    (a1, a2), (b1, b2) = omega
    X1, X2 = grid.centers()
    mask = (X1 > a1) & (X1 < b1) & (X2 > a2) & (X2 < b2)

    NE = np.einsum("...ij,...j->...i", pair.N.entries, E.entries)
    QE = np.einsum("...ij,...j->...i", pair.Q.entries, E.entries)

    def norm(v):
        return cell_l2_norm(VectorField(grid, v), mask)

    def pair_int(u, v):
        return float(np.sum(np.einsum("...i,...i->...", u, v)[mask]) * grid.cell_volume)

    Ee, De = E_eps.entries, D_eps.entries
    terms = (pair_int(De, Ee), pair_int(De, NE), pair_int(QE, Ee), pair_int(QE, NE))
    return LocalErrorRecord(
        omega=tuple(tuple(float(v) for v in p) for p in omega),
        corr_E=norm(Ee - NE),
        corr_D=norm(De - QE),
        naive_E=norm(Ee - E.entries),
        naive_D=norm(De - D.entries),
        pairing=pair_int(De - QE, Ee - NE),
        terms=terms,
    )
