"""H-convergence verification: quotient pairs from boundary-value problems,
convergence studies over an epsilon list, and div-curl pairing checks.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .correctors import build_correctors, corrector_error
from .elliptic import (
    EllipticProblem,
    dual_norm,
    flux,
    flux_divergence_load,
    gradient,
    l2_norm,
    solve_dirichlet,
)
from .errors import HomogError, UnderResolved
from .fields import (
    Grid,
    MatrixField,
    ScalarField,
    VectorField,
    check_ellipticity,
    hminus1_curl,
    hminus1_estimate,
    staggered_curl,
)
from .oscillation import (
    HomogenizedLaminate,
    PeriodicProfile,
    TestFunctionFamily,
    WeakErrorTable,
    homogenized_laminate,
    reciprocal_index,
    sample_oscillating,
    weak_pairing_errors,
)
from .quotient import QuotientPair, stratified_quotient

log = logging.getLogger(__name__)

SOURCES = ("zero-affine", "manufactured")
LIFTS = {
    "x1": lambda x1, x2: x1,
    "x1+x2": lambda x1, x2: x1 + x2,
}


def worker_count() -> int:
    """Worker threads for independent solves, capped by ``HOMOG_THREADS``."""
    raw = os.environ.get("HOMOG_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring HOMOG_THREADS=%r (not an integer)", raw)
        return 1


def _as_matrix_field(A, grid: Grid) -> MatrixField:
    if isinstance(A, MatrixField):
        return A
    return MatrixField.constant(grid, np.asarray(A, dtype=float), "A")


def _solve_bvp_family(A_eps: MatrixField, A_target, tol: float):
    """``u_i`` with ``div(A_eps^T grad u_i) = div(A_target^T e_i)``, ``u_i = x_i`` on the boundary."""
    grid = A_eps.grid
    target = _as_matrix_field(A_target, grid)
    coeff = A_eps.transpose()
    nodes = grid.nodes()
    reports = []
    for i in range(grid.ndim):
        # div(A^T e_i) has components A_ik; moved to the right-hand side as -div(F), F = -A[i, :]
        F = VectorField(grid, -target.entries[..., i, :])
        lift = ScalarField(grid, nodes[i], "node")
        reports.append(solve_dirichlet(EllipticProblem(coeff, div_source=F, lift=lift), tol=tol))
    return reports


def build_quotient_via_bvp(A_eps: MatrixField, A_target, tol: float = 1e-10) -> QuotientPair:
    """Pair ``(M_eps, P_eps)`` with row ``i`` of ``M_eps`` the gradient of ``u_i``.

    ``P_eps = M_eps A_eps``.  ``A_target`` is the (known) H-limit; a constant
    may be passed as a plain array.
    """
    check_ellipticity(A_eps)
    reports = _solve_bvp_family(A_eps, A_target, tol)
    M = np.stack([gradient(r.u).entries for r in reports], axis=-2)
    P = M @ A_eps.entries
    return QuotientPair(MatrixField(A_eps.grid, M, "M"), MatrixField(A_eps.grid, P, "P"), "bvp")


def quotient_identity_residual(q: QuotientPair, E: VectorField, D: VectorField) -> float:
    """``max |M D - P E|`` cellwise; zero up to rounding whenever ``D = A E`` and ``M A = P``."""
    MD = np.einsum("...ij,...j->...i", q.M.entries, D.entries)
    PE = np.einsum("...ij,...j->...i", q.P.entries, E.entries)
    return float(np.max(np.abs(MD - PE)))


def _dot(f: VectorField, g: VectorField) -> ScalarField:
    return ScalarField(f.grid, np.einsum("...i,...i->...", f.entries, g.entries), "cell")


def divcurl_check(f_seq, g_seq, f: VectorField, g: VectorField, family: TestFunctionFamily) -> WeakErrorTable:
    """Weak errors of the scalar products ``(f_eps, g_eps)`` against ``(f, g)``.

    ``f_seq`` and ``g_seq`` are lists of ``(eps, VectorField)`` in the same
    epsilon order.
    """
    f_seq, g_seq = list(f_seq), list(g_seq)
    if [e for e, _ in f_seq] != [e for e, _ in g_seq]:
        raise ValueError("f and g sequences must use the same epsilons")
    products = [(e, _dot(fe, ge)) for (e, fe), (_, ge) in zip(f_seq, g_seq)]
    return weak_pairing_errors(products, _dot(f, g), family)


@dataclass(frozen=True, eq=False)
class DivCurlBench:
    positive: WeakErrorTable
    negative: WeakErrorTable
    negative_mean: np.ndarray        # int (f_eps, g_eps) dx for the negative control
    positive_curl_hminus1: np.ndarray
    negative_curl_hminus1: np.ndarray


def divcurl_controls(grid: Grid, epsilons, family: TestFunctionFamily | None = None) -> DivCurlBench:
    """Positive and negative controls for the div-curl lemma.

    Oscillations are ``eps``-periodic: ``s(y) = sin(2 pi y / eps)``.
    Positive: ``f = (s(x2), 0)`` (div-free), ``g = (s(x1), 0)`` (curl-free).
    Negative: ``f = g = (0, s(x1))``; ``curl g`` is not compact and the
    products converge weakly to 1/2 instead of 0.
    """
    family = family or TestFunctionFamily()
    X1, X2 = grid.centers()
    zero = VectorField.constant(grid, np.zeros(2))
    pos_f, pos_g, neg = [], [], []
    pos_curl, neg_curl = [], []
    for eps in epsilons:
        s1 = np.sin(2 * np.pi * X1 / eps)
        s2 = np.sin(2 * np.pi * X2 / eps)
        fe = VectorField(grid, np.stack([s2, 0 * s2], axis=-1))
        ge = VectorField(grid, np.stack([s1, 0 * s1], axis=-1))
        ne = VectorField(grid, np.stack([0 * s1, s1], axis=-1))
        pos_f.append((eps, fe))
        pos_g.append((eps, ge))
        neg.append((eps, ne))
        pos_curl.append(hminus1_curl(ge))
        neg_curl.append(hminus1_curl(ne))
    negative = divcurl_check(neg, neg, zero, zero, family)
    means = np.array([np.sum(ne.entries[..., 1] ** 2) * grid.cell_volume for _, ne in neg])
    return DivCurlBench(
        divcurl_check(pos_f, pos_g, zero, zero, family),
        negative,
        means,
        np.array(pos_curl),
        np.array(neg_curl),
    )


# ------------------------------------------------------------------- studies

class StudyFailed(HomogError):
    """A numerical failure part-way through a study; ``report`` holds the finished epsilons."""

    def __init__(self, message, report, epsilon, cause):
        super().__init__(message)
        self.report = report
        self.epsilon = epsilon
        self.cause = cause


@dataclass(frozen=True, eq=False)
class StudyConfig:
    profile: PeriodicProfile
    epsilons: tuple[float, ...]
    n_cells: int = 256
    source: str = "zero-affine"
    lift: str = "x1"
    family: TestFunctionFamily = field(default_factory=TestFunctionFamily)
    subdomain: tuple[tuple[float, float], tuple[float, float]] = ((0.25, 0.25), (0.75, 0.75))
    tol: float = 1e-10
    with_quotient: bool = True
    with_correctors: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValueError("epsilons: empty list")
        for e in eps:
            reciprocal_index(e)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"epsilons: must be strictly decreasing, got {list(eps)}")
        object.__setattr__(self, "epsilons", eps)
        if self.source not in SOURCES:
            raise ValueError(f"source: must be one of {SOURCES}")
        if self.lift not in LIFTS:
            raise ValueError(f"lift: must be one of {tuple(LIFTS)}")
        need = min(eps) * self.profile.min_fraction / 4
        if 1.0 / self.n_cells > need * (1 + 1e-12):
            raise UnderResolved(f"n_cells = {self.n_cells} does not resolve eps = {min(eps)} (need h <= {need:.4g})")

    @property
    def grid(self) -> Grid:
        return Grid(self.n_cells)


@dataclass
class EpsilonRecord:
    epsilon: float
    l2_u_err: float
    weak_E_err: float
    weak_D_err: float
    weak_M_err: float
    weak_P_err: float
    divcurl_err: float
    corr_E_err: float
    corr_D_err: float
    naive_E_err: float
    naive_D_err: float
    hminus1_divD: float
    # diagnostics beyond the CSV columns
    identity_residual: float = float("nan")
    curlE_max: float = float("nan")
    curlE_hminus1: float = float("nan")
    corr_pairing: float = float("nan")
    N_max: float = float("nan")
    Q_max: float = float("nan")
    iterations: int = 0


REPORT_COLUMNS = tuple(f.name for f in fields(EpsilonRecord))[:12]


@dataclass
class ConvergenceReport:
    laminate: HomogenizedLaminate
    records: list[EpsilonRecord]
    hminus1_f: float
    config: StudyConfig | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def rows(self) -> list[tuple[float, ...]]:
        return [tuple(getattr(r, c) for c in REPORT_COLUMNS) for r in self.records]


def _forward_data(cfg: StudyConfig, A_hom: np.ndarray):
    grid = cfg.grid
    lift = ScalarField.from_function(grid, LIFTS[cfg.lift], "node")
    if cfg.source == "zero-affine":
        return None, lift
    a = A_hom
    pi2 = np.pi**2

    def f(x1, x2):
        s = np.sin(np.pi * x1) * np.sin(np.pi * x2)
        c = np.cos(np.pi * x1) * np.cos(np.pi * x2)
        return pi2 * ((a[0, 0] + a[1, 1]) * s - (a[0, 1] + a[1, 0]) * c)

    # -div(A_hom grad u) = f for u = sin(pi x1) sin(pi x2) + affine lift
    return ScalarField.from_function(grid, f, "cell"), lift


def hconvergence_study(cfg: StudyConfig) -> ConvergenceReport:
    """Run the forward, quotient and corrector checks for every epsilon.

    The homogenized solve uses the closed-form laminate tensor; every
    epsilon shares the same mesh, source and lift.
    """
    grid = cfg.grid
    lam = homogenized_laminate(cfg.profile)
    A_hom = lam.as_field(grid)
    f, lift = _forward_data(cfg, lam.A_hom)
    hom = solve_dirichlet(EllipticProblem(A_hom, source=f, lift=lift), tol=cfg.tol)
    E = gradient(hom.u)
    D = flux(A_hom, hom.u)
    hminus1_f = hminus1_estimate(f) if f is not None else 0.0

    def one(eps: float):
        A_eps = sample_oscillating(cfg.profile, eps, grid)
        rep = solve_dirichlet(EllipticProblem(A_eps, source=f, lift=lift), tol=cfg.tol)
        E_eps = gradient(rep.u)
        D_eps = flux(A_eps, rep.u)
        diff = ScalarField(grid, rep.u.values - hom.u.values, "node")
        rec = dict(
            epsilon=eps,
            l2_u_err=l2_norm(diff),
            iterations=rep.iterations,
            hminus1_divD=dual_norm(grid, flux_divergence_load(A_eps, rep.u)),
            curlE_max=float(np.max(np.abs(staggered_curl(E_eps)))),
            curlE_hminus1=hminus1_curl(E_eps),
        )
        residuals = [quotient_identity_residual(stratified_quotient(A_eps), E_eps, D_eps)]
        if cfg.with_quotient:
            q = build_quotient_via_bvp(A_eps, A_hom, tol=cfg.tol)
            residuals.append(quotient_identity_residual(q, E_eps, D_eps))
            rec["weak_M_err"] = q.M
            rec["weak_P_err"] = q.P
        if cfg.with_correctors:
            pair = build_correctors(A_eps, A_hom, tol=cfg.tol)
            local = corrector_error(pair, E_eps, D_eps, E, D, cfg.subdomain)
            rec.update(
                corr_E_err=local.corr_E,
                corr_D_err=local.corr_D,
                naive_E_err=local.naive_E,
                naive_D_err=local.naive_D,
                corr_pairing=local.expansion_sum,
                N_max=pair.N_max,
                Q_max=pair.Q_max,
            )
        rec["identity_residual"] = max(residuals)
        return rec, E_eps, D_eps

    results, failure = [], None
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        futures = [(eps, pool.submit(one, eps)) for eps in cfg.epsilons]
        for eps, fut in futures:
            try:
                res = fut.result()
            except HomogError as exc:
                failure = (eps, exc)
                for _, pending in futures:
                    pending.cancel()
                break
            results.append(res)
    if failure is not None:
        report = _aggregate(cfg, lam, E, D, hminus1_f, results) if results else ConvergenceReport(lam, [], hminus1_f, cfg)
        raise StudyFailed(f"eps = {failure[0]:g}: {failure[1]}", report, failure[0], failure[1])
    return _aggregate(cfg, lam, E, D, hminus1_f, results)


def _aggregate(cfg, lam, E, D, hminus1_f, results) -> ConvergenceReport:
    fam = cfg.family
    weak_E = weak_pairing_errors([(r["epsilon"], Ee) for r, Ee, _ in results], E, fam).worst()
    weak_D = weak_pairing_errors([(r["epsilon"], De) for r, _, De in results], D, fam).worst()
    pairing = divcurl_check(
        [(r["epsilon"], De) for r, _, De in results],
        [(r["epsilon"], Ee) for r, Ee, _ in results],
        D,
        E,
        fam,
    ).worst()
    if cfg.with_quotient:
        weak_M = weak_pairing_errors([(r["epsilon"], r["weak_M_err"]) for r, _, _ in results], np.eye(2), fam).worst()
        weak_P = weak_pairing_errors([(r["epsilon"], r["weak_P_err"]) for r, _, _ in results], lam.A_hom, fam).worst()
    else:
        weak_M = weak_P = np.full(len(results), np.nan)

    records = []
    for k, (rec, _, _) in enumerate(results):
        rec.update(
            weak_E_err=float(weak_E[k]),
            weak_D_err=float(weak_D[k]),
            divcurl_err=float(pairing[k]),
            weak_M_err=float(weak_M[k]),
            weak_P_err=float(weak_P[k]),
        )
        for name in ("corr_E_err", "corr_D_err", "naive_E_err", "naive_D_err"):
            rec.setdefault(name, float("nan"))
        records.append(EpsilonRecord(**rec))
        log.info("eps=%g: l2_u_err=%.3e weak_D_err=%.3e", rec["epsilon"], rec["l2_u_err"], rec["weak_D_err"])
    return ConvergenceReport(lam, records, hminus1_f, cfg)
