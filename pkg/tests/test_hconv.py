import numpy as np
import pytest

from conftest import EPSILONS, TWO_LAYER
from homog import hconv
from homog.errors import SolverDivergence, UnderResolved
from homog.fields import Grid, MatrixField, VectorField
from homog.hconv import (
    REPORT_COLUMNS,
    StudyConfig,
    StudyFailed,
    build_quotient_via_bvp,
    divcurl_check,
    divcurl_controls,
    hconvergence_study,
    quotient_identity_residual,
    worker_count,
)
from homog.oscillation import PeriodicProfile, TestFunctionFamily, sample_oscillating, weak_pairing_errors
from homog.quotient import quotient_residuals

CONSTANT = PeriodicProfile.constant([[2.0, 0.5], [0.5, 3.0]])


class TestBVPQuotient:
    def test_constant_reproduces_identity(self):
        g = Grid(16)
        A = np.array([[2.0, 0.5], [-0.3, 3.0]])
        q = build_quotient_via_bvp(MatrixField.constant(g, A), A)
        assert np.max(np.abs(q.M.entries - np.eye(2))) <= 1e-10
        assert np.max(np.abs(q.P.entries - A)) <= 1e-10
        assert q.source == "bvp"

    def test_identity_by_construction(self):
        g = Grid(64)
        A_eps = sample_oscillating(TWO_LAYER, 1 / 8, g)
        q = build_quotient_via_bvp(A_eps, np.diag([1.6, 2.5]))
        assert q.identity_residual(A_eps) <= 1e-13

    def test_weak_rate(self):
        g = Grid(256)
        target = np.diag([1.6, 2.5])
        pairs = [(e, build_quotient_via_bvp(sample_oscillating(TWO_LAYER, e, g), target)) for e in (1 / 4, 1 / 8)]
        fam = TestFunctionFamily()
        wm = weak_pairing_errors([(e, q.M) for e, q in pairs], np.eye(2), fam).worst()
        wp = weak_pairing_errors([(e, q.P) for e, q in pairs], target, fam).worst()
        assert wm[1] <= 0.65 * wm[0]
        assert wp[1] <= 0.65 * wp[0]

    def test_residual_proxies(self):
        # curl M vanishes weakly; div P is a discretization artifact, small and shrinking with h
        target = np.diag([1.6, 2.5])
        res = {}
        for n in (128, 256):
            q = build_quotient_via_bvp(sample_oscillating(TWO_LAYER, 1 / 8, Grid(n)), target)
            res[n] = quotient_residuals(q)
            assert res[n]["curlM_hminus1"] <= 1e-10
            assert res[n]["divP_hminus1"] <= 0.01 * np.sqrt(np.mean(np.sum(q.P.entries**2, axis=(-1, -2))))
        assert res[256]["divP_hminus1"] < res[128]["divP_hminus1"]


class TestDivCurl:
    def test_constant_fields(self):
        g = Grid(16)
        f = VectorField.constant(g, [1.0, 2.0])
        h = VectorField.constant(g, [3.0, -1.0])
        table = divcurl_check([(0.5, f), (0.25, f)], [(0.5, h), (0.25, h)], f, h, TestFunctionFamily())
        assert np.all(table.values == 0.0)

    def test_controls(self):
        bench = divcurl_controls(Grid(256), EPSILONS)
        assert np.all(bench.positive.ratios() <= 0.65)
        np.testing.assert_allclose(bench.negative_mean, 0.5, atol=0.02)
        # curl of the positive g is identically zero, the negative one stays O(1)
        assert np.all(bench.positive_curl_hminus1 <= 1e-12)
        assert np.all(bench.negative_curl_hminus1 > 0.5)

    def test_eps_mismatch(self):
        g = Grid(8)
        f = VectorField.constant(g, [1.0, 0.0])
        with pytest.raises(ValueError):
            divcurl_check([(0.5, f)], [(0.25, f)], f, f, TestFunctionFamily())


class TestStudyConfig:
    def test_under_resolved(self):
        with pytest.raises(UnderResolved):
            StudyConfig(TWO_LAYER, EPSILONS, n_cells=64)

    def test_not_decreasing(self):
        with pytest.raises(ValueError):
            StudyConfig(TWO_LAYER, (1 / 4, 1 / 4), n_cells=64)

    def test_not_reciprocal(self):
        with pytest.raises(ValueError):
            StudyConfig(TWO_LAYER, (0.3,), n_cells=64)

    def test_unknown_source(self):
        with pytest.raises(ValueError):
            StudyConfig(TWO_LAYER, (1 / 4,), n_cells=64, source="other")


class TestStudy:
    def test_constant_profile(self):
        rep = hconvergence_study(StudyConfig(CONSTANT, (1 / 4, 1 / 8), n_cells=32, lift="x1+x2"))
        for name in REPORT_COLUMNS[1:]:
            assert np.all(rep.column(name) <= 1e-9), name

    def test_two_layer_decay(self, two_layer_study):
        rep = two_layer_study
        np.testing.assert_allclose(rep.laminate.A_hom, np.diag([1.6, 2.5]), atol=1e-12)
        for name in ("l2_u_err", "weak_E_err", "weak_D_err"):
            col = rep.column(name)
            assert np.all(col[1:] <= 0.7 * col[:-1]), (name, col)
        for name in ("weak_M_err", "weak_P_err"):
            col = rep.column(name)
            assert np.all(col[1:] <= 0.65 * col[:-1]), (name, col)

    def test_identity_and_curl(self, two_layer_study):
        assert np.all(two_layer_study.column("identity_residual") <= 1e-13)
        assert np.all(two_layer_study.column("curlE_max") <= 1e-9)
        assert np.all(two_layer_study.column("curlE_hminus1") <= 1e-9)

    def test_hminus1_div_D_is_eps_independent(self, manufactured_study):
        col = manufactured_study.column("hminus1_divD")
        f_norm = manufactured_study.hminus1_f
        assert f_norm > 1.0
        assert np.all(np.abs(col - f_norm) <= 0.01 * f_norm)

    def test_rows_in_eps_order(self, two_layer_study):
        rows = two_layer_study.rows()
        assert [r[0] for r in rows] == list(EPSILONS)
        assert all(len(r) == len(REPORT_COLUMNS) == 12 for r in rows)

    def test_identity_residual_helper(self):
        g = Grid(32)
        A_eps = sample_oscillating(TWO_LAYER, 1 / 4, g)
        q = build_quotient_via_bvp(A_eps, np.diag([1.6, 2.5]))
        rng = np.random.default_rng(0)
        E = VectorField(g, rng.normal(size=g.cell_shape + (2,)))
        D = VectorField(g, np.einsum("...ij,...j->...i", A_eps.entries, E.entries))
        assert quotient_identity_residual(q, E, D) <= 1e-13

    def test_thread_count_does_not_change_results(self, monkeypatch):
        cfg = StudyConfig(TWO_LAYER, (1 / 4, 1 / 8), n_cells=64, with_correctors=False)
        monkeypatch.setenv("HOMOG_THREADS", "1")
        one = hconvergence_study(cfg).rows()
        monkeypatch.setenv("HOMOG_THREADS", "3")
        three = hconvergence_study(cfg).rows()
        np.testing.assert_array_equal(np.array(one), np.array(three))

    def test_partial_report_on_failure(self, monkeypatch):
        real = hconv.sample_oscillating

        def failing(profile, eps, grid):
            if eps == 1 / 8:
                raise SolverDivergence("forced", 1, 1.0)
            return real(profile, eps, grid)

        monkeypatch.setattr(hconv, "sample_oscillating", failing)
        cfg = StudyConfig(TWO_LAYER, (1 / 4, 1 / 8), n_cells=64, with_correctors=False)
        with pytest.raises(StudyFailed) as info:
            hconvergence_study(cfg)
        assert [r.epsilon for r in info.value.report.records] == [0.25]
        assert isinstance(info.value.cause, SolverDivergence)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("HOMOG_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("HOMOG_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("HOMOG_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("HOMOG_THREADS", "many")
    assert worker_count() == 1
