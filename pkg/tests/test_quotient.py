import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from homog.errors import DegeneratePivot, NotStratified, SingularCell
from homog.fields import Grid, MatrixField
from homog.quotient import (
    GaugeField,
    QuotientPair,
    gauge_transform,
    quotient_residuals,
    reconstruct_A,
    stratified_quotient,
)


def const(A, n=8):
    return MatrixField.constant(Grid(n), np.asarray(A, dtype=float))


def smooth_stratified(n):
    def fn(x1, x2):
        a11 = 2 + np.sin(2 * np.pi * x1)
        a12 = 0.5 * np.cos(2 * np.pi * x1)
        a21 = 0.3 * np.sin(2 * np.pi * x1)
        a22 = 3 + np.cos(2 * np.pi * x1)
        return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)

    return MatrixField.from_function(Grid(n), fn, "A")


@st.composite
def stratified_spd(draw, n=6):
    """Per-layer SPD matrices with eigenvalues in [0.2, 5], constant along x2."""
    rows = []
    for _ in range(n):
        theta = draw(st.floats(0, np.pi))
        lam = [draw(st.floats(0.2, 5.0)) for _ in range(2)]
        c, s = np.cos(theta), np.sin(theta)
        Q = np.array([[c, -s], [s, c]])
        rows.append(Q @ np.diag(lam) @ Q.T)
    layers = np.array(rows)
    return MatrixField(Grid(n), np.broadcast_to(layers[:, None], (n, n, 2, 2)), "A")


class TestStratifiedQuotient:
    def test_identity(self):
        q = stratified_quotient(const(np.eye(2)))
        np.testing.assert_array_equal(q.M.entries[0, 0], np.eye(2))
        np.testing.assert_array_equal(q.P.entries[0, 0], np.eye(2))

    def test_diagonal(self):
        q = stratified_quotient(const(np.diag([4.0, 3.0])))
        np.testing.assert_allclose(q.M.entries[0, 0], [[0.25, 0.0], [0.0, 1.0]], atol=1e-15)
        np.testing.assert_allclose(q.P.entries[0, 0], [[1.0, 0.0], [0.0, 3.0]], atol=1e-15)

    def test_full_example(self):
        A = const([[2.0, 1.0], [1.0, 3.0]])
        q = stratified_quotient(A)
        np.testing.assert_allclose(q.M.entries[2, 2], [[0.5, 0.0], [-0.5, 1.0]], atol=1e-15)
        np.testing.assert_allclose(q.P.entries[2, 2], [[1.0, 0.5], [0.0, 2.5]], atol=1e-15)
        assert q.identity_residual(A) <= 1e-15

    def test_not_stratified(self):
        g = Grid(8)
        A = MatrixField.from_function(g, lambda x1, x2: (1 + x2)[..., None, None] * np.eye(2))
        with pytest.raises(NotStratified):
            stratified_quotient(A)

    def test_degenerate_pivot(self):
        # coercive on its symmetric part is not required here; only the pivot is guarded
        with pytest.raises(DegeneratePivot):
            stratified_quotient(const([[1e-3, 1.0], [-1.0, 1.0]]), pivot_guard=1e-2)

    @settings(max_examples=40, deadline=None)
    @given(stratified_spd())
    def test_round_trip_and_det(self, A):
        q = stratified_quotient(A)
        assert q.identity_residual(A) <= 1e-13
        assert np.max(np.abs(reconstruct_A(q).entries - A.entries)) <= 1e-13
        det = np.linalg.det(q.M.entries)
        np.testing.assert_allclose(det, 1 / A.entries[..., 0, 0], rtol=1e-14)


class TestReconstruct:
    def test_identity_M(self):
        A = const([[2.0, 1.0], [0.0, 3.0]])
        q = QuotientPair(const(np.eye(2)), A, "gauge-transformed")
        np.testing.assert_allclose(reconstruct_A(q).entries, A.entries, atol=1e-15)

    def test_round_trip_example(self):
        A = const([[2.0, 1.0], [1.0, 3.0]])
        out = reconstruct_A(stratified_quotient(A))
        assert np.max(np.abs(out.entries - A.entries)) <= 1e-13

    def test_laminate_averages(self):
        q = QuotientPair(const([[0.375, 0.0], [-0.25, 1.0]]), const([[1.0, 0.25], [0.0, 1.75]]), "gauge-transformed")
        expected = [[8 / 3, 2 / 3], [2 / 3, 23 / 12]]
        np.testing.assert_allclose(reconstruct_A(q).entries[0, 0], expected, atol=1e-14)

    def test_singular(self):
        with pytest.raises(SingularCell):
            QuotientPair(const(np.zeros((2, 2))), const(np.eye(2)), "gauge-transformed")


class TestResiduals:
    def test_constant(self):
        res = quotient_residuals(stratified_quotient(const([[2.0, 1.0], [1.0, 3.0]], 16)))
        assert all(v == 0.0 for v in res.values())

    def test_stratified_smooth(self):
        # the identities are exact for x1-only coefficients; the discrete operators keep that
        for n in (64, 128):
            res = quotient_residuals(stratified_quotient(smooth_stratified(n)))
            assert res["curlM_max"] <= 1e-9 and res["divP_max"] <= 1e-9
            assert res["curlM_hminus1"] <= 1e-9 and res["divP_hminus1"] <= 1e-9


class TestGauge:
    def test_identity_gauge(self):
        A = smooth_stratified(16)
        q = stratified_quotient(A)
        out = gauge_transform(q, GaugeField.from_field(MatrixField.constant(A.grid, np.eye(2))))
        np.testing.assert_array_equal(out.M.entries, q.M.entries)
        np.testing.assert_array_equal(out.P.entries, q.P.entries)

    def test_constant_gauge(self):
        A = smooth_stratified(16)
        q = stratified_quotient(A)
        R = GaugeField.from_field(MatrixField.constant(A.grid, [[2.0, 0.0], [1.0, 1.0]]))
        out = reconstruct_A(gauge_transform(q, R))
        assert np.max(np.abs(out.entries - reconstruct_A(q).entries)) <= 1e-13

    def test_lipschitz_gauge(self):
        def residuals(n):
            A = smooth_stratified(n)
            q = stratified_quotient(A)
            R = GaugeField.from_field(MatrixField.from_function(A.grid, lambda x1, x2: _diag(1 + x1, 1 + 0 * x1)))
            qt = gauge_transform(q, R)
            assert np.max(np.abs(reconstruct_A(qt).entries - A.entries)) <= 1e-12
            return quotient_residuals(qt)

        coarse, fine = residuals(64), residuals(128)
        # curl (R M) still vanishes; div (R P) picks up R' P, which is h-independent (here = 1)
        assert fine["curlM_max"] <= 1e-9
        assert fine["divP_max"] == pytest.approx(1.0, abs=1e-9)
        assert fine["divP_hminus1"] <= 1.01 * coarse["divP_hminus1"]

    def test_recorded_bound_checked(self):
        R = MatrixField.from_function(Grid(16), lambda x1, x2: _diag(1 + 5 * x1, 1 + 0 * x1))
        with pytest.raises(ValueError):
            GaugeField(R, lipschitz=1.0)

    def test_singular_gauge(self):
        with pytest.raises(SingularCell):
            GaugeField.from_field(MatrixField.constant(Grid(8), np.zeros((2, 2))))

    @settings(max_examples=10, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
    def test_random_constant_gauges(self, vals):
        R = np.array(vals).reshape(2, 2) + 3 * np.eye(2)
        assume(abs(np.linalg.det(R)) > 0.5)
        A = smooth_stratified(8)
        q = stratified_quotient(A)
        out = reconstruct_A(gauge_transform(q, GaugeField.from_field(MatrixField.constant(A.grid, R))))
        assert np.max(np.abs(out.entries - A.entries)) <= 1e-12


def _diag(a, b):
    z = np.zeros_like(a)
    return np.stack([np.stack([a, z], -1), np.stack([z, b], -1)], -2)
