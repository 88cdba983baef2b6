import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from homog import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


def laplacian(n):
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))
    K = (sp.kron(T, sp.eye(n)) + sp.kron(sp.eye(n), T)).tocsr()
    K.sort_indices()
    return K


def nonsymmetric(n):
    K = laplacian(n) + 0.3 * sp.diags([-1.0, 1.0], [-1, 1], shape=(n * n, n * n))
    K = K.tocsr()
    K.sort_indices()
    return K


def run_pcg(pcg, K, b, atol=1e-10):
    return pcg(K.indptr, K.indices, K.data, b, np.zeros_like(b), 1.0 / K.diagonal(), atol, 10_000)


def run_cgnr(cgnr, K, b, atol=1e-10):
    KT = K.T.tocsr()
    KT.sort_indices()
    dinv = 1.0 / np.asarray(K.multiply(K).sum(axis=0)).ravel()
    return cgnr(K.indptr, K.indices, K.data, KT.indptr, KT.indices, KT.data, b, np.zeros_like(b), dinv, atol, 50_000)


def test_matvec_numpy():
    K = nonsymmetric(7)
    x = np.random.default_rng(0).normal(size=K.shape[0])
    np.testing.assert_allclose(_kernels.csr_matvec_numpy(K.indptr, K.indices, K.data, x), K @ x, atol=1e-13)


def test_pcg_numpy_matches_direct():
    K = laplacian(20)
    b = np.random.default_rng(1).normal(size=K.shape[0])
    x, it, res = run_pcg(_kernels.pcg_numpy, K, b)
    assert res <= 1e-10
    np.testing.assert_allclose(x, spla.spsolve(K.tocsc(), b), atol=1e-8)


def test_cgnr_numpy_matches_direct():
    K = nonsymmetric(10)
    b = np.random.default_rng(2).normal(size=K.shape[0])
    x, it, res = run_cgnr(_kernels.cgnr_numpy, K, b)
    assert res <= 1e-10
    np.testing.assert_allclose(x, spla.spsolve(K.tocsc(), b), atol=1e-8)


def test_zero_rhs_returns_immediately():
    K = laplacian(5)
    x, it, res = run_pcg(_kernels.pcg, K, np.zeros(K.shape[0]))
    assert it == 0 and res == 0.0 and not x.any()


@needs_numba
def test_numba_matches_numpy():
    K = laplacian(24)
    b = np.random.default_rng(3).normal(size=K.shape[0])
    xn, itn, _ = run_pcg(_kernels.pcg_numba, K, b)
    xp, itp, _ = run_pcg(_kernels.pcg_numpy, K, b)
    assert abs(itn - itp) <= 1
    np.testing.assert_allclose(xn, xp, atol=1e-9)
    x = np.arange(K.shape[0], dtype=float)
    np.testing.assert_allclose(
        _kernels.csr_matvec_numba(K.indptr, K.indices, K.data, x), K @ x, atol=1e-12
    )


@needs_numba
def test_numba_cgnr_matches_numpy():
    K = nonsymmetric(8)
    b = np.random.default_rng(4).normal(size=K.shape[0])
    xn, _, _ = run_cgnr(_kernels.cgnr_numba, K, b)
    xp, _, _ = run_cgnr(_kernels.cgnr_numpy, K, b)
    np.testing.assert_allclose(xn, xp, atol=1e-8)


def test_env_flag_selects_numpy():
    env = dict(os.environ, HOMOG_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from homog import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
