"""Hot loops of the iterative solver.

Two implementations of every kernel live here: a numba ``@njit`` version and a
vectorized numpy version.  The numba path is used by default; set
``HOMOG_DISABLE_NUMBA=1`` (or run without numba installed) to select numpy.
Both are deterministic: reductions run in a fixed order.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_DISABLED = os.environ.get("HOMOG_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = HAVE_NUMBA and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def csr_matvec_numpy(indptr, indices, data, x):
    # every row of an assembled stiffness matrix is non-empty, so reduceat is safe
    return np.add.reduceat(data * x[indices], indptr[:-1])


def pcg_numpy(indptr, indices, data, b, x0, dinv, atol, maxiter):
    x = x0.copy()
    r = b - csr_matvec_numpy(indptr, indices, data, x)
    res = np.sqrt(r @ r)
    it = 0
    if res <= atol:
        return x, it, res
    z = dinv * r
    p = z.copy()
    rz = r @ z
    while it < maxiter:
        ap = csr_matvec_numpy(indptr, indices, data, p)
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        it += 1
        res = np.sqrt(r @ r)
        if res <= atol:
            break
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, res


def cgnr_numpy(indptr, indices, data, t_indptr, t_indices, t_data, b, x0, dinv, atol, maxiter):
    x = x0.copy()
    r = b - csr_matvec_numpy(indptr, indices, data, x)
    res = np.sqrt(r @ r)
    it = 0
    if res <= atol:
        return x, it, res
    s = csr_matvec_numpy(t_indptr, t_indices, t_data, r)
    z = dinv * s
    p = z.copy()
    gamma = s @ z
    while it < maxiter:
        q = csr_matvec_numpy(indptr, indices, data, p)
        alpha = gamma / (q @ q)
        x += alpha * p
        r -= alpha * q
        it += 1
        res = np.sqrt(r @ r)
        if res <= atol:
            break
        s = csr_matvec_numpy(t_indptr, t_indices, t_data, r)
        z = dinv * s
        gamma_new = s @ z
        p = z + (gamma_new / gamma) * p
        gamma = gamma_new
    return x, it, res


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _matvec_into(indptr, indices, data, x, out):
        for i in range(out.shape[0]):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * x[indices[k]]
            out[i] = acc

    @njit(cache=True, nogil=True)
    def _dot(a, b):
        acc = 0.0
        for i in range(a.shape[0]):
            acc += a[i] * b[i]
        return acc

    @njit(cache=True, nogil=True)
    def csr_matvec_numba(indptr, indices, data, x):
        out = np.empty(indptr.shape[0] - 1)
        _matvec_into(indptr, indices, data, x, out)
        return out

    @njit(cache=True, nogil=True)
    def pcg_numba(indptr, indices, data, b, x0, dinv, atol, maxiter):
        n = b.shape[0]
        x = x0.copy()
        r = np.empty(n)
        _matvec_into(indptr, indices, data, x, r)
        for i in range(n):
            r[i] = b[i] - r[i]
        res = np.sqrt(_dot(r, r))
        it = 0
        if res <= atol:
            return x, it, res
        z = dinv * r
        p = z.copy()
        ap = np.empty(n)
        rz = _dot(r, z)
        while it < maxiter:
            _matvec_into(indptr, indices, data, p, ap)
            alpha = rz / _dot(p, ap)
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * ap[i]
            it += 1
            res = np.sqrt(_dot(r, r))
            if res <= atol:
                break
            for i in range(n):
                z[i] = dinv[i] * r[i]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            rz = rz_new
        return x, it, res

    @njit(cache=True, nogil=True)
    def cgnr_numba(indptr, indices, data, t_indptr, t_indices, t_data, b, x0, dinv, atol, maxiter):
        n = b.shape[0]
        x = x0.copy()
        r = np.empty(n)
        _matvec_into(indptr, indices, data, x, r)
        for i in range(n):
            r[i] = b[i] - r[i]
        res = np.sqrt(_dot(r, r))
        it = 0
        if res <= atol:
            return x, it, res
        s = np.empty(n)
        _matvec_into(t_indptr, t_indices, t_data, r, s)
        z = dinv * s
        p = z.copy()
        q = np.empty(n)
        gamma = _dot(s, z)
        while it < maxiter:
            _matvec_into(indptr, indices, data, p, q)
            alpha = gamma / _dot(q, q)
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
            it += 1
            res = np.sqrt(_dot(r, r))
            if res <= atol:
                break
            _matvec_into(t_indptr, t_indices, t_data, r, s)
            for i in range(n):
                z[i] = dinv[i] * s[i]
            gamma_new = _dot(s, z)
            beta = gamma_new / gamma
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            gamma = gamma_new
        return x, it, res


if USE_NUMBA:
    csr_matvec = csr_matvec_numba
    pcg = pcg_numba
    cgnr = cgnr_numba
else:
    csr_matvec = csr_matvec_numpy
    pcg = pcg_numpy
    cgnr = cgnr_numpy
