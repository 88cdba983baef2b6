"""Time the numba and numpy solver kernels on laminate stiffness systems.

    python benchmarks/bench_kernels.py --sizes 64 128 256 --repeat 3
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from homog import _kernels
from homog.elliptic import EllipticProblem, assemble
from homog.fields import Grid, ScalarField
from homog.oscillation import PeriodicProfile, sample_oscillating

PROFILE = PeriodicProfile.layered([(0.5, np.eye(2)), (0.5, 4 * np.eye(2))])


def system(n: int):
    g = Grid(n)
    A = sample_oscillating(PROFILE, 1 / 8, g)
    lift = ScalarField.from_function(g, lambda x1, x2: x1, "node")
    return assemble(EllipticProblem(A, lift=lift))


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'N':>5} {'unknowns':>9} {'iters':>6} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max|dx|':>9}")
    for n in args.sizes:
        s = system(n)
        K = s.K_ii
        dinv = 1.0 / K.diagonal()
        atol = 1e-10 * np.linalg.norm(s.rhs)
        call = (K.indptr, K.indices, K.data, s.rhs, np.zeros_like(s.rhs), dinv, atol, 20 * n)
        _kernels.pcg_numba(*call)  # compile outside the timed region
        x_np, it, _ = _kernels.pcg_numpy(*call)
        x_nb, _, _ = _kernels.pcg_numba(*call)
        t_np = best_of(lambda: _kernels.pcg_numpy(*call), args.repeat)
        t_nb = best_of(lambda: _kernels.pcg_numba(*call), args.repeat)
        diff = float(np.max(np.abs(x_np - x_nb)))
        print(f"{n:>5} {K.shape[0]:>9} {it:>6} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
