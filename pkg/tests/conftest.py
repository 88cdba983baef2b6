import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from homog.hconv import StudyConfig, hconvergence_study
from homog.oscillation import PeriodicProfile

TWO_LAYER = PeriodicProfile.layered([(0.5, np.eye(2)), (0.5, 4 * np.eye(2))])
OFF_DIAGONAL = PeriodicProfile.layered(
    [(0.5, np.array([[2.0, 1.0], [1.0, 3.0]])), (0.5, np.array([[4.0, 0.0], [0.0, 1.0]]))]
)
EPSILONS = (1 / 4, 1 / 8, 1 / 16)


def random_spd(rng, n=2, low=0.5, high=4.0):
    """Random symmetric matrix with eigenvalues in ``[low, high]``."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q @ np.diag(rng.uniform(low, high, size=n)) @ q.T


def cell_problem(profile, points=10_000):
    """Effective tensor from the periodic 1-D cell problem, finite volumes on ``points`` cells.

    For each ``e_j`` find periodic ``chi`` with constant flux ``A_1j + A_11 chi'``;
    then ``A_hom e_j`` is the mean of ``A (e_j + chi' e_1)``.
    """
    t = (np.arange(points) + 0.5) / points
    A = profile(t)
    h = 1.0 / points
    n = A.shape[-1]
    out = np.zeros((n, n))
    for j in range(n):
        # unknowns chi_0..chi_{K-1} at cell interfaces; flux q_k on cell k uses chi_{k+1} - chi_k
        a = A[:, 0, 0] / h
        k = np.arange(points)
        nxt = (k + 1) % points
        rows = np.concatenate([k, k, nxt, nxt])
        cols = np.concatenate([k, nxt, k, nxt])
        vals = np.concatenate([a, -a, -a, a])
        K = sp.csr_matrix((vals, (rows, cols)), shape=(points, points)).tolil()
        rhs = np.zeros(points)
        np.add.at(rhs, k, A[:, 0, j])
        np.add.at(rhs, nxt, -A[:, 0, j])
        K[0, :] = 0
        K[0, 0] = 1
        rhs[0] = 0
        chi = spla.spsolve(K.tocsr(), rhs)
        dchi = (chi[nxt] - chi) / h
        out[:, j] = np.mean(A[:, :, j] + A[:, :, 0] * dchi[:, None], axis=0)
    return out


@pytest.fixture(scope="session")
def two_layer_study():
    """The N = 256 laminate study with zero source and lift x1."""
    return hconvergence_study(StudyConfig(TWO_LAYER, EPSILONS, n_cells=256))


@pytest.fixture(scope="session")
def manufactured_study():
    """Same laminate, manufactured source; exercises the correctors non-trivially."""
    cfg = StudyConfig(TWO_LAYER, EPSILONS, n_cells=256, source="manufactured", with_quotient=False)
    return hconvergence_study(cfg)


# ------------------------------------------------------------ acceptance log

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    """Print and keep one PASS/FAIL line; shown again in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
