import numpy as np
import pytest

from camgraph.geometry import CameraPose
from camgraph.quadrant import random_unit_vectors


def make_poses(P, D=None):
    P = np.asarray(P, dtype=np.float64)
    if D is None:
        D = np.tile([0.0, 0.0, 1.0], (len(P), 1))
    return [CameraPose(k + 1, f"{k + 1:04d}.png", tuple(P[k]), tuple(D[k])) for k in range(len(P))]


def random_poses(n, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0.0, scale, size=(n, 3))
    return make_poses(P, random_unit_vectors(rng, n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        passed, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
