import numpy as np
import pytest

from cghash.data import SparseRatings, split_dataset
from cghash.mf import LatentFactors

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def record():
    """Record one acceptance outcome, print it, then assert on it."""

    def _record(n, ok, detail):
        ok = bool(ok)
        ACCEPTANCE[n] = (ok, detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_ratings():
    """40 users x 30 items, ~25% dense, with a few sparse entities."""
    g = np.random.default_rng(7)
    R = g.random((40, 30)) < 0.25
    R[35:, :] = False
    R[35:, :2] = True  # users 35..39: two ratings each
    R[:, 27:] = False
    R[:3, 27:] = True  # items 27..29: three ratings each
    u, i = np.nonzero(R)
    return SparseRatings(u, i, 40, 30)


@pytest.fixture
def small_split(small_ratings):
    return split_dataset(small_ratings, cold_threshold=5, warm_test_frac=0.2, seed=0)


@pytest.fixture
def toy_factors():
    g = np.random.default_rng(3)
    return LatentFactors(g.standard_normal((40, 8)), g.standard_normal((30, 8)))
