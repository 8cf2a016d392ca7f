import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from flatreg.spatial import SpatialDataset  # noqa: E402


def small_dataset(n=30, p=2, seed=0, noise=0.1):
    """Two-region piecewise-constant coefficients split on x1 = 0.5."""
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    X = np.column_stack([rng.normal(size=(n, p - 1)), np.ones(n)])
    left = coords[:, 0] < 0.5
    B = np.where(left[:, None], 1.0, 3.0) * np.arange(1, p + 1)[None, :]
    y = np.einsum("ik,ik->i", X, B) + noise * rng.normal(size=n)
    return SpatialDataset(coords, X, y), B


@pytest.fixture
def ds_small():
    return small_dataset()


_ACCEPTANCE = {}


def record_acceptance(num, ok, detail):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _ACCEPTANCE[num] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for num in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[num])
