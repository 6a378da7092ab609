import math

import numpy as np
import pytest

from qkmeans.cli import generate_points
from qkmeans.core import normalize_dataset

ACCEPTANCE_LINES = []


def binomial_sigma(p, n):
    return math.sqrt(p * (1.0 - p) / n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def planted():
    """Two gaussian blobs of 10 points, spread 0.1, means 10 apart."""
    return normalize_dataset(generate_points("gaussian-mixture", seed=0, n=20, d=2, clusters=2, separation=10.0, spread=0.1))


@pytest.fixture
def criterion():
    def record(number, title, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
