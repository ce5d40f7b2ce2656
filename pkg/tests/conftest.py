from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import pytest

from ocdensity import ModelParams, SolverConfig, build_partition, rescale, sample_truncated_normal, solve
from ocdensity.data import SampleSet

DATA = Path(__file__).resolve().parents[1] / "data"

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def order(key):
        m = re.match(r"(\d+)(.*)", key)
        return int(m.group(1)), m.group(2)

    for key in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def example1_samples() -> SampleSet:
    """n = 100 draws of N(0.5, 0.01) on [0, 1], seed 0."""
    return rescale(sample_truncated_normal(100, 0.5, 0.01, seed=0), domain=(0.0, 1.0))


@pytest.fixture(scope="session")
def pair_samples() -> SampleSet:
    return SampleSet(np.array([0.3, 0.7]))


@pytest.fixture(scope="session")
def pair_solution(pair_samples):
    grid = build_partition(pair_samples, 1 / 2000)
    params = ModelParams(alpha=1.0, beta=1.0)
    return solve(pair_samples, grid, params, SolverConfig())


@pytest.fixture(scope="session")
def example1_solutions(example1_samples):
    grid = build_partition(example1_samples, 1 / 2000)
    return {
        a: solve(example1_samples, grid, ModelParams(alpha=a), SolverConfig())
        for a in (3.0, 1.0, 0.1, 0.01)
    }
