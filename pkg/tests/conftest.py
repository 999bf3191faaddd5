import numpy as np
import pytest

from liqgame import ILLUSTRATION_PARAMS, BASE_SIGNAL, STUDY_PARAMS, build_time_grid, simulate_ou

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, title: str, ok: bool, detail: str = "") -> None:
    """Store one acceptance verdict; all verdicts are printed in the terminal summary."""
    line = f"[criterion {criterion:2d}] {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def illustration_params():
    return ILLUSTRATION_PARAMS


@pytest.fixture
def study_params():
    return STUDY_PARAMS


@pytest.fixture
def study_signals():
    grid = build_time_grid(STUDY_PARAMS.horizon, 100)
    return simulate_ou(BASE_SIGNAL, grid, seed=3, n_paths=40)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
