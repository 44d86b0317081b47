from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mhd_contact.grid import SlabGrid

settings.register_profile("repo", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def grid2():
    return SlabGrid(dim=2, n_tangential=32, n_normal=16)


@pytest.fixture
def grid3():
    return SlabGrid(dim=3, n_tangential=16, n_normal=12)


def phase_pair(grid, minus, plus):
    """Scalar field equal to ``minus`` / ``plus`` in the two phases."""
    out = np.empty(grid.scalar_shape)
    out[0] = minus
    out[1] = plus
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
