import math

import numpy as np
import pytest

from crnhj.ldp import example_domain, example_network

ACCEPTANCE_LINES: list[str] = []


def record(label: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def net():
    return example_network()


@pytest.fixture
def dom():
    return example_domain()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SQRT2 = math.sqrt(2.0)
