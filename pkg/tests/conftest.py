import sys
from pathlib import Path

import pytest

from ebfdr import LabelMap, explore, load_machine

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def corpus(name):
    return load_machine(CORPUS / f"{name}.ebm")


def pair(abstract, concrete):
    """(abstract space, concrete space, label map) for two corpus files."""
    a, c = corpus(abstract), corpus(concrete)
    return explore(a), explore(c), LabelMap.from_machines(a, c)


@pytest.fixture(scope="session")
def m0():
    return corpus("vending_m0")


@pytest.fixture(scope="session")
def m1():
    return corpus("vending_m1")


@pytest.fixture(scope="session")
def m0_space(m0):
    return explore(m0)


@pytest.fixture(scope="session")
def m1_space(m1):
    return explore(m1)


@pytest.fixture(scope="session")
def vending(m0, m1, m0_space, m1_space):
    return m0_space, m1_space, LabelMap.from_machines(m0, m1)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
