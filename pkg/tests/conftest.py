import itertools
import sys

import pytest
from hypothesis import strategies as st

from homogen.amalgamation import PriorityOrder
from homogen.core import CompleteStructure, Language
from homogen.fraisse import SaturationBudget, build_tower
from homogen.presets import cherlin, cherlin_language

LANG = cherlin_language()


@pytest.fixture(scope="session")
def lang():
    return LANG


@pytest.fixture(scope="session")
def t8():
    return cherlin(8)


@pytest.fixture(scope="session")
def rr():
    return PriorityOrder.parse(LANG, "R+ > R-")


@pytest.fixture(scope="session")
def tower8(t8, rr):
    """A saturated #8 stage; tests that grow it must work on a copy."""
    return build_tower(t8, rr, SaturationBudget(max_vertices=40, max_base=1))


@pytest.fixture(scope="session")
def tower8_large(t8, rr):
    return build_tower(t8, rr, SaturationBudget(max_vertices=60, max_base=1))


def structure_from_codes(language: Language, n: int, codes) -> CompleteStructure:
    edges = {(i, j): c for (i, j), c in zip(itertools.combinations(range(n), 2), codes)}
    return CompleteStructure.from_edges(language, range(n), edges)


@st.composite
def structures(draw, min_size=0, max_size=5, language=LANG):
    n = draw(st.integers(min_size, max_size))
    codes = draw(st.lists(st.integers(0, language.n_colors - 1), min_size=n * (n - 1) // 2,
                          max_size=n * (n - 1) // 2))
    return structure_from_codes(language, n, codes)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "summary_lines", None)
    if results is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in results():
        terminalreporter.write_line(line)
