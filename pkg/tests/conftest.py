from __future__ import annotations

import pytest

from topnfair.data import Dataset
from topnfair.model import Instance, RatingMatrix, ServiceCatalog, build_original_lists

ACCEPTANCE_LINES: list[str] = []


def make_dataset(lists: dict[str, list[str]], capacities: dict[str, int], topn: int = 1, ratings=None) -> Dataset:
    """Tiny dataset where each user's ranking is given explicitly.

    Ratings descend 10, 9, 8, ... along each list unless given.
    """
    r = {}
    for u, lst in lists.items():
        for k, s in enumerate(lst):
            r[u, s] = float(ratings[u][k]) if ratings else 10.0 - k
    matrix = RatingMatrix(r)
    return Dataset(ServiceCatalog.from_mapping(capacities), matrix, build_original_lists(matrix, topn))


def make_instance(lists, capacities, topn=1, ratings=None) -> Instance:
    return make_dataset(lists, capacities, topn, ratings).instance()


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
