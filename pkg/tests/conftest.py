from __future__ import annotations

import numpy as np
import pytest

from opinionmax import Graph, OpinionModel
from opinionmax.harness import build_model, gen_er_graph

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    num, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _criteria[num] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status, detail = _criteria[num]
        line = f"{status} criterion {num}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)


@pytest.fixture
def two_cycle():
    g = Graph.from_edges([0, 1], [1, 0], directed=True)
    m = OpinionModel(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    return g, m


@pytest.fixture
def small_instance():
    g = gen_er_graph(40, 4, seed=3)
    return g, build_model(g.n, "uniform", 0.01, seed=3)


@pytest.fixture
def directed_instance():
    g = gen_er_graph(30, 3, seed=5, directed=True)
    return g, build_model(g.n, "exponential", 0.05, seed=5)
