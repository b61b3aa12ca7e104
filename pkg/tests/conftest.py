import numpy as np
import pytest

from evsim.road_network import RoadGraph


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4) -> RoadGraph:
    """Small random graph; edge lengths are at least the straight-line distance."""
    xy = rng.uniform(0, 5, size=(n, 2))
    nodes = [(i, *xy[i]) for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                straight = float(np.hypot(*(xy[i] - xy[j]))) / 1.609344
                edges.append((i, j, straight * rng.uniform(1.0, 1.5) + 0.01))
    return RoadGraph(nodes, edges)


@pytest.fixture
def triangle():
    nodes = [("A", 0.0, 0.0), ("B", 1.0, 0.0), ("C", 2.0, 0.0)]
    return RoadGraph(nodes, [("A", "B", 1.0), ("B", "C", 1.0), ("A", "C", 3.0)])


@pytest.fixture
def line3():
    nodes = [("A", 0.0, 0.0), ("B", 1.609344, 0.0), ("C", 3.218688, 0.0)]
    return RoadGraph(nodes, [("A", "B", 1.0), ("B", "C", 1.0)], {"B": "cB", "C": "cC"})


@pytest.fixture(scope="session")
def toy_scenario():
    from evsim.scenario import generate_scenario

    return generate_scenario(None, 1)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in name or rep.when not in ("call", "setup"):
                continue
            if outcome == "passed" and rep.when != "call":
                continue
            number = int(name.split("test_criterion_")[1][:2])
            info = dict(getattr(rep, "user_properties", [])).get("criterion_detail", "")
            lines.append((number, "PASS" if outcome == "passed" else "FAIL", info))
    if lines:
        terminalreporter.section("acceptance criteria")
        for number, verdict, info in sorted(lines):
            terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {info}".rstrip())
