import sys
import numpy as np
import pytest

from topobench.plangen import FloorPlan, GenParams, SiteBoundary, generate_dataset, rectangle_boundary
from topobench.topology import (
    RoomSpec,
    TopologyGraph,
    case_house,
    case_house_grey_palette,
    case_house_rgb_palette,
)


@pytest.fixture(scope="session")
def house():
    return case_house()


@pytest.fixture(scope="session")
def rgb_palette():
    return case_house_rgb_palette()


@pytest.fixture(scope="session")
def grey_pal():
    return case_house_grey_palette()


@pytest.fixture(scope="session")
def house_plans(house):
    plans, _ = generate_dataset(house, rectangle_boundary(), GenParams(seed=11), 12)
    return plans


def small_graph() -> TopologyGraph:
    """Four rooms: entrance 1, hub 2, and the pair 3-4 both hanging off 2."""
    rooms = (
        RoomSpec(1, "e", 1, (255, 0, 0)),
        RoomSpec(2, "hub", 2, (0, 255, 0)),
        RoomSpec(3, "a", 3, (0, 0, 255)),
        RoomSpec(4, "b", 4, (255, 255, 0)),
    )
    return TopologyGraph(rooms, frozenset({(1, 2), (2, 3), (2, 4), (3, 4)}), 1, "small")


def plan_from_rows(rows: list[str], graph_id: str = "small") -> FloorPlan:
    """Build a plan from text rows; digits are room ids, '.' is an empty inside cell."""
    grid = np.array([[-1 if c == "." else int(c) for c in row.split()] for row in rows], dtype=np.int16)
    return FloorPlan(grid, SiteBoundary(np.ones(grid.shape, dtype=bool), "test"), graph_id, 0)


@pytest.fixture
def tiny_graph():
    return small_graph()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
