import numpy as np
import pytest
from conftest import plan_from_rows, small_graph
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import contact_counts

from topobench.plangen import FloorPlan, SiteBoundary
from topobench.qualify import (
    ADJACENCY_GAP,
    ENTRANCE_ENCLOSED,
    POINT_CONTACT,
    GraphMismatch,
    UnknownRoom,
    check_plan,
    contact_length,
    summarize,
)

QUALIFIED = [
    "1 1 2 2 2 2",
    "1 1 2 2 2 2",
    "3 3 3 3 4 4",
    "3 3 3 3 4 4",
    "3 3 3 3 4 4",
    "3 3 3 3 4 4",
]
ENCLOSED = [
    "2 2 2 2 2 2",
    "2 1 1 2 2 2",
    "2 1 1 2 2 2",
    "2 2 2 2 2 2",
    "3 3 3 4 4 4",
    "3 3 3 4 4 4",
]
GAP = [
    "1 1 2 2 2 2",
    "1 1 2 2 2 2",
    "3 3 3 3 3 3",
    "3 3 3 3 3 3",
    "3 3 4 4 4 4",
    "3 3 4 4 4 4",
]
CORNER = [
    "1 1 2 2 2 .",
    "1 1 2 2 2 .",
    "1 1 3 3 3 4",
    "1 1 3 3 3 4",
]

FIXTURES = {
    "qualified": (QUALIFIED, set()),
    "entrance-enclosed": (ENCLOSED, {ENTRANCE_ENCLOSED}),
    "adjacency-gap": (GAP, {ADJACENCY_GAP}),
    "point-contact": (CORNER, {POINT_CONTACT}),
}


@pytest.mark.parametrize("name", FIXTURES)
def test_violation_fixtures_trigger_exactly_their_rule(name):
    rows, expected = FIXTURES[name]
    result = check_plan(plan_from_rows(rows), small_graph())
    assert result.rules == expected
    assert len(result.reasons) == len(expected)
    assert result.qualified == (not expected)


def test_reason_details_name_the_pair():
    result = check_plan(plan_from_rows(GAP), small_graph())
    assert result.reasons[0].detail == (2, 4)
    assert result.to_dict() == {"verdict": "Rejected", "reasons": [{"rule": ADJACENCY_GAP, "detail": [2, 4]}]}


def test_single_side_contact_is_point_contact():
    rows = [
        "1 1 2 2",
        "1 1 2 2",
        "3 3 3 .",
        "3 3 3 4",
    ]
    # 2-4 meet nowhere; 2-3 and 3-4 share one cell side each
    result = check_plan(plan_from_rows(rows), small_graph())
    assert (POINT_CONTACT, (3, 4)) in {(r.rule, r.detail) for r in result.reasons}
    assert check_plan(plan_from_rows(rows), small_graph(), min_contact=1).rules == {ADJACENCY_GAP}


def test_unrequired_contacts_are_allowed():
    # 1-3 touch in QUALIFIED without being an edge
    assert contact_length(plan_from_rows(QUALIFIED), 1, 3) == 2
    assert check_plan(plan_from_rows(QUALIFIED), small_graph()).qualified


def test_graph_mismatch():
    rows = ["1 1 5", "2 3 4"]
    with pytest.raises(GraphMismatch):
        check_plan(plan_from_rows(rows), small_graph())


def test_contact_length_unknown_room():
    with pytest.raises(UnknownRoom):
        contact_length(plan_from_rows(QUALIFIED), 1, 9)


def test_summarize_histogram():
    g = small_graph()
    results = [check_plan(plan_from_rows(FIXTURES[k][0]), g) for k in FIXTURES]
    s = summarize(results)
    assert s["plans"] == 4 and s["qualified"] == 1 and s["rejected"] == 3
    assert s["rules"] == {ENTRANCE_ENCLOSED: 1, ADJACENCY_GAP: 1, POINT_CONTACT: 1}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contact_length_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    grid = rng.integers(1, 5, size=(7, 9)).astype(np.int16)
    plan = FloorPlan(grid, SiteBoundary(np.ones(grid.shape, bool)), "small", 0)
    present = set(np.unique(grid).tolist())
    for a in range(1, 5):
        for b in range(a + 1, 5):
            if a in present and b in present:
                assert contact_length(plan, a, b) == contact_counts(grid, a, b)[0]


def test_generated_plans_qualify(house, house_plans):
    for plan in house_plans:
        assert check_plan(plan, house).qualified
        for a, b in house.edges:
            four, _ = contact_counts(plan.grid, a, b)
            assert four >= 2
