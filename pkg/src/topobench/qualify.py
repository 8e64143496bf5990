"""Recheck filter: does a plan still carry every required adjacency?

Three rejection rules, each reported independently:

* ``EntranceEnclosed`` - the entrance has no cell facing the outside;
* ``AdjacencyGap`` - a required pair of rooms never touches;
* ``PointContact`` - a required pair touches only at a corner, or along fewer
  than ``min_contact`` cell sides.

Contacts between rooms that the graph does not require are allowed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from topobench.plangen import FloorPlan
from topobench.topology import TopologyGraph

ENTRANCE_ENCLOSED = "EntranceEnclosed"
ADJACENCY_GAP = "AdjacencyGap"
POINT_CONTACT = "PointContact"
RULES = (ENTRANCE_ENCLOSED, ADJACENCY_GAP, POINT_CONTACT)


class GraphMismatch(ValueError):
    pass


class UnknownRoom(KeyError):
    pass


@dataclass(frozen=True)
class Reason:
    rule: str
    detail: object

    def to_dict(self) -> dict:
        detail = list(self.detail) if isinstance(self.detail, tuple) else self.detail
        return {"rule": self.rule, "detail": detail}


@dataclass(frozen=True)
class QualificationResult:
    reasons: tuple[Reason, ...] = field(default_factory=tuple)

    @property
    def qualified(self) -> bool:
        return not self.reasons

    @property
    def verdict(self) -> str:
        return "Qualified" if self.qualified else "Rejected"

    @property
    def rules(self) -> set[str]:
        return {r.rule for r in self.reasons}

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reasons": [r.to_dict() for r in self.reasons]}


def _pair_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    """(4-adjacent cell pairs, diagonal-only cell pairs) between two boolean masks."""
    four = (
        np.count_nonzero(a[1:, :] & b[:-1, :])
        + np.count_nonzero(a[:-1, :] & b[1:, :])
        + np.count_nonzero(a[:, 1:] & b[:, :-1])
        + np.count_nonzero(a[:, :-1] & b[:, 1:])
    )
    diag = (
        np.count_nonzero(a[1:, 1:] & b[:-1, :-1])
        + np.count_nonzero(a[:-1, :-1] & b[1:, 1:])
        + np.count_nonzero(a[1:, :-1] & b[:-1, 1:])
        + np.count_nonzero(a[:-1, 1:] & b[1:, :-1])
    )
    return int(four), int(diag)


def contact_length(plan: FloorPlan, a: int, b: int) -> int:
    """Number of unordered 4-adjacent cell pairs with one cell in room ``a``, one in ``b``."""
    present = set(plan.room_ids())
    for r in (a, b):
        if r not in present:
            raise UnknownRoom(r)
    return _pair_counts(plan.grid == a, plan.grid == b)[0]


def entrance_exposed(plan: FloorPlan, entrance_id: int) -> bool:
    return bool(np.any((plan.grid == entrance_id) & plan.boundary.exterior()))


def check_plan(plan: FloorPlan, graph: TopologyGraph, min_contact: int = 2) -> QualificationResult:
    if min_contact < 1:
        raise ValueError("min_contact must be positive")
    known = set(graph.room_ids)
    stray = [r for r in plan.room_ids() if r not in known]
    if stray:
        raise GraphMismatch(f"plan uses rooms {stray} absent from graph {graph.graph_id!r}")

    reasons: list[Reason] = []
    if not entrance_exposed(plan, graph.entrance_id):
        reasons.append(Reason(ENTRANCE_ENCLOSED, graph.entrance_id))

    masks = {r: plan.grid == r for r in known}
    for a, b in sorted(graph.edges):
        four, diag = _pair_counts(masks[a], masks[b])
        if four == 0 and diag == 0:
            reasons.append(Reason(ADJACENCY_GAP, (a, b)))
        elif four < min_contact:
            reasons.append(Reason(POINT_CONTACT, (a, b)))
    return QualificationResult(tuple(reasons))


def summarize(results: list[QualificationResult]) -> dict:
    """Verdict and per-rule histogram over a batch."""
    verdicts = Counter(r.verdict for r in results)
    rules = Counter(rule for r in results for rule in sorted(r.rules))
    return {
        "plans": len(results),
        "qualified": verdicts.get("Qualified", 0),
        "rejected": verdicts.get("Rejected", 0),
        "rules": {rule: rules.get(rule, 0) for rule in RULES},
    }
