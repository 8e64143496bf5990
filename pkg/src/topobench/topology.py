"""Rooms, adjacency graphs, colour palettes and the grey-level projection.

A :class:`TopologyGraph` is the ground truth every generated plan must
realise.  :func:`grey_profile` projects its room-level edges onto pairs of
grey levels, which is all a greyscale image can express.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable

import numpy as np

GREY_LEVELS = (1, 2, 3, 4, 5)

# grey level -> pixel value, replicated across channels
GREY_VALUES = {1: 230, 2: 180, 3: 128, 4: 77, 5: 26}

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)

Pair = tuple[int, int]
RGB = tuple[int, int, int]


def pair(a: int, b: int) -> Pair:
    """Canonical unordered pair (smaller element first)."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class RoomSpec:
    id: int
    name: str
    grey_level: int
    rgb: RGB
    area_weight: float = 1.0


@dataclass(frozen=True)
class TopologyGraph:
    """Rooms, the required (core) adjacencies between them, and the entrance."""

    rooms: tuple[RoomSpec, ...]
    edges: frozenset[Pair]
    entrance_id: int
    graph_id: str = "graph"

    def __post_init__(self) -> None:
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(
            self, "edges", frozenset(pair(int(a), int(b)) for a, b in self.edges)
        )

    @property
    def room_ids(self) -> list[int]:
        return [r.id for r in self.rooms]

    def room(self, room_id: int) -> RoomSpec:
        for r in self.rooms:
            if r.id == room_id:
                return r
        raise KeyError(room_id)

    def neighbours(self, room_id: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == room_id:
                out.add(b)
            elif b == room_id:
                out.add(a)
        return out

    def degree(self, room_id: int) -> int:
        return len(self.neighbours(room_id))

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "rooms": [
                {
                    "id": r.id,
                    "name": r.name,
                    "grey_level": r.grey_level,
                    "rgb": list(r.rgb),
                    "area_weight": r.area_weight,
                }
                for r in self.rooms
            ],
            "edges": [list(e) for e in sorted(self.edges)],
            "entrance_id": self.entrance_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TopologyGraph":
        rooms = tuple(
            RoomSpec(
                id=int(r["id"]),
                name=str(r.get("name", r["id"])),
                grey_level=int(r["grey_level"]),
                rgb=tuple(int(v) for v in r["rgb"]),
                area_weight=float(r.get("area_weight", 1.0)),
            )
            for r in data["rooms"]
        )
        return cls(
            rooms=rooms,
            edges=frozenset(pair(int(a), int(b)) for a, b in data["edges"]),
            entrance_id=int(data["entrance_id"]),
            graph_id=str(data.get("graph_id", "graph")),
        )


@dataclass(frozen=True)
class GreyAdjacencyProfile:
    counts: dict[Pair, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def support(self) -> set[Pair]:
        return set(self.counts)


@dataclass(frozen=True)
class Palette:
    """Labelled colours plus background/boundary colours.

    ``tolerance`` is the largest Euclidean RGB distance at which a pixel is
    still classified as a palette colour.
    """

    entries: tuple[tuple[int, RGB], ...]
    background: RGB = WHITE
    boundary: RGB = BLACK
    tolerance: float = 24.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "entries",
            tuple((int(lab), tuple(int(v) for v in c)) for lab, c in self.entries),
        )
        object.__setattr__(self, "background", tuple(int(v) for v in self.background))
        object.__setattr__(self, "boundary", tuple(int(v) for v in self.boundary))

    @property
    def labels(self) -> list[int]:
        return [lab for lab, _ in self.entries]

    def color_of(self, label: int) -> RGB:
        for lab, c in self.entries:
            if lab == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "entries": [{"label": lab, "rgb": list(c)} for lab, c in self.entries],
            "background": list(self.background),
            "boundary": list(self.boundary),
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Palette":
        return cls(
            entries=tuple((int(e["label"]), tuple(e["rgb"])) for e in data["entries"]),
            background=tuple(data.get("background", WHITE)),
            boundary=tuple(data.get("boundary", BLACK)),
            tolerance=float(data.get("tolerance", 24.0)),
        )


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_graph(graph: TopologyGraph) -> ValidationResult:
    """Check every :class:`TopologyGraph` invariant; violations are returned, not raised."""
    problems: list[str] = []
    ids = [r.id for r in graph.rooms]
    id_set = set(ids)

    for room_id, n in Counter(ids).items():
        if n > 1:
            problems.append(f"duplicate room id {room_id}")
    for r in graph.rooms:
        if r.grey_level not in GREY_LEVELS:
            problems.append(f"room {r.id}: grey_level {r.grey_level} outside 1..5")
        if not r.area_weight > 0:
            problems.append(f"room {r.id}: area_weight must be positive")
        if len(r.rgb) != 3 or any(not 0 <= v <= 255 for v in r.rgb):
            problems.append(f"room {r.id}: rgb {r.rgb} outside 0..255")
    for rgb, n in Counter(r.rgb for r in graph.rooms).items():
        if n > 1:
            problems.append(f"rgb {rgb} used by {n} rooms")

    for a, b in sorted(graph.edges):
        if a == b:
            problems.append(f"self-loop on room {a}")
        for end in (a, b):
            if end not in id_set:
                problems.append(f"edge ({a},{b}) references unknown room {end}")

    if graph.entrance_id not in id_set:
        problems.append(f"entrance {graph.entrance_id} is not a room")

    if ids and not _connected(id_set, graph.edges):
        problems.append("graph not connected")

    return ValidationResult(tuple(problems))


def _connected(nodes: set[int], edges: Iterable[Pair]) -> bool:
    adj: dict[int, set[int]] = {n: set() for n in nodes}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    start = next(iter(nodes))
    seen = {start}
    todo = deque([start])
    while todo:
        for m in adj[todo.popleft()]:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return seen == nodes


def grey_profile(graph: TopologyGraph) -> GreyAdjacencyProfile:
    """Tally core edges by the unordered pair of their endpoints' grey levels.

    Same-level edges are counted under ``(g, g)``.
    """
    level = {r.id: r.grey_level for r in graph.rooms}
    counts = Counter(pair(level[a], level[b]) for a, b in graph.edges)
    return GreyAdjacencyProfile(dict(sorted(counts.items())))


def _dist(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


def validate_palette(palette: Palette, *, check_midpoints: bool = True) -> ValidationResult:
    """Check that classification against ``palette`` is unambiguous.

    Two conditions are checked:

    * separation: all colours distinct, and every pair of entry colours more
      than ``2 * tolerance`` apart, so no pixel can be within tolerance of two
      entries;
    * midpoints: the channel-wise midpoint of any two entry colours is more
      than ``tolerance`` away from every other palette colour, so a blurred
      seam between two rooms cannot be read as a third room.

    Evenly spaced greys always fail the midpoint condition (the seam between
    levels 1 and 3 is level 2); pass ``check_midpoints=False`` to test
    separation only.
    """
    problems: list[str] = []
    tol = palette.tolerance
    if tol < 0:
        problems.append("tolerance must be non-negative")

    named = [(f"label {lab}", c) for lab, c in palette.entries]
    named += [("background", palette.background), ("boundary", palette.boundary)]
    for (na, ca), (nb, cb) in combinations(named, 2):
        if tuple(ca) == tuple(cb):
            problems.append(f"duplicate color {tuple(ca)} ({na}, {nb})")

    entries = list(palette.entries)
    for (la, ca), (lb, cb) in combinations(entries, 2):
        d = _dist(ca, cb)
        if d <= 2 * tol and tuple(ca) != tuple(cb):
            problems.append(
                f"labels {la} and {lb} are {d:.1f} apart, need > {2 * tol:g}"
            )

    if check_midpoints:
        for (la, ca), (lb, cb) in combinations(entries, 2):
            mid = (np.asarray(ca, float) + np.asarray(cb, float)) / 2
            for name, c in named:
                if name in (f"label {la}", f"label {lb}"):
                    continue
                d = _dist(mid, c)
                if d <= tol:
                    problems.append(
                        f"midpoint of labels {la}/{lb} is within tolerance of {name} ({d:.1f})"
                    )
    return ValidationResult(tuple(problems))


def grey_palette(tolerance: float = 24.0) -> Palette:
    return Palette(
        entries=tuple((g, (v, v, v)) for g, v in GREY_VALUES.items()),
        tolerance=tolerance,
    )


def rgb_palette_for(graph: TopologyGraph, tolerance: float = 24.0) -> Palette:
    """Palette labelling each room by its id with the room's own colour."""
    return Palette(entries=tuple((r.id, r.rgb) for r in graph.rooms), tolerance=tolerance)


def load_graph(path: str | Path) -> TopologyGraph:
    return TopologyGraph.from_dict(json.loads(Path(path).read_text()))


def save_graph(graph: TopologyGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph.to_dict(), indent=2) + "\n")


def load_palette(path: str | Path) -> Palette:
    return Palette.from_dict(json.loads(Path(path).read_text()))


def save_palette(palette: Palette, path: str | Path) -> None:
    Path(path).write_text(json.dumps(palette.to_dict(), indent=2) + "\n")


def _fixture(name: str) -> dict:
    return json.loads(resources.files("topobench.data").joinpath(name).read_text())


def case_house() -> TopologyGraph:
    """The 12-room, 11-edge case-house topology shipped with the package.

    The edge list is a reconstruction: only the grey-level projection and its
    counts are known, so this is one tree consistent with them.
    """
    return TopologyGraph.from_dict(_fixture("case_house.json"))


def case_house_grey_palette() -> Palette:
    return Palette.from_dict(_fixture("grey_palette.json"))


def case_house_rgb_palette() -> Palette:
    return Palette.from_dict(_fixture("rgb_palette.json"))
