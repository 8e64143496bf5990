"""Cell-grid floor-plan generation for a fixed room topology.

Rooms are seeded one at a time as small square cores next to their
already-placed graph neighbours, then grown together by round-robin BFS until
each reaches its target area.  Attempts that starve a room, fail to place one,
or lose a required contact are retried on a fresh RNG substream.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from topobench.topology import TopologyGraph, validate_graph

EMPTY = -1

SEED_FAILURE = "SeedFailure"
GROWTH_OVERFLOW = "GrowthOverflow"

_FOUR = ndimage.generate_binary_structure(2, 1)


class GenerationFailed(RuntimeError):
    def __init__(self, attempts: int, reasons: Counter | None = None):
        self.attempts = attempts
        self.reasons = Counter(reasons or {})
        top = ", ".join(f"{k}={v}" for k, v in self.reasons.most_common())
        super().__init__(f"no qualified plan after {attempts} attempts ({top})")


class SiteBoundary:
    """Boolean inside/outside mask over a ``height x width`` cell grid."""

    def __init__(self, mask: np.ndarray, name: str = "site"):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            raise ValueError("boundary mask must be a non-empty 2-D array")
        _, n = ndimage.label(mask, structure=_FOUR)
        if n != 1:
            raise ValueError("inside region of the boundary must be 4-connected")
        mask.setflags(write=False)
        self.mask = mask
        self.name = name

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def inside_count(self) -> int:
        return int(self.mask.sum())

    def exterior(self) -> np.ndarray:
        """Cells that face the outside: 4-adjacent to an outside cell or the grid edge."""
        padded = np.pad(~self.mask, 1, constant_values=True)
        near = (
            padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
        )
        return self.mask & near

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SiteBoundary) and np.array_equal(self.mask, other.mask)

    def __hash__(self) -> int:
        return hash(self.mask.tobytes())

    def __repr__(self) -> str:
        return f"SiteBoundary({self.name!r}, {self.width}x{self.height}, inside={self.inside_count})"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "mask": self.mask.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SiteBoundary":
        return cls(np.array(data["mask"], dtype=bool), name=data.get("name", "site"))

    @classmethod
    def from_image(cls, path: str | Path, name: str | None = None) -> "SiteBoundary":
        """Read a monochrome image: non-white pixels are inside."""
        from PIL import Image

        arr = np.asarray(Image.open(path).convert("RGB"))
        return cls((arr != 255).any(axis=2), name=name or Path(path).stem)


def rectangle_boundary(width: int = 64, height: int = 64) -> SiteBoundary:
    return SiteBoundary(np.ones((height, width), dtype=bool), name="rectangle")


def notched_boundary(kind: str = "corner", size: int = 64) -> SiteBoundary:
    """Square site with a notch cut out: ``corner`` (L-shape) or ``side`` (U-shape)."""
    mask = np.ones((size, size), dtype=bool)
    notch = size // 6
    if kind == "corner":
        mask[:notch, size - notch :] = False
    elif kind == "side":
        mid = size // 2
        mask[:notch, mid - notch // 2 : mid + notch // 2] = False
    else:
        raise ValueError(f"unknown notch kind {kind!r}")
    return SiteBoundary(mask, name=f"notch-{kind}")


def fixture_boundaries(size: int = 64) -> dict[str, SiteBoundary]:
    return {
        "rectangle": rectangle_boundary(size, size),
        "notch-corner": notched_boundary("corner", size),
        "notch-side": notched_boundary("side", size),
    }


def load_boundary(spec: str | Path) -> SiteBoundary:
    """Fixture name, JSON mask file, or monochrome image."""
    text = str(spec)
    fixtures = fixture_boundaries()
    if text in fixtures:
        return fixtures[text]
    path = Path(text)
    if path.suffix.lower() == ".json":
        return SiteBoundary.from_dict(json.loads(path.read_text()))
    return SiteBoundary.from_image(path)


@dataclass(frozen=True)
class GenParams:
    """Generation knobs.

    ``density`` is cells per unit of room area weight; ``max_adjacency_distance``
    is the Chebyshev gap (in cells) allowed between a new room's core and its
    placed neighbours' cores.
    """

    max_adjacency_distance: int = 2
    density: float = 250
    max_retries: int = 50
    seed: int = 0
    min_fill: float = 0.5
    core_scale: float = 0.7

    def __post_init__(self) -> None:
        if self.max_adjacency_distance < 1:
            raise ValueError("max_adjacency_distance must be >= 1")
        if self.density < 1:
            raise ValueError("density must be >= 1")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(eq=False)
class FloorPlan:
    grid: np.ndarray
    boundary: SiteBoundary
    graph_id: str
    seed: int

    @property
    def height(self) -> int:
        return self.grid.shape[0]

    @property
    def width(self) -> int:
        return self.grid.shape[1]

    def room_ids(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.grid) if v != EMPTY)

    def area(self, room_id: int) -> int:
        return int((self.grid == room_id).sum())

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, FloorPlan)
            and self.graph_id == other.graph_id
            and self.seed == other.seed
            and np.array_equal(self.grid, other.grid)
            and self.boundary == other.boundary
        )

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "seed": int(self.seed),
            "width": self.width,
            "height": self.height,
            "cells": [int(v) for v in self.grid.ravel()],
            "mask": [int(v) for v in self.boundary.mask.ravel()],
            "boundary": self.boundary.name,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FloorPlan":
        h, w = int(data["height"]), int(data["width"])
        grid = np.array(data["cells"], dtype=np.int16).reshape(h, w)
        if "mask" in data:
            mask = np.array(data["mask"], dtype=bool).reshape(h, w)
        else:
            mask = np.ones((h, w), dtype=bool)
        boundary = SiteBoundary(mask, str(data.get("boundary", "site")))
        return cls(grid, boundary, str(data["graph_id"]), int(data["seed"]))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FloorPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_plan_invariants(plan: FloorPlan, graph: TopologyGraph) -> list[str]:
    """Structural FloorPlan invariants (boundary respect, connected disjoint rooms)."""
    problems = []
    if np.any((plan.grid != EMPTY) & ~plan.boundary.mask):
        problems.append("room cells outside the boundary")
    for r in graph.room_ids:
        region = plan.grid == r
        if not region.any():
            problems.append(f"room {r} is empty")
            continue
        _, n = ndimage.label(region, structure=_FOUR)
        if n != 1:
            problems.append(f"room {r} is split into {n} pieces")
    return problems


def room_order(graph: TopologyGraph) -> list[int]:
    """Entrance first, then repeatedly the highest-degree room touching the placed set."""
    order = [graph.entrance_id]
    placed = {graph.entrance_id}
    remaining = set(graph.room_ids) - placed
    while remaining:
        frontier = [r for r in remaining if graph.neighbours(r) & placed] or list(remaining)
        nxt = min(frontier, key=lambda r: (-graph.degree(r), r))
        order.append(nxt)
        placed.add(nxt)
        remaining.discard(nxt)
    return order


def targets(graph: TopologyGraph, params: GenParams) -> dict[int, int]:
    return {r.id: math.ceil(params.density * r.area_weight) for r in graph.rooms}


def overflows(graph: TopologyGraph, boundary: SiteBoundary, params: GenParams) -> bool:
    """True when the targets cannot fit even at the minimum fill ratio."""
    total = sum(targets(graph, params).values())
    return total * params.min_fill > boundary.inside_count


def _substream(seed: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))


def _box_sums(blocked: np.ndarray, s: int) -> np.ndarray:
    """Number of blocked cells in every s x s window, indexed by top-left corner."""
    ii = np.zeros((blocked.shape[0] + 1, blocked.shape[1] + 1), dtype=np.int32)
    ii[1:, 1:] = blocked.cumsum(0).cumsum(1)
    return ii[s:, s:] - ii[:-s, s:] - ii[s:, :-s] + ii[:-s, :-s]


def _rect_gap(ys, xs, s, rect):
    """Chebyshev distance between s x s squares at (ys, xs) and ``rect`` (y, x, h, w)."""
    y1, x1, h1, w1 = rect
    gy = np.maximum(0, np.maximum(y1 - (ys + s - 1), ys - (y1 + h1 - 1)))
    gx = np.maximum(0, np.maximum(x1 - (xs + s - 1), xs - (x1 + w1 - 1)))
    return np.maximum(gy, gx)


def _facing(ys, xs, s, rect):
    y1, x1, h1, w1 = rect
    oy = np.minimum(ys + s, y1 + h1) - np.maximum(ys, y1)
    ox = np.minimum(xs + s, x1 + w1) - np.maximum(xs, x1)
    return (oy >= 2) | (ox >= 2)


def _place_core(room, graph, boundary, grid, cores, side, d, rng, entrance):
    """Pick a free square for ``room``'s core, shrinking it until one fits."""
    blocked = (grid != EMPTY) | ~boundary.mask
    placed = [n for n in sorted(graph.neighbours(room)) if n in cores] or sorted(cores)
    for s in range(min(side, boundary.height, boundary.width), 0, -1):
        free = _box_sums(blocked, s) == 0
        ys, xs = np.mgrid[0 : free.shape[0], 0 : free.shape[1]]
        if entrance:
            ok = free & (_box_sums(boundary.exterior(), s) > 0)
            score = np.zeros(ok.shape, dtype=int)
        else:
            near = [_rect_gap(ys, xs, s, cores[n]) <= d for n in placed]
            every = np.logical_and.reduce(near)
            ok = free & every
            if not ok.any():
                ok = free & np.logical_or.reduce(near)
            touching = [
                (_rect_gap(ys, xs, s, cores[n]) == 1) & _facing(ys, xs, s, cores[n]) for n in placed
            ]
            score = np.sum(touching, axis=0)
        if not ok.any():
            continue
        score = np.where(ok, score, -1)
        cy, cx = np.nonzero(score == score.max())
        k = int(rng.integers(len(cy)))
        return int(cy[k]), int(cx[k]), s
    return None


def _grow(grid, order, cores, target, mask):
    size = {r: int((grid == r).sum()) for r in order}
    queues = {r: deque(zip(*np.nonzero(grid == r))) for r in order}
    h, w = grid.shape
    active = True
    while active:
        active = False
        for r in order:
            if size[r] >= target[r]:
                continue
            q = queues[r]
            while q:
                y, x = q[0]
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and grid[ny, nx] == EMPTY:
                        grid[ny, nx] = r
                        size[r] += 1
                        q.append((ny, nx))
                        active = True
                        break
                else:
                    q.popleft()
                    continue
                break
    return size


def _fill_pockets(grid, boundary, target, size):
    """Hand enclosed empty pockets to the adjacent room with the largest deficit."""
    empty = (grid == EMPTY) & boundary.mask
    labels, n = ndimage.label(empty, structure=_FOUR)
    if n == 0:
        return
    open_ids = np.unique(labels[boundary.exterior() & empty])
    pocket = empty & ~np.isin(labels, open_ids)
    h, w = grid.shape
    while pocket.any():
        changed = False
        for y, x in zip(*np.nonzero(pocket)):
            best = None
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < h and 0 <= nx < w and grid[ny, nx] != EMPTY:
                    r = int(grid[ny, nx])
                    key = (target[r] - size[r], -r)
                    if best is None or key > best[0]:
                        best = (key, r)
            if best is not None:
                grid[y, x] = best[1]
                size[best[1]] += 1
                pocket[y, x] = False
                changed = True
        if not changed:
            break


def _attempt(graph, boundary, params, rng) -> tuple[np.ndarray | None, list[str]]:
    from topobench.qualify import check_plan

    grid = np.full((boundary.height, boundary.width), EMPTY, dtype=np.int16)
    target = targets(graph, params)
    order = room_order(graph)
    cores: dict[int, tuple[int, int, int, int]] = {}
    for r in order:
        side = max(1, int(params.core_scale * math.sqrt(target[r])))
        spot = _place_core(
            r, graph, boundary, grid, cores, side,
            params.max_adjacency_distance, rng, entrance=(r == graph.entrance_id),
        )
        if spot is None:
            return None, [SEED_FAILURE]
        y, x, s = spot
        cores[r] = (y, x, s, s)
        grid[y : y + s, x : x + s] = r

    size = _grow(grid, order, cores, target, boundary.mask)
    _fill_pockets(grid, boundary, target, size)
    if any(size[r] < params.min_fill * target[r] for r in order):
        return None, [GROWTH_OVERFLOW]

    plan = FloorPlan(grid, boundary, graph.graph_id, params.seed)
    result = check_plan(plan, graph)
    if not result.qualified:
        return None, sorted({reason.rule for reason in result.reasons})
    return grid, []


def _checked(graph: TopologyGraph) -> None:
    report = validate_graph(graph)
    if not report.ok:
        raise ValueError("invalid graph: " + "; ".join(report.violations))


def generate_plan_with_stats(
    graph: TopologyGraph, boundary: SiteBoundary, params: GenParams
) -> tuple[FloorPlan, int, Counter]:
    _checked(graph)
    reasons: Counter = Counter()
    if overflows(graph, boundary, params):
        reasons[GROWTH_OVERFLOW] = params.max_retries
        raise GenerationFailed(params.max_retries, reasons)
    for attempt in range(params.max_retries):
        grid, why = _attempt(graph, boundary, params, _substream(params.seed, attempt))
        if grid is not None:
            return FloorPlan(grid, boundary, graph.graph_id, params.seed), attempt + 1, reasons
        reasons.update(why)
    raise GenerationFailed(params.max_retries, reasons)


def generate_plan(graph: TopologyGraph, boundary: SiteBoundary, params: GenParams) -> FloorPlan:
    """Generate one qualified plan; deterministic in (graph, boundary, params).

    Raises :class:`GenerationFailed` once ``params.max_retries`` attempts
    have been rejected.
    """
    return generate_plan_with_stats(graph, boundary, params)[0]


@dataclass
class FeasibilityReport:
    trials: int
    qualified: int
    reasons: Counter = field(default_factory=Counter)

    @property
    def yield_rate(self) -> float:
        return self.qualified / self.trials if self.trials else 0.0

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "qualified": self.qualified,
            "yield_rate": self.yield_rate,
            "reasons": dict(self.reasons.most_common()),
        }


def pre_evaluate(
    graph: TopologyGraph, boundary: SiteBoundary, params: GenParams, trials: int
) -> FeasibilityReport:
    """Single-shot yield of ``trials`` independent attempts, with failure reasons."""
    _checked(graph)
    if trials < 1:
        raise ValueError("trials must be positive")
    report = FeasibilityReport(trials, 0)
    if overflows(graph, boundary, params):
        report.reasons[GROWTH_OVERFLOW] = trials
        return report
    for t in range(trials):
        grid, why = _attempt(graph, boundary, params, _substream(params.seed ^ t, 0))
        if grid is not None:
            report.qualified += 1
        else:
            report.reasons.update(why)
    return report


@dataclass
class DatasetStats:
    count: int = 0
    attempts: int = 0
    rejections: Counter = field(default_factory=Counter)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "attempts": self.attempts,
            "rejections": dict(self.rejections.most_common()),
            "wall_time_s": self.wall_time_s,
        }


def _slot(args):
    graph, boundary, params, i = args
    return generate_plan_with_stats(graph, boundary, replace(params, seed=params.seed ^ i))


def generate_dataset(
    graph: TopologyGraph,
    boundary: SiteBoundary,
    params: GenParams,
    count: int,
    jobs: int = 1,
) -> tuple[list[FloorPlan], DatasetStats]:
    """``count`` qualified plans; slot ``i`` uses seed ``params.seed ^ i``."""
    _checked(graph)
    if count < 0:
        raise ValueError("count must be non-negative")
    start = time.perf_counter()
    stats = DatasetStats()
    work = [(graph, boundary, params, i) for i in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_slot, work, chunksize=max(1, count // (4 * jobs))))
    else:
        results = [_slot(w) for w in work]
    plans = []
    for plan, attempts, reasons in results:
        plans.append(plan)
        stats.attempts += attempts
        stats.rejections.update(reasons)
    stats.count = len(plans)
    stats.wall_time_s = time.perf_counter() - start
    return plans, stats
