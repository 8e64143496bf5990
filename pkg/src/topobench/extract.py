"""Recover regions and their adjacency multiset from a raster image.

Three steps: classify every pixel to the nearest palette colour, merge
same-label pixels into 4-connected regions (culling specks), then count
region pairs whose grown footprints overlap.
"""

from __future__ import annotations

import csv
import json
import os
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from topobench.raster import GREY, RGB, RasterImage
from topobench.topology import Pair, Palette, TopologyGraph, grey_profile, pair

BACKGROUND = -1
BOUNDARY = -2
UNLABELED = -3

_FOUR = ndimage.generate_binary_structure(2, 1)


class DirectoryUnreadable(OSError):
    pass


class PaletteMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ExtractParams:
    """Cull threshold, growth radius and overlap threshold for extraction.

    ``dilation_radius`` counts 4-neighbourhood growth steps, so the grown
    footprint is an L1 ball; radius 1 reduces adjacency to plain
    4-adjacency.  Radius 3 bridges unlabeled seams up to 2 px wide; two
    regions meeting only at a corner then score an overlap of 6, which the
    default ``min_overlap`` of 8 rejects.
    """

    min_area_fraction: float = 0.002
    dilation_radius: int = 3
    min_overlap: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.min_area_fraction < 1.0:
            raise ValueError("min_area_fraction must lie in (0, 1)")
        if self.dilation_radius < 1:
            raise ValueError("dilation_radius must be at least 1")
        if self.min_overlap < 1:
            raise ValueError("min_overlap must be at least 1")

    def to_dict(self) -> dict:
        return {
            "min_area_fraction": self.min_area_fraction,
            "dilation_radius": self.dilation_radius,
            "min_overlap": self.min_overlap,
        }


@dataclass(frozen=True, eq=False)
class Region:
    """One 4-connected component of a single label.

    ``indices`` are flat (row-major) pixel indices into an image of ``shape``;
    ``bbox`` is ``(row0, col0, row1, col1)`` with exclusive upper bounds.
    """

    label: int
    indices: np.ndarray
    bbox: tuple[int, int, int, int]
    shape: tuple[int, int]

    @property
    def pixel_count(self) -> int:
        return int(self.indices.size)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m.flat[self.indices] = True
        return m

    def summary(self) -> dict:
        return {"label": self.label, "pixel_count": self.pixel_count, "bbox": list(self.bbox)}


@dataclass
class AdjacencyReport:
    image_id: str
    mode: str
    regions: list[dict] = field(default_factory=list)
    adjacency: dict[Pair, int] = field(default_factory=dict)
    core_found: int = 0
    core_total: int = 0
    extra: int = 0
    unlabeled_fraction: float = 0.0
    expected: dict[Pair, int] = field(default_factory=dict)
    error: str | None = None

    @property
    def total_adjacencies(self) -> int:
        return sum(self.adjacency.values())

    @property
    def core_recall(self) -> float:
        return self.core_found / self.core_total if self.core_total else 0.0

    @property
    def support(self) -> set[Pair]:
        return set(self.adjacency)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "mode": self.mode,
            "regions": self.regions,
            "adjacency": [[a, b, n] for (a, b), n in sorted(self.adjacency.items())],
            "expected": [[a, b, n] for (a, b), n in sorted(self.expected.items())],
            "core_found": self.core_found,
            "core_total": self.core_total,
            "extra": self.extra,
            "total_adjacencies": self.total_adjacencies,
            "unlabeled_fraction": self.unlabeled_fraction,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AdjacencyReport":
        return cls(
            image_id=data["image_id"],
            mode=data["mode"],
            regions=list(data.get("regions", [])),
            adjacency={(int(a), int(b)): int(n) for a, b, n in data.get("adjacency", [])},
            core_found=int(data["core_found"]),
            core_total=int(data["core_total"]),
            extra=int(data.get("extra", 0)),
            unlabeled_fraction=float(data.get("unlabeled_fraction", 0.0)),
            expected={(int(a), int(b)): int(n) for a, b, n in data.get("expected", [])},
            error=data.get("error"),
        )


def classify(image: RasterImage, palette: Palette) -> np.ndarray:
    """Per-pixel label map: a palette label, or BACKGROUND, BOUNDARY, UNLABELED.

    Each pixel takes the nearest of ``[entries..., background, boundary]``
    when that colour lies within ``palette.tolerance``; equidistant colours
    resolve to the earlier one.
    """
    if any(lab < 0 for lab in palette.labels):
        raise ValueError("palette labels must be non-negative")
    colors = np.array(
        [c for _, c in palette.entries] + [palette.background, palette.boundary], dtype=np.float64
    )
    codes = np.array(palette.labels + [BACKGROUND, BOUNDARY], dtype=np.int32)

    px = image.pixels.astype(np.int32)
    packed = (px[..., 0] << 16) | (px[..., 1] << 8) | px[..., 2]
    uniq, inverse = np.unique(packed.ravel(), return_inverse=True)
    rgb = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1).astype(np.float64)

    d2 = ((rgb[:, None, :] - colors[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    within = d2[np.arange(len(uniq)), nearest] <= palette.tolerance**2
    per_color = np.where(within, codes[nearest], UNLABELED).astype(np.int32)
    return per_color[inverse].reshape(packed.shape)


def segment(labels: np.ndarray, params: ExtractParams = ExtractParams()) -> list[Region]:
    """4-connected components per palette label, minus components below the cull area.

    Regions are ordered by label, then by the row-major position of their
    first pixel.
    """
    shape = labels.shape
    min_pixels = params.min_area_fraction * labels.size
    regions: list[Region] = []
    for lab in np.unique(labels):
        if lab < 0:
            continue
        comp, n = ndimage.label(labels == lab, structure=_FOUR)
        if n == 0:
            continue
        flat = comp.ravel()
        order = np.argsort(flat, kind="stable")
        sizes = np.bincount(flat, minlength=n + 1)
        bounds = np.cumsum(sizes)
        slices = ndimage.find_objects(comp)
        for k in range(1, n + 1):
            if sizes[k] < min_pixels:
                continue
            idx = order[bounds[k - 1] : bounds[k]]
            sl = slices[k - 1]
            bbox = (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)
            regions.append(Region(int(lab), idx, bbox, shape))
    return regions


def region_overlaps(regions: list[Region], radius: int) -> np.ndarray:
    """Symmetric matrix of overlap counts between regions.

    Entry ``(r, s)`` is ``|grow(r) & s| + |grow(s) & r|``, where ``grow``
    applies ``radius`` 4-neighbourhood dilation steps.
    """
    n = len(regions)
    out = np.zeros((n, n), dtype=np.int64)
    if n == 0:
        return out
    shape = regions[0].shape
    index = np.full(shape, -1, dtype=np.int64)
    for k, r in enumerate(regions):
        index.flat[r.indices] = k
    for k, r in enumerate(regions):
        y0, x0, y1, x1 = r.bbox
        y0, x0 = max(y0 - radius, 0), max(x0 - radius, 0)
        y1, x1 = min(y1 + radius, shape[0]), min(x1 + radius, shape[1])
        window = index[y0:y1, x0:x1]
        own = window == k
        grown = ndimage.binary_dilation(own, structure=_FOUR, iterations=radius)
        hits = window[grown & ~own]
        hits = hits[hits >= 0]
        out[k] += np.bincount(hits, minlength=n)
    return out + out.T


def adjacencies(regions: list[Region], params: ExtractParams = ExtractParams()) -> dict[Pair, int]:
    """Count adjacent region pairs per unordered label pair."""
    overlap = region_overlaps(regions, params.dilation_radius)
    rows, cols = np.nonzero(np.triu(overlap >= params.min_overlap, k=1))
    counts = Counter(pair(regions[r].label, regions[c].label) for r, c in zip(rows, cols))
    return dict(sorted(counts.items()))


def _core_pairs(graph: TopologyGraph, mode: str) -> dict[Pair, int]:
    if mode == RGB:
        return {e: 1 for e in sorted(graph.edges)}
    if mode == GREY:
        return dict(grey_profile(graph).counts)
    raise ValueError(f"unknown mode {mode!r}")


def _check_palette(palette: Palette, graph: TopologyGraph, mode: str) -> None:
    if mode == RGB:
        needed = set(graph.room_ids)
    else:
        needed = {r.grey_level for r in graph.rooms}
    missing = sorted(needed - set(palette.labels))
    if missing:
        raise PaletteMismatch(f"palette lacks labels {missing} needed for {mode} mode")


def extract_report(
    image: RasterImage,
    palette: Palette,
    graph: TopologyGraph,
    mode: str,
    params: ExtractParams = ExtractParams(),
    image_id: str = "",
) -> AdjacencyReport:
    """Classify, segment and count adjacencies, then score against the graph.

    Rgb mode matches room-id pairs against the graph's edges.  Grey mode
    matches grey-level pairs against the grey profile's support and keeps
    the profile counts in ``expected`` for comparison.
    """
    _check_palette(palette, graph, mode)
    core = _core_pairs(graph, mode)
    labels = classify(image, palette)
    regions = segment(labels, params)
    adj = adjacencies(regions, params)
    found = sum(1 for p in core if adj.get(p, 0) > 0)
    return AdjacencyReport(
        image_id=image_id,
        mode=mode,
        regions=[r.summary() for r in regions],
        adjacency=adj,
        core_found=found,
        core_total=len(core),
        extra=sum(1 for p in adj if p not in core),
        unlabeled_fraction=float(np.count_nonzero(labels == UNLABELED)) / labels.size,
        expected=core if mode == GREY else {},
    )


def _extract_file(args) -> AdjacencyReport:
    path, image_id, palette, graph, mode, params = args
    try:
        return extract_report(RasterImage.load(path), palette, graph, mode, params, image_id)
    except Exception as exc:  # one bad image must not abort the batch
        core = _core_pairs(graph, mode)
        return AdjacencyReport(
            image_id=image_id, mode=mode, core_total=len(core), error=f"{type(exc).__name__}: {exc}"
        )


def list_images(directory: str | Path, filename_filter: str | None = None) -> list[tuple[Path, str]]:
    """PNG files under ``directory`` as ``(path, relative posix id)``, sorted by id.

    ``filename_filter`` is a regular expression searched in the relative id.
    """
    root = Path(directory)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise DirectoryUnreadable(f"cannot read directory {root}")
    pattern = re.compile(filename_filter) if filename_filter else None
    found = []
    try:
        for path in root.rglob("*"):
            if path.suffix.lower() != ".png" or not path.is_file():
                continue
            rel = path.relative_to(root).as_posix()
            if pattern is None or pattern.search(rel):
                found.append((path, rel))
    except OSError as exc:
        raise DirectoryUnreadable(str(exc)) from exc
    return sorted(found, key=lambda item: item[1])


def batch_extract(
    directory: str | Path,
    palette: Palette,
    graph: TopologyGraph,
    mode: str,
    params: ExtractParams = ExtractParams(),
    filename_filter: str | None = None,
    jobs: int = 1,
) -> list[AdjacencyReport]:
    """One report per matching PNG, in lexicographic order of relative path."""
    _check_palette(palette, graph, mode)
    work = [(p, rel, palette, graph, mode, params) for p, rel in list_images(directory, filename_filter)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_extract_file, work, chunksize=max(1, len(work) // (4 * jobs))))
    return [_extract_file(w) for w in work]


def write_jsonl(reports: list[AdjacencyReport], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[AdjacencyReport]:
    with open(path) as fh:
        return [AdjacencyReport.from_dict(json.loads(line)) for line in fh if line.strip()]


CSV_FIELDS = ("image_id", "core_found", "core_total", "extra", "unlabeled_fraction")


def write_csv(reports: list[AdjacencyReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in reports:
            w.writerow([r.image_id, r.core_found, r.core_total, r.extra, repr(r.unlabeled_fraction)])
