"""Rendering plans to training images, and synthetic GAN-output stand-ins.

Targets are hard-edged figure-ground images: each cell becomes a
``scale x scale`` block of its room's palette colour, with a one-pixel
outline along the site boundary.  :func:`degrade` produces noisy, blurred,
shuffled copies that play the role of generator output at a given epoch.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from topobench.plangen import FloorPlan, SiteBoundary
from topobench.topology import BLACK, WHITE, Palette, TopologyGraph

GREY = "grey"
RGB = "rgb"
BOUNDARY = "boundary"
BLANK = "blank"


class PaletteMiss(KeyError):
    pass


class SizeMismatch(ValueError):
    pass


@dataclass(eq=False)
class RasterImage:
    """8-bit RGB image, stored as a ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError(f"expected a non-empty (H, W, 3) array, got {px.shape}")
        self.pixels = px.astype(np.uint8, copy=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)

    def colors(self) -> set[tuple[int, int, int]]:
        flat = self.pixels.reshape(-1, 3)
        return {tuple(int(v) for v in c) for c in np.unique(flat, axis=0)}

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")

    @classmethod
    def load(cls, path: str | Path) -> "RasterImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGB")).copy())

    @classmethod
    def filled(cls, width: int, height: int, color=WHITE) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:] = color
        return cls(px)


def outline_mask(boundary: SiteBoundary, scale: int) -> np.ndarray:
    """Pixels on the inside edge of the site boundary, one pixel wide."""
    inside = np.kron(boundary.mask, np.ones((scale, scale), dtype=bool))
    padded = np.pad(~inside, 1, constant_values=True)
    outside_near = padded[:-2, 1:-1] | padded[2:, 1:-1] | padded[1:-1, :-2] | padded[1:-1, 2:]
    return inside & outside_near


def _cell_colors(plan, graph, mode, palette) -> np.ndarray:
    colors = np.empty(plan.grid.shape + (3,), dtype=np.uint8)
    colors[:] = palette.background
    for room_id in plan.room_ids():
        if mode == GREY:
            if graph is None:
                raise ValueError("grey rendering needs the graph to look up grey levels")
            label = graph.room(room_id).grey_level
        elif mode == RGB:
            label = room_id
        else:
            raise ValueError(f"unknown mode {mode!r}")
        try:
            color = palette.color_of(label)
        except KeyError:
            raise PaletteMiss(f"room {room_id} (label {label}) has no palette entry") from None
        colors[plan.grid == room_id] = color
    return colors


def render_target(
    plan: FloorPlan,
    mode: str,
    palette: Palette,
    scale: int = 4,
    graph: TopologyGraph | None = None,
) -> RasterImage:
    if scale < 1:
        raise ValueError("scale must be positive")
    cells = _cell_colors(plan, graph, mode, palette)
    px = np.repeat(np.repeat(cells, scale, axis=0), scale, axis=1)
    px[outline_mask(plan.boundary, scale)] = palette.boundary
    return RasterImage(px)


def render_source(
    plan: FloorPlan,
    kind: str,
    scale: int = 4,
    background=WHITE,
    boundary_color=BLACK,
) -> RasterImage:
    img = RasterImage.filled(plan.width * scale, plan.height * scale, background)
    if kind == BOUNDARY:
        img.pixels[outline_mask(plan.boundary, scale)] = boundary_color
    elif kind != BLANK:
        raise ValueError(f"unknown source kind {kind!r}")
    return img


def compose_pair(source: RasterImage, target: RasterImage) -> RasterImage:
    """Side-by-side A|B image: source on the left, target on the right."""
    if source.height != target.height:
        raise SizeMismatch(f"heights differ: {source.height} vs {target.height}")
    return RasterImage(np.concatenate([source.pixels, target.pixels], axis=1))


def split_pair(image: RasterImage) -> tuple[RasterImage, RasterImage]:
    if image.width % 2:
        raise SizeMismatch(f"odd width {image.width} cannot be split at the midline")
    half = image.width // 2
    return RasterImage(image.pixels[:, :half].copy()), RasterImage(image.pixels[:, half:].copy())


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def degrade(image: RasterImage, level: float, rng=0) -> RasterImage:
    """Box blur, colour jitter, then block displacement, all scaled by ``level``.

    ``level`` 0 returns an identical copy; 1 is the heaviest degradation
    (jitter sigma 80, blur radius 4, 20 blocks of 16x16 moved by up to 6 px).
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    if level == 0:
        return RasterImage(image.pixels.copy())
    rng = _as_rng(rng)
    px = image.pixels.astype(np.float64)

    radius = round(4 * level)
    if radius > 0:
        px = ndimage.uniform_filter(px, size=(2 * radius + 1, 2 * radius + 1, 1), mode="nearest")

    # jitter after the blur so that level 1 stays close to pure noise
    sigma = 80.0 * level
    px = px + rng.normal(0.0, sigma, size=px.shape)

    px = np.clip(np.rint(px), 0, 255).astype(np.uint8)

    n_blocks = round(20 * level)
    shift = round(6 * level)
    h, w = px.shape[:2]
    block = 16
    if shift > 0 and h >= block and w >= block:
        src = px.copy()
        for _ in range(n_blocks):
            y = int(rng.integers(0, h - block + 1))
            x = int(rng.integers(0, w - block + 1))
            dy, dx = (int(v) for v in rng.integers(-shift, shift + 1, size=2))
            sy = min(max(y + dy, 0), h - block)
            sx = min(max(x + dx, 0), w - block)
            px[y : y + block, x : x + block] = src[sy : sy + block, sx : sx + block]
    return RasterImage(px)


@dataclass(frozen=True)
class DegradeSchedule:
    levels: tuple[float, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if any(not 0.0 <= v <= 1.0 for v in self.levels):
            raise ValueError("every level must lie in [0, 1]")

    @classmethod
    def linear(cls, epochs: int, seed: int = 0, start: float = 1.0, stop: float = 0.0):
        """``epochs`` evenly spaced levels from ``start`` down to ``stop``."""
        return cls(tuple(np.linspace(start, stop, epochs)), seed)

    def substream(self, epoch_index: int, image_index: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(epoch_index, image_index))
        )


def sample_name(index: int) -> str:
    return f"{index:06d}.png"


def _split_names(n: int, val_fraction: float) -> list[str]:
    n_val = math.ceil(n * val_fraction) if val_fraction > 0 else 0
    return ["train"] * (n - n_val) + ["val"] * n_val


def write_dataset(
    plans: Sequence[FloorPlan],
    graph: TopologyGraph,
    palette: Palette,
    out_dir: str | Path,
    *,
    mode: str = RGB,
    source: str = BOUNDARY,
    layout: str = "pairs",
    scale: int = 4,
    val_fraction: float = 0.0,
    jobs: int = 1,
) -> list[Path]:
    """Write paired training images.

    ``layout="pairs"`` writes composed A|B images to ``dataset/{train,val}/``;
    ``layout="split"`` writes ``A/{train,val}/`` and ``B/{train,val}/``.
    Returns the written paths (targets only for the split layout).
    """
    out = Path(out_dir)
    splits = _split_names(len(plans), val_fraction)

    def one(i: int) -> Path:
        plan = plans[i]
        tgt = render_target(plan, mode, palette, scale, graph=graph)
        src = render_source(plan, source, scale, palette.background, palette.boundary)
        name = sample_name(i)
        if layout == "pairs":
            path = out / "dataset" / splits[i] / name
            compose_pair(src, tgt).save(path)
            return path
        if layout == "split":
            src.save(out / "A" / splits[i] / name)
            path = out / "B" / splits[i] / name
            tgt.save(path)
            return path
        raise ValueError(f"unknown layout {layout!r}")

    return _map(one, range(len(plans)), jobs)


def fake_epoch_path(root: str | Path, epoch: int, index: int) -> Path:
    return Path(root) / "fake_epochs" / f"epoch{epoch:03d}" / f"{index:06d}_fake_B.png"


def write_fake_epochs(
    targets: Sequence[RasterImage],
    schedule: DegradeSchedule,
    root: str | Path,
    jobs: int = 1,
) -> list[Path]:
    """Degrade every target at every schedule level; epochs are numbered from 1."""
    work = [(e, i) for e in range(len(schedule.levels)) for i in range(len(targets))]

    def one(item: tuple[int, int]) -> Path:
        e, i = item
        img = degrade(targets[i], schedule.levels[e], schedule.substream(e, i))
        path = fake_epoch_path(root, e + 1, i)
        img.save(path)
        return path

    return _map(one, work, jobs)


def _map(fn, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]
