"""Loss-log parsing, per-epoch learning-rate curves, phase detection and sample sufficiency."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from topobench.extract import AdjacencyReport

LOSS_KEYS = ("G_GAN", "G_L1", "D_real", "D_fake")
DEFAULT_EPOCH_REGEX = r"epoch(?P<epoch>\d+)[/_].*?(?P<sample>\d+)_fake_B"

_HEAD = re.compile(
    r"\(epoch: (?P<epoch>[^,]*), iters: (?P<iters>[^,]*), "
    r"time: (?P<time>[^,]*), data: (?P<data>[^)]*)\)(?P<rest>.*)"
)


class ParseError(ValueError):
    def __init__(self, line_number: int, snippet: str, why: str = "malformed record"):
        self.line_number = line_number
        self.snippet = snippet
        super().__init__(f"line {line_number}: {why}: {snippet[:80]!r}")


class RegexMismatch(ValueError):
    def __init__(self, unmatched: Sequence[str]):
        self.unmatched = list(unmatched)
        shown = ", ".join(self.unmatched[:5])
        more = f" (+{len(self.unmatched) - 5} more)" if len(self.unmatched) > 5 else ""
        super().__init__(f"{len(self.unmatched)} image ids do not match the epoch regex: {shown}{more}")


class InsufficientReports(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    iters: int
    time_s: float
    data_s: float
    g_gan: float
    g_l1: float
    d_real: float
    d_fake: float
    extras: dict[str, float] = field(default_factory=dict, compare=False)
    key_order: tuple[str, ...] = field(default=LOSS_KEYS, compare=False, repr=False)

    def value(self, key: str) -> float:
        named = {"G_GAN": self.g_gan, "G_L1": self.g_l1, "D_real": self.d_real, "D_fake": self.d_fake}
        return named[key] if key in named else self.extras[key]

    def format(self) -> str:
        """The record as a log line, in the trainer's own layout (trailing space included)."""
        head = "(epoch: %d, iters: %d, time: %.3f, data: %.3f) " % (
            self.epoch,
            self.iters,
            self.time_s,
            self.data_s,
        )
        return head + "".join("%s: %.3f " % (k, self.value(k)) for k in self.key_order)


@dataclass
class LossLog:
    """Parsed log lines in file order: banner text is kept verbatim beside records."""

    lines: list[str | LossRecord] = field(default_factory=list)
    trailing_newline: bool = True

    @property
    def records(self) -> list[LossRecord]:
        return [ln for ln in self.lines if isinstance(ln, LossRecord)]

    def dumps(self) -> str:
        text = "\n".join(ln.format() if isinstance(ln, LossRecord) else ln for ln in self.lines)
        return text + "\n" if self.lines and self.trailing_newline else text


def _number(text: str, lineno: int, line: str, kind=float):
    try:
        value = kind(text.strip())
    except ValueError:
        raise ParseError(lineno, line, f"bad number {text.strip()!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, line, f"non-finite value {text.strip()!r}")
    return value


def _parse_record(line: str, lineno: int) -> LossRecord:
    m = _HEAD.fullmatch(line)
    if m is None:
        raise ParseError(lineno, line, "unrecognised record header")
    epoch = _number(m["epoch"], lineno, line, int)
    iters = _number(m["iters"], lineno, line, int)
    if epoch < 1:
        raise ParseError(lineno, line, "epoch must be >= 1")
    tokens = m["rest"].split()
    if len(tokens) % 2:
        raise ParseError(lineno, line, "unpaired key/value token")
    values: dict[str, float] = {}
    for key, val in zip(tokens[::2], tokens[1::2]):
        if not key.endswith(":"):
            raise ParseError(lineno, line, f"expected 'key:' got {key!r}")
        values[key[:-1]] = _number(val, lineno, line)
    missing = [k for k in LOSS_KEYS if k not in values]
    if missing:
        raise ParseError(lineno, line, f"missing {', '.join(missing)}")
    return LossRecord(
        epoch=epoch,
        iters=iters,
        time_s=_number(m["time"], lineno, line),
        data_s=_number(m["data"], lineno, line),
        g_gan=values["G_GAN"],
        g_l1=values["G_L1"],
        d_real=values["D_real"],
        d_fake=values["D_fake"],
        extras={k: v for k, v in values.items() if k not in LOSS_KEYS},
        key_order=tuple(values),
    )


def read_loss_log(text: str) -> LossLog:
    """Parse a training log, keeping non-record lines for re-serialisation."""
    lines = text.split("\n")
    trailing = text.endswith("\n")
    if trailing:
        lines.pop()
    out: list[str | LossRecord] = []
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("(epoch"):
            out.append(_parse_record(line, lineno))
        else:
            out.append(line)
    return LossLog(out, trailing)


def parse_loss_log(text: str) -> list[LossRecord]:
    """Loss records in file order; banner and blank lines are skipped."""
    return read_loss_log(text).records


@dataclass(frozen=True)
class MetricsConfig:
    lambda_l1: float = 100.0
    sample_size: int = 50
    epoch_regex: str = DEFAULT_EPOCH_REGEX
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.lambda_l1 > 0:
            raise ValueError("lambda_l1 must be positive")
        if self.sample_size < 1:
            raise ValueError("sample_size must be at least 1")
        pattern = re.compile(self.epoch_regex)
        if "epoch" not in pattern.groupindex:
            raise ValueError("epoch_regex needs a named group 'epoch'")


def total_losses(record: LossRecord, config: MetricsConfig = MetricsConfig()) -> tuple[float, float]:
    """``(g_gan + lambda_l1 * g_l1, d_real + d_fake)``."""
    return record.g_gan + config.lambda_l1 * record.g_l1, record.d_real + record.d_fake


LOSS_SERIES = ("G_GAN", "G_L1", "D_real", "D_fake", "G_total", "D_total")


def loss_epoch_means(records: Sequence[LossRecord], config: MetricsConfig = MetricsConfig()) -> list[dict]:
    """Per-epoch means of the four logged losses and both totals."""
    groups: dict[int, list[LossRecord]] = defaultdict(list)
    for r in records:
        groups[r.epoch].append(r)
    rows = []
    for epoch in sorted(groups):
        recs = groups[epoch]
        totals = [total_losses(r, config) for r in recs]
        cols = {
            "G_GAN": [r.g_gan for r in recs],
            "G_L1": [r.g_l1 for r in recs],
            "D_real": [r.d_real for r in recs],
            "D_fake": [r.d_fake for r in recs],
            "G_total": [t[0] for t in totals],
            "D_total": [t[1] for t in totals],
        }
        row = {"epoch": epoch, "records": len(recs)}
        row.update({k: float(np.mean(v)) for k, v in cols.items()})
        rows.append(row)
    return rows


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    n_samples: int
    mean_core_found: float
    core_recall: float
    mean_total_adjacencies: float
    mean_extra: float
    std_total_adjacencies: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def group_by_epoch(
    reports: Iterable[AdjacencyReport], config: MetricsConfig = MetricsConfig(), strict: bool = True
) -> dict[int, list[AdjacencyReport]]:
    """Reports keyed by the epoch captured from their image ids.

    With ``strict`` any unmatched id raises :class:`RegexMismatch`; otherwise
    unmatched ids are dropped unless none match at all.
    """
    pattern = re.compile(config.epoch_regex)
    groups: dict[int, list[AdjacencyReport]] = defaultdict(list)
    unmatched = []
    n = 0
    for r in reports:
        n += 1
        m = pattern.search(r.image_id)
        if m is None:
            unmatched.append(r.image_id)
        else:
            groups[int(m["epoch"])].append(r)
    if unmatched and (strict or len(unmatched) == n):
        raise RegexMismatch(unmatched)
    return dict(groups)


def _aggregate(epoch: int, sample: list[AdjacencyReport]) -> EpochMetrics:
    found = np.array([r.core_found for r in sample], dtype=float)
    total = np.array([r.total_adjacencies for r in sample], dtype=float)
    extra = np.array([r.extra for r in sample], dtype=float)
    core_total = max(r.core_total for r in sample)
    mean_found = float(found.mean())
    return EpochMetrics(
        epoch=epoch,
        n_samples=len(sample),
        mean_core_found=mean_found,
        core_recall=mean_found / core_total if core_total else 0.0,
        mean_total_adjacencies=float(total.mean()),
        mean_extra=float(extra.mean()),
        std_total_adjacencies=float(total.std()),
    )


def epoch_metrics(
    reports: Iterable[AdjacencyReport], config: MetricsConfig = MetricsConfig(), strict: bool = True
) -> list[EpochMetrics]:
    """Aggregate a seeded sample of ``config.sample_size`` reports per epoch.

    Within an epoch, reports are sorted by image id before sampling, so the
    result does not depend on input order.
    """
    out = []
    for epoch, group in sorted(group_by_epoch(reports, config, strict).items()):
        group = sorted(group, key=lambda r: r.image_id)
        k = min(config.sample_size, len(group))
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(epoch,)))
        picks = np.sort(rng.choice(len(group), size=k, replace=False))
        out.append(_aggregate(epoch, [group[i] for i in picks]))
    return out


@dataclass(frozen=True)
class SufficiencyRow:
    size: int
    mean_abs_rel_error: float
    within_fraction: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sample_sufficiency(
    reports: Sequence[AdjacencyReport],
    sizes: Sequence[int],
    resamples: int,
    config: MetricsConfig = MetricsConfig(),
    tolerance: float = 0.05,
) -> list[SufficiencyRow]:
    """How well samples of each size estimate the population mean of total adjacencies.

    For every size, ``resamples`` seeded draws without replacement are taken;
    the row reports the mean absolute relative error of the sample mean and
    the fraction of draws within ``tolerance`` of the population mean.
    """
    if resamples < 1:
        raise ValueError("resamples must be positive")
    if not sizes or min(sizes) < 1:
        raise ValueError("sizes must be positive integers")
    ordered = sorted(reports, key=lambda r: r.image_id)
    values = np.array([r.total_adjacencies for r in ordered], dtype=float)
    if len(values) < max(sizes):
        raise InsufficientReports(f"{len(values)} reports, largest sample size {max(sizes)}")
    population = values.mean()
    scale = abs(population) if population else 1.0
    rows = []
    for size in sorted(set(sizes)):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(size,)))
        errors = np.empty(resamples)
        for t in range(resamples):
            picks = np.sort(rng.choice(len(values), size=size, replace=False))
            errors[t] = abs(values[picks].mean() - population) / scale
        rows.append(SufficiencyRow(size, float(errors.mean()), float(np.mean(errors <= tolerance))))
    return rows


@dataclass(frozen=True)
class PhaseSegmentation:
    early_end: int
    middle_end: int
    turning_points: dict[str, int] = field(default_factory=dict)
    sse: float = 0.0

    def to_dict(self) -> dict:
        return {
            "early_end": self.early_end,
            "middle_end": self.middle_end,
            "turning_points": dict(self.turning_points),
            "sse": self.sse,
        }


def _hinge_sse(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SSE of the continuous fit ``a + b x + c (x-k1)+ + d (x-k2)+`` for all knot pairs.

    Knots run over the interior sample points with at least one point
    between consecutive knots and ends; returns (i1, i2, sse) with knots
    ``x[i1] < x[i2]``.
    """
    n = len(x)
    lo, span = x[0], x[-1] - x[0]
    xs = (x - lo) / span
    yc = y - y.mean()
    knots = np.arange(1, n - 1)
    hinge = np.maximum(xs[None, :] - xs[knots][:, None], 0.0)

    i1, i2 = np.array(list(combinations(range(len(knots)), 2))).T
    h_sum = hinge.sum(axis=1)
    h_x = hinge @ xs
    h_y = hinge @ yc
    h_h = hinge @ hinge.T

    p = len(i1)
    gram = np.empty((p, 4, 4))
    gram[:, 0, 0] = n
    gram[:, 0, 1] = gram[:, 1, 0] = xs.sum()
    gram[:, 1, 1] = xs @ xs
    gram[:, 0, 2] = gram[:, 2, 0] = h_sum[i1]
    gram[:, 0, 3] = gram[:, 3, 0] = h_sum[i2]
    gram[:, 1, 2] = gram[:, 2, 1] = h_x[i1]
    gram[:, 1, 3] = gram[:, 3, 1] = h_x[i2]
    gram[:, 2, 2] = h_h[i1, i1]
    gram[:, 3, 3] = h_h[i2, i2]
    gram[:, 2, 3] = gram[:, 3, 2] = h_h[i1, i2]
    rhs = np.empty((p, 4))
    rhs[:, 0] = 0.0
    rhs[:, 1] = xs @ yc
    rhs[:, 2] = h_y[i1]
    rhs[:, 3] = h_y[i2]
    beta = np.linalg.solve(gram, rhs[..., None])[..., 0]
    sse = np.maximum(yc @ yc - np.einsum("pk,pk->p", beta, rhs), 0.0)
    return knots[i1], knots[i2], sse


def detect_phases(
    series: Sequence[tuple[float, float]], name: str = "series", rel_tol: float = 1e-9
) -> PhaseSegmentation:
    """Split a curve into three linear phases by exhaustive breakpoint search.

    Fits a continuous three-piece linear model with knots at two sample
    epochs ``b1 < b2`` and returns the pair of least squared error.  Pairs
    within ``rel_tol`` (relative to the series' total variation) of the
    best count as tied, and the lexicographically smallest wins.
    """
    pts = [(float(e), float(v)) for e, v in series]
    if len(pts) < 6:
        raise TooFewPoints(f"need at least 6 points, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.any(np.diff(x) <= 0):
        raise ValueError("epochs must be strictly increasing")
    if not np.all(np.isfinite(y)):
        raise ValueError("values must be finite")
    i1, i2, sse = _hinge_sse(x, y)
    scale = float(((y - y.mean()) ** 2).sum())
    best = sse.min()
    tied = np.flatnonzero(sse <= best + rel_tol * max(scale, 1e-300))
    k = min(tied, key=lambda t: (i1[t], i2[t]))
    b1, b2 = _as_epoch(x[i1[k]]), _as_epoch(x[i2[k]])
    return PhaseSegmentation(b1, b2, {name: b1}, float(sse[k]))


def _as_epoch(v: float):
    return int(v) if float(v).is_integer() else float(v)


def turning_points(curves: dict[str, Sequence[tuple[float, float]]]) -> dict[str, int]:
    """First breakpoint of each curve's three-phase fit."""
    return {name: detect_phases(s, name).early_end for name, s in sorted(curves.items()) if len(s) >= 6}


def stability_epoch(
    series: Sequence[tuple[float, float]], window: int = 11, fraction: float = 0.1
):
    """First epoch whose trailing ``window`` has std below ``fraction`` of the series range.

    Returns ``None`` when the series never settles or is shorter than the window.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    if len(series) < window:
        return None
    x = np.array([e for e, _ in series])
    y = np.array([v for _, v in series], dtype=float)
    spread = y.max() - y.min()
    windows = np.lib.stride_tricks.sliding_window_view(y, window)
    calm = np.flatnonzero(windows.std(axis=1) <= fraction * spread)
    return _as_epoch(x[calm[0] + window - 1]) if calm.size else None


def synthetic_loss_log(
    epochs: int = 500, lines_per_epoch: int = 100, seed: int = 0, banner: bool = True
) -> str:
    """A plausible training log for tests: G_L1 falls fast then flattens, G_GAN rises.

    Lines follow the trainer's layout exactly, so parsing and
    re-serialising reproduces the text.
    """
    rng = np.random.default_rng(seed)
    e = np.repeat(np.arange(1, epochs + 1), lines_per_epoch)
    it = np.tile(np.arange(1, lines_per_epoch + 1) * 100, epochs)
    frac = e / epochs
    g_l1 = 5 + 35 * np.exp(-e / 8.0) + rng.normal(0, 1.5, e.size) * (1 - 0.6 * frac)
    g_gan = 0.7 + 1.3 / (1 + np.exp(-(e - 20) / 6.0)) + rng.normal(0, 0.15, e.size)
    noise = 0.25 * np.exp(-e / 150.0)
    d_real = 0.35 + 0.3 * np.exp(-e / 60.0) + rng.normal(0, 1, e.size) * noise
    d_fake = 0.3 + 0.35 * np.exp(-e / 60.0) + rng.normal(0, 1, e.size) * noise
    t = rng.uniform(0.05, 0.2, e.size)
    d = rng.uniform(0.001, 0.01, e.size)
    out = []
    if banner:
        out.append("================ Training Loss (Mon Jan  1 00:00:00 2024) ================")
    for k in range(e.size):
        rec = LossRecord(
            int(e[k]), int(it[k]), float(t[k]), float(d[k]),
            float(g_gan[k]), float(max(g_l1[k], 0.0)), float(abs(d_real[k])), float(abs(d_fake[k])),
        )
        out.append(rec.format())
    return "\n".join(out) + "\n"
