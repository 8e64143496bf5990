"""Write CSV tables, phase JSON and static SVG charts for an evaluation run."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import matplotlib
from matplotlib.figure import Figure

from topobench.metrics import (
    LOSS_SERIES,
    EpochMetrics,
    LossRecord,
    MetricsConfig,
    PhaseSegmentation,
    loss_epoch_means,
    total_losses,
)

# curves drawn in the loss chart: the four logged losses and the discriminator total
LOSS_CURVES = ("G_GAN", "G_L1", "D_real", "D_fake", "D_total")
LOSS_RECORD_FIELDS = (
    "epoch", "iters", "time_s", "data_s", "G_GAN", "G_L1", "D_real", "D_fake", "G_total", "D_total",
)
LEARNING_FIELDS = (
    "epoch", "n_samples", "mean_core_found", "core_recall",
    "mean_total_adjacencies", "mean_extra", "std_total_adjacencies",
)


class OutputUnwritable(OSError):
    pass


@dataclass
class ReportBundle:
    directory: Path
    files: list[Path] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"directory": str(self.directory), "files": [p.name for p in self.files]}


def _num(v) -> str:
    # repr round-trips floats exactly
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def _figure(title: str, xlabel: str, ylabel: str):
    fig = Figure(figsize=(8, 4.5))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save_svg(fig: Figure, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "topobench", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _phase_rules(ax, phases: PhaseSegmentation | None) -> None:
    if phases is None:
        return
    for k, epoch in (("early_end", phases.early_end), ("middle_end", phases.middle_end)):
        ax.axvline(epoch, color="0.4", linestyle=":", linewidth=1, gid=f"phase-{k}")


def loss_chart(rows: list[dict], phases: PhaseSegmentation | None, path: Path) -> None:
    fig = Figure(figsize=(10, 8))
    axes = fig.subplots(len(LOSS_CURVES), 1, sharex=True)
    epochs = [r["epoch"] for r in rows]
    for ax, key in zip(axes, LOSS_CURVES):
        ax.plot(epochs, [r[key] for r in rows], linewidth=1, gid=f"curve-{key}")
        ax.set_ylabel(key)
        _phase_rules(ax, phases)
    axes[0].set_title("Training losses (per-epoch mean)")
    axes[-1].set_xlabel("epoch")
    _save_svg(fig, path)


def learning_chart(
    metrics: list[EpochMetrics],
    core_total: int,
    dataset_mean: float | None,
    phases: PhaseSegmentation | None,
    path: Path,
) -> None:
    """Mean core adjacencies found and mean total adjacencies per epoch.

    Horizontal reference lines mark the core total and, when known, the
    dataset's mean total adjacencies.
    """
    fig, ax = _figure("Adjacency learning rate", "epoch", "adjacencies per image")
    epochs = [m.epoch for m in metrics]
    ax.plot(epochs, [m.mean_core_found for m in metrics], marker="o", markersize=2,
            label="core found", gid="curve-core")
    ax.plot(epochs, [m.mean_total_adjacencies for m in metrics], marker="s", markersize=2,
            label="all adjacencies", gid="curve-total")
    ax.axhline(core_total, color="tab:green", linestyle="--", linewidth=1,
               label="core total", gid="ref-core-total")
    if dataset_mean is not None:
        ax.axhline(dataset_mean, color="tab:red", linestyle="--", linewidth=1,
                   label="dataset mean", gid="ref-dataset-mean")
    _phase_rules(ax, phases)
    ax.legend(loc="best")
    _save_svg(fig, path)


def emit_report(
    records: Sequence[LossRecord] | None,
    metrics: Sequence[EpochMetrics],
    phases: PhaseSegmentation | None,
    out_dir: str | Path,
    *,
    core_total: int | None = None,
    dataset_mean: float | None = None,
    config: MetricsConfig = MetricsConfig(),
    stability: dict | None = None,
) -> ReportBundle:
    """Write the evaluation bundle.

    Always writes ``learning_rate.csv`` and ``phases.json``; ``losses.csv``
    and ``loss_epochs.csv`` unless ``records`` is ``None``.  Charts are only
    drawn for non-empty series.  ``stability`` maps curve names to the epoch
    where the curve settles and is stored in ``phases.json``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return _emit(records, list(metrics), phases, out, core_total, dataset_mean, config, stability)
    except OSError as exc:
        raise OutputUnwritable(f"cannot write report to {out}: {exc}") from exc


def _emit(records, metrics, phases, out, core_total, dataset_mean, config, stability) -> ReportBundle:
    bundle = ReportBundle(out)

    if records is not None:
        rows = []
        for r in records:
            g_tot, d_tot = total_losses(r, config)
            rows.append(
                [r.epoch, r.iters, r.time_s, r.data_s, r.g_gan, r.g_l1, r.d_real, r.d_fake, g_tot, d_tot]
            )
        path = out / "losses.csv"
        _write_csv(path, LOSS_RECORD_FIELDS, rows)
        bundle.files.append(path)

        means = loss_epoch_means(records, config)
        path = out / "loss_epochs.csv"
        header = ("epoch", "records") + LOSS_SERIES
        _write_csv(path, header, [[m[k] for k in header] for m in means])
        bundle.files.append(path)
        if means:
            path = out / "losses.svg"
            loss_chart(means, phases, path)
            bundle.files.append(path)

    path = out / "learning_rate.csv"
    _write_csv(path, LEARNING_FIELDS, [[getattr(m, k) for k in LEARNING_FIELDS] for m in metrics])
    bundle.files.append(path)

    path = out / "phases.json"
    payload = phases.to_dict() if phases is not None else None
    summary = {
        "phases": payload,
        "core_total": core_total,
        "dataset_mean": dataset_mean,
        "stability": dict(sorted((stability or {}).items())),
    }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    bundle.files.append(path)

    if metrics:
        total = core_total if core_total is not None else 0
        path = out / "learning_rate.svg"
        learning_chart(metrics, total, dataset_mean, phases, path)
        bundle.files.append(path)
    return bundle
