"""Stand in for a trained GAN: degrade targets on a schedule, then evaluate the epoch tree.

Run: python demos/degradation_curve.py [out_dir] [plans] [epochs]
"""

import sys
from pathlib import Path

from topobench.extract import batch_extract, extract_report
from topobench.metrics import MetricsConfig, detect_phases, epoch_metrics, parse_loss_log, synthetic_loss_log
from topobench.plangen import GenParams, generate_dataset, rectangle_boundary
from topobench.raster import RGB, DegradeSchedule, render_target, write_fake_epochs
from topobench.report import emit_report
from topobench.topology import case_house, rgb_palette_for


def main(out: Path, count: int, epochs: int) -> None:
    house = case_house()
    pal = rgb_palette_for(house)
    plans, _ = generate_dataset(house, rectangle_boundary(), GenParams(seed=0), count)
    targets = [render_target(p, RGB, pal) for p in plans]
    mean_total = sum(extract_report(t, pal, house, RGB).total_adjacencies for t in targets) / len(targets)

    write_fake_epochs(targets, DegradeSchedule.linear(epochs, seed=0), out)
    reports = batch_extract(out / "fake_epochs", pal, house, RGB)
    rows = epoch_metrics(reports, MetricsConfig(seed=0))
    for m in rows:
        print(f"epoch {m.epoch:3d}: recall {m.core_recall:.2f}, adjacencies {m.mean_total_adjacencies:.1f}")

    phases = detect_phases([(m.epoch, m.core_recall) for m in rows], "core_recall")
    print(f"phases end at epochs {phases.early_end} and {phases.middle_end}")
    records = parse_loss_log(synthetic_loss_log(epochs=epochs, lines_per_epoch=20, seed=0))
    bundle = emit_report(records, rows, phases, out / "report", core_total=len(house.edges), dataset_mean=mean_total)
    print("report:", ", ".join(p.name for p in bundle.files))


if __name__ == "__main__":
    argv = sys.argv[1:]
    main(
        Path(argv[0] if argv else "demo_out/degradation"),
        int(argv[1]) if len(argv) > 1 else 20,
        int(argv[2]) if len(argv) > 2 else 12,
    )
