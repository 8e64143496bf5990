"""``topobench`` command line: generate datasets, simulate GAN epochs, evaluate outputs.

Every subcommand prints one JSON object on stdout and logs to stderr.
Settings come from flags, then an optional TOML file (``--config``), then
built-in defaults.  Exit codes: 2 configuration, 3 generation, 4 I/O,
5 no image id matched the epoch regex.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from topobench import extract, metrics, plangen, qualify, raster, report, topology

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("topobench")

EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_IO = 4
EXIT_REGEX = 5


class CliError(Exception):
    def __init__(self, code: int, message: str, payload: dict | None = None):
        super().__init__(message)
        self.code = code
        self.payload = payload or {}


@dataclass
class RunConfig:
    """Resolved settings for one invocation."""

    seed: int
    jobs: int
    graph: topology.TopologyGraph
    palette: topology.Palette
    boundary: plangen.SiteBoundary
    out: Path
    gen: plangen.GenParams
    extract: extract.ExtractParams
    metrics: metrics.MetricsConfig
    mode: str
    source: str
    layout: str
    scale: int


class _Settings:
    """Look up a setting in the flags, then the TOML section, then a default."""

    def __init__(self, args: argparse.Namespace, table: dict):
        self.args = args
        self.table = table

    def get(self, section: str | None, key: str, default=None, flag: str | None = None):
        value = getattr(self.args, flag or key, None)
        if value is not None:
            return value
        scope = self.table.get(section, {}) if section else self.table
        if not isinstance(scope, dict):
            raise CliError(EXIT_CONFIG, f"config section [{section}] must be a table")
        return scope.get(key, default)


def _load_toml(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"bad config file {path}: {exc}") from None


def _seed(settings: _Settings) -> int:
    value = settings.get(None, "seed")
    if value is None:
        value = os.environ.get("TOPOBENCH_SEED", 0)
    try:
        return int(value)
    except (TypeError, ValueError):
        raise CliError(EXIT_CONFIG, f"seed must be an integer, got {value!r}") from None


def _input_path(value, what: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise CliError(EXIT_CONFIG, f"{what} not found: {path}")
    return path


def resolve(args: argparse.Namespace) -> RunConfig:
    s = _Settings(args, _load_toml(args.config))
    try:
        graph_path = s.get("paths", "graph")
        graph = (
            topology.load_graph(_input_path(graph_path, "graph file"))
            if graph_path
            else topology.case_house()
        )
        check = topology.validate_graph(graph)
        if not check.ok:
            raise CliError(EXIT_CONFIG, "invalid graph: " + "; ".join(check.violations))

        mode = s.get("mode", "mode", raster.RGB)
        if mode not in (raster.RGB, raster.GREY):
            raise CliError(EXIT_CONFIG, f"mode must be rgb or grey, got {mode!r}")
        palette_path = s.get("paths", "palette")
        if palette_path:
            palette = topology.load_palette(_input_path(palette_path, "palette file"))
        elif mode == raster.GREY:
            palette = topology.grey_palette()
        else:
            palette = topology.rgb_palette_for(graph)
        sep = topology.validate_palette(palette, check_midpoints=False)
        if not sep.ok:
            raise CliError(EXIT_CONFIG, "invalid palette: " + "; ".join(sep.violations))
        for problem in topology.validate_palette(palette).violations:
            log.warning("palette: %s", problem)

        boundary_spec = s.get("paths", "boundary", "rectangle")
        try:
            boundary = plangen.load_boundary(boundary_spec)
        except FileNotFoundError:
            raise CliError(EXIT_CONFIG, f"boundary not found: {boundary_spec}") from None

        seed = _seed(s)
        gen = plangen.GenParams(
            max_adjacency_distance=int(s.get("gen", "max_adjacency_distance", 2)),
            density=float(s.get("gen", "density", 250)),
            max_retries=int(s.get("gen", "max_retries", 50)),
            seed=seed,
            min_fill=float(s.get("gen", "min_fill", 0.5)),
        )
        ext = extract.ExtractParams(
            min_area_fraction=float(s.get("extract", "min_area_fraction", 0.002)),
            dilation_radius=int(s.get("extract", "dilation_radius", 3)),
            min_overlap=int(s.get("extract", "min_overlap", 8)),
        )
        met = metrics.MetricsConfig(
            lambda_l1=float(s.get("metrics", "lambda_l1", 100.0)),
            sample_size=int(s.get("metrics", "sample_size", 50)),
            epoch_regex=str(s.get("metrics", "epoch_regex", metrics.DEFAULT_EPOCH_REGEX)),
            seed=seed,
        )
        source = s.get("mode", "source", raster.BOUNDARY)
        layout = s.get("mode", "layout", "pairs")
        if source not in (raster.BOUNDARY, raster.BLANK):
            raise CliError(EXIT_CONFIG, f"source must be boundary or blank, got {source!r}")
        if layout not in ("pairs", "split"):
            raise CliError(EXIT_CONFIG, f"layout must be pairs or split, got {layout!r}")
        jobs = int(s.get(None, "jobs", os.cpu_count() or 1))
        scale = int(s.get("mode", "scale", 4))
        if jobs < 1 or scale < 1:
            raise CliError(EXIT_CONFIG, "jobs and scale must be positive")
        return RunConfig(
            seed=seed,
            jobs=jobs,
            graph=graph,
            palette=palette,
            boundary=boundary,
            out=Path(s.get("paths", "out", "out")),
            gen=gen,
            extract=ext,
            metrics=met,
            mode=mode,
            source=source,
            layout=layout,
            scale=scale,
        )
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG, f"configuration error: {exc}") from None


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _reference_mean(plans, cfg: RunConfig) -> float:
    """Mean total adjacencies over pristine target renders of ``plans``."""
    totals = [
        extract.extract_report(
            raster.render_target(p, cfg.mode, cfg.palette, cfg.scale, graph=cfg.graph),
            cfg.palette, cfg.graph, cfg.mode, cfg.extract,
        ).total_adjacencies
        for p in plans
    ]
    return float(np.mean(totals)) if totals else 0.0


def _generate(cfg: RunConfig, count: int):
    feas = plangen.pre_evaluate(cfg.graph, cfg.boundary, cfg.gen, trials=20)
    log.info("pre-evaluation: %d/20 qualified", feas.qualified)
    if feas.qualified == 0:
        raise CliError(
            EXIT_GENERATION,
            "pre-evaluation produced no qualified plan in 20 trials",
            {"pre_evaluation": feas.to_dict()},
        )
    try:
        plans, stats = plangen.generate_dataset(cfg.graph, cfg.boundary, cfg.gen, count, cfg.jobs)
    except plangen.GenerationFailed as exc:
        raise CliError(
            EXIT_GENERATION,
            str(exc),
            {"pre_evaluation": feas.to_dict(), "reasons": dict(exc.reasons)},
        ) from None
    return plans, stats, feas


def _settings_dict(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "graph_id": cfg.graph.graph_id,
        "boundary": cfg.boundary.name,
        "mode": cfg.mode,
        "source": cfg.source,
        "layout": cfg.layout,
        "scale": cfg.scale,
        "gen": {
            "max_adjacency_distance": cfg.gen.max_adjacency_distance,
            "density": cfg.gen.density,
            "max_retries": cfg.gen.max_retries,
            "min_fill": cfg.gen.min_fill,
        },
        "extract": cfg.extract.to_dict(),
    }


def cmd_gen(args, cfg: RunConfig) -> dict:
    plans, stats, feas = _generate(cfg, args.count)
    paths = raster.write_dataset(
        plans, cfg.graph, cfg.palette, cfg.out,
        mode=cfg.mode, source=cfg.source, layout=cfg.layout, scale=cfg.scale,
        val_fraction=args.val_fraction, jobs=cfg.jobs,
    )
    entries = []
    for i, (plan, path) in enumerate(zip(plans, paths)):
        plan.save(cfg.out / "plans" / f"{i:06d}.json")
        verdict = qualify.check_plan(plan, cfg.graph)
        entries.append(
            {
                "index": i,
                "seed": plan.seed,
                "file": path.relative_to(cfg.out).as_posix(),
                **verdict.to_dict(),
            }
        )
    manifest = {
        **_settings_dict(cfg),
        "count": len(plans),
        "pre_evaluation": feas.to_dict(),
        "attempts": stats.attempts,
        "rejections": dict(sorted(stats.rejections.items())),
        "plans": entries,
    }
    _write_json(cfg.out / "manifest.json", manifest)
    result = {
        "seed": cfg.seed,
        "count": len(plans),
        "qualified": sum(e["verdict"] == "Qualified" for e in entries),
        "pre_evaluation": feas.to_dict(),
        "stats": stats.to_dict(),
        "manifest": str(cfg.out / "manifest.json"),
    }
    if not args.no_reference:
        ref = _reference_mean(plans, cfg)
        _write_json(cfg.out / "reference.json", {"dataset_mean": ref, "images": len(plans), "mode": cfg.mode})
        result["dataset_mean"] = ref
    return result


def _load_plans(paths: list[str]) -> list[plangen.FloorPlan]:
    files: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            files.extend(sorted(path.glob("*.json")))
        elif path.exists():
            files.append(path)
        else:
            raise CliError(EXIT_CONFIG, f"plan file not found: {path}")
    return [plangen.FloorPlan.load(f) for f in files]


def cmd_qualify(args, cfg: RunConfig) -> dict:
    plans = _load_plans(args.plans)
    results = []
    for plan in plans:
        try:
            results.append(qualify.check_plan(plan, cfg.graph, args.min_contact))
        except qualify.GraphMismatch as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
    return {
        "seed": cfg.seed,
        "summary": qualify.summarize(results),
        "plans": [r.to_dict() for r in results],
    }


def cmd_render(args, cfg: RunConfig) -> dict:
    plans = _load_plans(args.plans)
    written = []
    for i, plan in enumerate(plans):
        try:
            tgt = raster.render_target(plan, cfg.mode, cfg.palette, cfg.scale, graph=cfg.graph)
        except raster.PaletteMiss as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from None
        src = raster.render_source(plan, cfg.source, cfg.scale, cfg.palette.background, cfg.palette.boundary)
        name = raster.sample_name(i)
        if cfg.layout == "pairs":
            path = cfg.out / name
            raster.compose_pair(src, tgt).save(path)
        else:
            src.save(cfg.out / "A" / name)
            path = cfg.out / "B" / name
            tgt.save(path)
        written.append(str(path))
    return {"seed": cfg.seed, "images": len(written), "files": written}


def _schedule(args, cfg: RunConfig) -> raster.DegradeSchedule:
    if args.levels:
        try:
            levels = [float(v) for v in args.levels.split(",")]
        except ValueError:
            raise CliError(EXIT_CONFIG, f"bad --levels {args.levels!r}") from None
        return raster.DegradeSchedule(tuple(levels), cfg.seed)
    if args.epochs < 1:
        raise CliError(EXIT_CONFIG, "--epochs must be positive")
    return raster.DegradeSchedule.linear(args.epochs, cfg.seed, args.start, args.stop)


def cmd_simulate(args, cfg: RunConfig) -> dict:
    schedule = _schedule(args, cfg)
    if args.plans:
        plans = _load_plans([args.plans])[: args.count]
    else:
        plans, _, _ = _generate(cfg, args.count)
    targets = [raster.render_target(p, cfg.mode, cfg.palette, cfg.scale, graph=cfg.graph) for p in plans]
    paths = raster.write_fake_epochs(targets, schedule, cfg.out, cfg.jobs)
    ref = _reference_mean(plans, cfg)
    _write_json(cfg.out / "reference.json", {"dataset_mean": ref, "images": len(plans), "mode": cfg.mode})
    _write_json(
        cfg.out / "simulate.json",
        {**_settings_dict(cfg), "levels": list(schedule.levels), "plans": len(plans)},
    )
    return {
        "seed": cfg.seed,
        "epochs": len(schedule.levels),
        "plans": len(plans),
        "images": len(paths),
        "dataset_mean": ref,
        "root": str(cfg.out / "fake_epochs"),
    }


def _batch(args, cfg: RunConfig):
    try:
        return extract.batch_extract(
            args.images, cfg.palette, cfg.graph, cfg.mode, cfg.extract, args.filter, cfg.jobs
        )
    except extract.DirectoryUnreadable as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    except extract.PaletteMismatch as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def cmd_extract(args, cfg: RunConfig) -> dict:
    reports = _batch(args, cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    extract.write_jsonl(reports, cfg.out / "reports.jsonl")
    extract.write_csv(reports, cfg.out / "reports.csv")
    return {
        "seed": cfg.seed,
        "images": len(reports),
        "errors": sum(r.error is not None for r in reports),
        "mean_core_recall": float(np.mean([r.core_recall for r in reports])) if reports else None,
        "mean_total_adjacencies": float(np.mean([r.total_adjacencies for r in reports])) if reports else None,
    }


def _read_log(path) -> list[metrics.LossRecord]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read loss log: {exc}") from None
    try:
        return metrics.parse_loss_log(text)
    except metrics.ParseError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def _loss_turning_points(records, cfg: RunConfig) -> tuple[dict, dict]:
    means = metrics.loss_epoch_means(records, cfg.metrics)
    curves = {k: [(m["epoch"], m[k]) for m in means] for k in report.LOSS_CURVES}
    stability = {k: metrics.stability_epoch(v) for k, v in curves.items()}
    return metrics.turning_points(curves), stability


def _dataset_mean(path) -> float | None:
    if not path:
        return None
    try:
        return float(json.loads(Path(path).read_text())["dataset_mean"])
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad reference file {path}: {exc}") from None


def cmd_evaluate(args, cfg: RunConfig) -> dict:
    reports = _batch(args, cfg)
    try:
        per_epoch = metrics.epoch_metrics(reports, cfg.metrics, strict=False)
    except metrics.RegexMismatch as exc:
        raise CliError(EXIT_REGEX, str(exc), {"unmatched": len(exc.unmatched)}) from None
    records = _read_log(args.loss_log) if args.loss_log else None

    phases = None
    if len(per_epoch) >= 6:
        recall = [(m.epoch, m.core_recall) for m in per_epoch]
        phases = metrics.detect_phases(recall, "core_recall")
        points = dict(phases.turning_points)
        points.update(metrics.turning_points({"total_adjacencies": [(m.epoch, m.mean_total_adjacencies) for m in per_epoch]}))
        stability = {}
        if records:
            loss_points, stability = _loss_turning_points(records, cfg)
            points.update(loss_points)
        phases = replace(phases, turning_points=points)
    else:
        stability = {}
        log.warning("%d epochs found; phase detection needs 6", len(per_epoch))

    core_total = max((r.core_total for r in reports), default=None)
    try:
        bundle = report.emit_report(
            records, per_epoch, phases, cfg.out,
            core_total=core_total, dataset_mean=_dataset_mean(args.reference),
            config=cfg.metrics, stability=stability,
        )
    except report.OutputUnwritable as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    extract.write_jsonl(reports, cfg.out / "reports.jsonl")
    return {
        "seed": cfg.seed,
        "images": len(reports),
        "epochs": len(per_epoch),
        "phases": phases.to_dict() if phases else None,
        "final_core_recall": per_epoch[-1].core_recall if per_epoch else None,
        "bundle": bundle.to_dict(),
    }


def cmd_losscurve(args, cfg: RunConfig) -> dict:
    records = _read_log(args.loss_log)
    phases, stability = None, {}
    means = metrics.loss_epoch_means(records, cfg.metrics)
    if len(means) >= 6:
        points, stability = _loss_turning_points(records, cfg)
        g_l1 = [(m["epoch"], m["G_L1"]) for m in means]
        phases = replace(metrics.detect_phases(g_l1, "G_L1"), turning_points=points)
    try:
        bundle = report.emit_report(records, [], phases, cfg.out, config=cfg.metrics, stability=stability)
    except report.OutputUnwritable as exc:
        raise CliError(EXIT_IO, str(exc)) from None
    return {
        "seed": cfg.seed,
        "records": len(records),
        "epochs": len(means),
        "phases": phases.to_dict() if phases else None,
        "stability": stability,
        "bundle": bundle.to_dict(),
    }


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML settings file")
    common.add_argument("--seed", type=int, help="root seed (fallback: $TOPOBENCH_SEED, then 0)")
    common.add_argument("--jobs", type=int, help="worker cap (default: available cores)")
    common.add_argument("--graph", help="topology graph JSON (default: case-house fixture)")
    common.add_argument("--palette", help="palette JSON (default: grey levels or graph colours)")
    common.add_argument("--boundary", help="fixture name, boundary JSON or mask image")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=[raster.RGB, raster.GREY])
    common.add_argument("--source", choices=[raster.BOUNDARY, raster.BLANK])
    common.add_argument("--layout", choices=["pairs", "split"])
    common.add_argument("--scale", type=int, help="pixels per cell")
    common.add_argument("--density", type=float)
    common.add_argument("--max-adjacency-distance", dest="max_adjacency_distance", type=int)
    common.add_argument("--max-retries", dest="max_retries", type=int)
    common.add_argument("--min-fill", dest="min_fill", type=float)
    common.add_argument("--min-area-fraction", dest="min_area_fraction", type=float)
    common.add_argument("--dilation-radius", dest="dilation_radius", type=int)
    common.add_argument("--min-overlap", dest="min_overlap", type=int)
    common.add_argument("--lambda-l1", dest="lambda_l1", type=float)
    common.add_argument("--sample-size", dest="sample_size", type=int)
    common.add_argument("--epoch-regex", dest="epoch_regex")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="topobench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a paired image dataset")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=0.0)
    p.add_argument("--no-reference", dest="no_reference", action="store_true",
                   help="skip the dataset-mean adjacency reference")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("qualify", parents=[common], help="recheck plan files against the graph")
    p.add_argument("plans", nargs="+", help="plan JSON files or directories")
    p.add_argument("--min-contact", dest="min_contact", type=int, default=2)
    p.set_defaults(func=cmd_qualify)

    p = sub.add_parser("render", parents=[common], help="render plan files to images")
    p.add_argument("plans", nargs="+", help="plan JSON files or directories")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("simulate", parents=[common], help="write a degraded fake-epoch tree")
    p.add_argument("--plans", help="directory of plan JSON files (default: generate)")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--start", type=float, default=1.0)
    p.add_argument("--stop", type=float, default=0.0)
    p.add_argument("--levels", help="comma-separated degradation levels, one per epoch")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", parents=[common], help="extract adjacency reports from images")
    p.add_argument("images", help="image directory (searched recursively)")
    p.add_argument("--filter", help="regex on relative file paths")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", parents=[common], help="learning-rate and loss report bundle")
    p.add_argument("images", help="epoch image tree")
    p.add_argument("--loss-log", dest="loss_log")
    p.add_argument("--reference", help="reference.json with the dataset mean")
    p.add_argument("--filter", help="regex on relative file paths")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("losscurve", parents=[common], help="loss tables and charts from a loss log")
    p.add_argument("loss_log")
    p.set_defaults(func=cmd_losscurve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve(args)
        result = args.func(args, cfg)
    except CliError as exc:
        log.error("%s", exc)
        print(json.dumps({"error": str(exc), "exit_code": exc.code, **exc.payload}, sort_keys=True))
        return exc.code
    except OSError as exc:
        log.error("I/O error: %s", exc)
        print(json.dumps({"error": str(exc), "exit_code": EXIT_IO}, sort_keys=True))
        return EXIT_IO
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
