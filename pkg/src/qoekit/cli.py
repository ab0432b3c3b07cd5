"""Single command-line entry point wiring all modules together.

Exit codes: 0 success, 1 domain error (printed as one structured line),
2 usage error. A JSON config file can preset any flag; explicit flags
win. The active seed is recorded in every output artifact.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import analysis, pipeline, predictor, synth
from .errors import DomainError
from .model import (DIMENSIONS, FEATURE_NAMES, FeatureVector, PipelineParams,
                    default_grid, load_content, load_grid, read_records,
                    write_mos_csv, record_to_dict)
from .shaper import (VirtualClock, WallClock, detect_language, event_line,
                     schedule_emission, terminal_line, tokenize)

log = logging.getLogger("qoekit")

_MODEL_NAMES = {"linear": "linear-ridge", "knn": "knn", "forest": "tree-ensemble"}


def _add_common(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
    # registered on the root parser and again on every subcommand, so
    # the flags work both before and after the command name; the
    # subcommand copies must not clobber already-parsed root values
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--log-level", default="WARNING" if not suppress else default,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--config", default=default, help="JSON file presetting flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qoekit",
                                     description="QoE toolkit for streaming text services")
    _add_common(parser)
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("serve", help="run the rating-collection service")
    p.add_argument("--content", required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--store", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--virtual-clock", action="store_true",
                   help="stream without real pacing (tests only)")

    p = sub.add_parser("simulate", help="shape one text file through a QoS setting")
    p.add_argument("--text-file", required=True)
    p.add_argument("--speed", type=float, required=True)
    p.add_argument("--pause-at", type=float, required=True)
    p.add_argument("--pause-secs", type=float, required=True)
    p.add_argument("--virtual-clock", action="store_true")
    p.add_argument("--trace-out", default=None)

    p = sub.add_parser("synth", help="generate a synthetic ratings store")
    p.add_argument("--world", default=None, help="world JSON (defaults built in)")
    p.add_argument("--grid", default=None)
    p.add_argument("--raters", type=int, default=21)
    p.add_argument("--conditions", type=int, default=144)
    p.add_argument("--out", required=True)

    p = sub.add_parser("process", help="clean ratings into a MOS table")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--anchors", default=None,
                   help="anchor file: read if present, otherwise written")

    p = sub.add_parser("analyze", help="descriptive analytics over a MOS table")
    p.add_argument("what", choices=["pca", "corr", "mbti", "topics", "dist"])
    p.add_argument("--in", dest="infile", default=None, help="mos.csv")
    p.add_argument("--records", default=None, help="ratings.jsonl")
    p.add_argument("--profiles", default=None, help="raters.jsonl (mbti)")
    p.add_argument("--grid", default=None)
    p.add_argument("--key", default=None, choices=list(FEATURE_NAMES))
    p.add_argument("--dimension", default="overall", choices=list(DIMENSIONS))
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="fit a regression model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True, choices=sorted(_MODEL_NAMES))
    p.add_argument("--dimension", default="overall", choices=list(DIMENSIONS))
    p.add_argument("--target", default="z", choices=["z", "mos"])
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="evaluate a model on a ratings store")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="drop-one-feature ablation table")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True, choices=sorted(_MODEL_NAMES))
    p.add_argument("--dimension", default="overall", choices=list(DIMENSIONS))
    p.add_argument("--target", default="z", choices=["z", "mos"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="predict one configuration")
    p.add_argument("--model", required=True)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--speed", type=float, default=None)
    p.add_argument("--pos", type=float, default=None)
    p.add_argument("--dur", type=float, default=None)
    return parser


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset flags from the --config JSON file; flags always win."""
    if not args.config:
        return
    path = Path(args.config)
    if not path.exists():
        raise DomainError(f"config file not found: {path}", code="file-not-found")
    values = json.loads(path.read_text(encoding="utf-8"))
    for key, value in values.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            # config-only settings, e.g. per-family model hyperparameters
            setattr(args, dest, value)
        elif getattr(args, dest) is None:
            setattr(args, dest, value)


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise DomainError(f"{what} not found: {p}", code="file-not-found")
    return p


def _seed(args: argparse.Namespace) -> int:
    return args.seed if args.seed is not None else 0


def _params(args: argparse.Namespace) -> PipelineParams:
    return PipelineParams(
        z_outlier_threshold=args.tau if args.tau is not None else 2.0,
        srcc_threshold=args.gamma if args.gamma is not None else 0.5,
    )


def _hyper(args: argparse.Namespace, family: str) -> dict:
    models = getattr(args, "models", None)
    if isinstance(models, dict):
        return dict(models.get(family, {}))
    return {}


# ---------------------------------------------------------------------------
# commands


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionService, create_app

    content = load_content(_require_file(args.content, "content fixture"))
    grid = load_grid(_require_file(args.grid, "grid file")) if args.grid else default_grid()
    clock = VirtualClock if args.virtual_clock else WallClock
    service = SessionService(content, grid, args.store, seed=_seed(args),
                             clock_factory=clock)
    app = create_app(service)
    log.info("serving on %s:%d (store=%s)", args.host, args.port, args.store)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_simulate(args) -> int:
    path = _require_file(args.text_file, "text file")
    text = path.read_text(encoding="utf-8")
    tokens = tokenize(text, detect_language(text))
    qos_args = dict(speed=args.speed, pause_pos=args.pause_at, pause_dur=args.pause_secs)
    from .model import QosConfig
    schedule = schedule_emission(tokens, QosConfig(**qos_args))
    clock = VirtualClock() if args.virtual_clock else WallClock()
    clock.start()
    trace = []
    for index, (token, at) in enumerate(schedule.items):
        actual = clock.sleep_until(at)
        print(event_line(index, token), flush=True)
        trace.append({"token": token, "scheduled_at_s": at, "actual_at_s": actual})
    print(terminal_line(len(schedule.items)), flush=True)
    if args.trace_out:
        lateness = sorted(t["actual_at_s"] - t["scheduled_at_s"] for t in trace)
        p95 = lateness[max(0, int(len(lateness) * 0.95) - 1)] if lateness else 0.0
        Path(args.trace_out).write_text(json.dumps({
            "clock_kind": clock.kind,
            "qos": qos_args,
            "total_duration_s": schedule.total_duration_s,
            "p95_lateness_s": p95,
            "items": trace,
        }, ensure_ascii=False, indent=2), encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    world = synth.load_world(_require_file(args.world, "world file")) if args.world \
        else synth.SyntheticWorld()
    if args.seed is not None:
        world = synth.SyntheticWorld.from_dict({**world.to_dict(), "seed": args.seed})
    grid = load_grid(_require_file(args.grid, "grid file")) if args.grid else default_grid()
    records, truth = synth.generate(world, grid, args.raters, args.conditions)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={world.seed} raters={args.raters} conditions={args.conditions}\n")
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
    profiles = synth.make_profiles(world, args.raters)
    from .model import profile_to_dict
    with open(out.parent / "raters.jsonl", "w", encoding="utf-8") as fh:
        fh.write(f"# seed={world.seed}\n")
        for rater_id in sorted(profiles):
            fh.write(json.dumps(profile_to_dict(profiles[rater_id])) + "\n")
    (out.parent / "truth.json").write_text(json.dumps({
        "meta": {"seed": world.seed, "world": world.to_dict()},
        **truth.to_dict(),
    }, indent=2), encoding="utf-8")
    log.info("wrote %d records to %s", len(records), out)
    return 0


def cmd_process(args) -> int:
    records = read_records(_require_file(args.infile, "ratings store"))
    params = _params(args)
    anchors = None
    anchors_path = Path(args.anchors) if args.anchors else None
    if anchors_path and anchors_path.exists():
        loaded = json.loads(anchors_path.read_text(encoding="utf-8"))
        anchors = {dim: tuple(v) for dim, v in loaded["anchors"].items()}
        log.info("using frozen anchors from %s", anchors_path)
    table, report = pipeline.run_pipeline(records, params, anchors)
    meta = {"seed": _seed(args), "tau": params.z_outlier_threshold,
            "gamma": params.srcc_threshold}
    write_mos_csv(args.out, table, meta)
    if anchors_path and not anchors_path.exists():
        anchors_path.write_text(json.dumps(
            {"meta": meta, "anchors": {d: list(v) for d, v in table.anchors.items()}},
            indent=2), encoding="utf-8")
    if args.report:
        Path(args.report).write_text(json.dumps(
            {"meta": meta, **report.to_dict()}, indent=2), encoding="utf-8")
    print(f"records_in={report.records_in} records_out={report.records_out} "
          f"removed={report.records_removed} conditions={len(table.conditions())}")
    return 0


def cmd_analyze(args) -> int:
    from .model import read_mos_csv

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"seed": _seed(args)}

    if args.what == "pca":
        records = read_records(_require_file(args.records, "ratings store"))
        result = analysis.pca(analysis.records_to_samples(records))
        (out_dir / "pca.json").write_text(json.dumps(
            {"meta": meta, **result.to_dict()}, indent=2), encoding="utf-8")
        ratios = [round(float(v), 4) for v in result.explained_variance_ratio]
        print(f"explained_variance_ratio={ratios}")
        return 0

    if args.what == "corr":
        table = read_mos_csv(_require_file(args.infile, "mos table"))
        corr = analysis.dimension_correlations(table)
        (out_dir / "corr.json").write_text(json.dumps(
            {"meta": meta, **corr.to_dict()}, indent=2), encoding="utf-8")
        print(json.dumps(corr.to_dict()["values"]))
        return 0

    if args.what == "mbti":
        from .model import profile_from_dict
        records = read_records(_require_file(args.records, "ratings store"))
        profiles = {}
        with open(_require_file(args.profiles, "profiles file"), encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    profile = profile_from_dict(json.loads(line))
                    profiles[profile.rater_id] = profile
        report = {"meta": meta, "axes": {}}
        for axis in analysis.MBTI_AXES:
            groups = analysis.group_by_mbti(records, axis, profiles)
            axis_out = {}
            for letter, subset in groups.items():
                entry = {"n_records": len(subset)}
                if len(subset) >= 2:
                    result = analysis.pca(analysis.records_to_samples(subset))
                    entry["pca"] = result.to_dict()
                else:
                    entry["warning"] = "too few records for a decomposition"
                axis_out[letter] = entry
            report["axes"][axis] = axis_out
        (out_dir / "mbti.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
        print(f"axes={list(report['axes'])}")
        return 0

    if args.what == "topics":
        table = read_mos_csv(_require_file(args.infile, "mos table"))
        records = read_records(_require_file(args.records, "ratings store"))
        category_of = {r.question_id: r.category for r in records}
        samples = [(category_of[cond.question_id], entry.mos_scaled)
                   for (cond, dim), entry in table.entries.items()
                   if dim == args.dimension and cond.question_id in category_of]
        tiers = analysis.topic_tiers(samples)
        with open(out_dir / "topics.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["tier", "category", "mean_mos", "n"])
            for tier in (analysis.TIER_HIGH, analysis.TIER_MID, analysis.TIER_LOW):
                for category, stats in tiers.get(tier, {}).items():
                    writer.writerow([tier, category, repr(stats["mean_mos"]), stats["n"]])
        print(f"tiers={sorted(tiers)}")
        return 0

    # dist
    if not args.key:
        raise DomainError("analyze dist requires --key", code="usage")
    table = read_mos_csv(_require_file(args.infile, "mos table"))
    grid = load_grid(_require_file(args.grid, "grid file")) if args.grid else None
    export = analysis.distribution_export(table, args.key, args.dimension, grid)
    (out_dir / f"dist_{args.key}.json").write_text(json.dumps(
        {"meta": meta, **export}, indent=2), encoding="utf-8")
    with open(out_dir / f"dist_{args.key}.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["level", "n", "min", "q1", "median", "q3", "max"])
        for level, data in export["levels"].items():
            s = data["summary"]
            writer.writerow([level, len(data["samples"]), s["min"], s["q1"],
                             s["median"], s["q3"], s["max"]])
    for warning in export["warnings"]:
        log.warning("%s", warning)
    print(f"levels={list(export['levels'])}")
    return 0


def cmd_train(args) -> int:
    records = read_records(_require_file(args.infile, "ratings store"))
    family = _MODEL_NAMES[args.model]
    dataset = predictor.build_dataset(records, args.dimension, args.target, _params(args))
    model = predictor.train(family, dataset, _hyper(args, args.model), _seed(args))
    predictor.save_model(model, args.out)
    print(f"trained {family} on {len(dataset.rows)} rows -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = predictor.load_model(_require_file(args.model, "model file"))
    records = read_records(_require_file(args.infile, "ratings store"))
    metrics = predictor.verify_held_out(model, records)
    payload = {"meta": {"seed": model.fingerprint.get("seed")}, **metrics.to_dict()}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    print(json.dumps(metrics.to_dict()))
    return 0


def cmd_ablate(args) -> int:
    records = read_records(_require_file(args.infile, "ratings store"))
    family = _MODEL_NAMES[args.model]
    dataset = predictor.build_dataset(records, args.dimension, args.target)
    results = predictor.ablate(dataset, family, _seed(args), _hyper(args, args.model))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# seed={_seed(args)} model={family} dimension={args.dimension} "
                 f"target={args.target}\n")
        writer = csv.writer(fh)
        writer.writerow(["dropped_feature", "srcc", "plcc", "krcc", "rmse"])
        for label, metrics in results.items():
            writer.writerow([label, repr(metrics.srcc), repr(metrics.plcc),
                             repr(metrics.krcc), repr(metrics.rmse)])
    print(f"ablation rows={list(results)}")
    return 0


def cmd_predict(args) -> int:
    model = predictor.load_model(_require_file(args.model, "model file"))
    flags = {"density": args.rho, "accuracy": args.alpha, "speed": args.speed,
             "pause_pos": args.pos, "pause_dur": args.dur}
    provided = {k: v for k, v in flags.items() if v is not None}
    if len(provided) == len(FEATURE_NAMES) and model.feature_mask == predictor.FULL_MASK:
        features = FeatureVector(tuple(provided[name] for name in FEATURE_NAMES))
        raw, clamped = predictor.predict(model, features)
    else:
        raw, clamped = predictor.predict(model, provided)
    print(json.dumps({"raw": raw, "clamped": clamped}))
    return 0


_COMMANDS = {
    "serve": cmd_serve,
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "process": cmd_process,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except DomainError as exc:
        print(f"error: {exc.code}: {exc.detail}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file-not-found: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main(sys.argv[1:]))
