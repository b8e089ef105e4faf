"""Command-line entry point.

Subcommands: synth, run, validate, monitor, registry, features, bench.
Exit codes are uniform: 0 success, 1 domain-negative outcome (a failed
run, flagged drift), 2 usage or spec errors. Every subcommand accepts
--json for machine-readable output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import load_global_config, read_config_file
from .drift import DriftThresholds
from .errors import SmartMLOpsError
from .feature_store import FeatureStore
from .graph import RunContext, execute, new_run_id, validate_graph
from .harness import DdaResult, ScenarioConfig, generate_scenario, run_dda_scenario
from .monitor import (
    MonitorConfig,
    MonitorEngine,
    bootstrap_reference,
    write_monitor_outputs,
)
from .policy import PolicyConfig
from .registry import ModelRegistry
from .synth import RuleBasedProvider, load_pipeline, scan_source, write_pipeline
from .validation import fit_feature_stats, ingest_csv, validate_ingest


def _emit(args, payload: dict, human_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    else:
        for line in human_lines:
            print(line)


def cmd_synth(args, cfg) -> int:
    intents = scan_source(args.paths)
    if not intents:
        _emit(args, {"pipelines": []}, ["no intents found"])
        return 0
    provider = RuleBasedProvider()
    out_dir = Path(args.out)
    written = []
    for intent in intents:
        spec = provider.synthesize(intent)
        path = out_dir / f"{spec.name}.yaml"
        write_pipeline(spec, path)
        written.append({"name": spec.name, "path": str(path), "source": f"{intent.path}:{intent.line}"})
    _emit(
        args,
        {"pipelines": written},
        [f"wrote {w['path']}  ({w['source']})" for w in written],
    )
    return 0


def cmd_run(args, cfg) -> int:
    spec = load_pipeline(args.pipeline)
    errors = validate_graph(spec)
    if errors:
        for e in errors:
            print(f"invalid pipeline: {e}", file=sys.stderr)
        return 2
    ctx = RunContext(
        runs_root=Path(args.runs_dir),
        store_root=cfg.store_root,
        seed=cfg.seed,
    )
    record = execute(spec, max_parallel=args.max_parallel or cfg.max_parallel, context=ctx)
    lines = [f"run {record.run_id}: {record.status}"]
    for nid, r in sorted(record.nodes.items()):
        lines.append(f"  {nid}: {r.status}" + (f"  ({r.error})" if r.error else ""))
    lines.append(f"record: {Path(args.runs_dir) / record.run_id / 'record.json'}")
    _emit(args, record.to_dict(), lines)
    return 0 if record.status == "succeeded" else 1


def cmd_validate(args, cfg) -> int:
    incoming = ingest_csv(args.incoming)
    store = FeatureStore(cfg.store_root)

    if args.fit_from:
        reference = ingest_csv(args.fit_from)
        features = args.features or list(reference.columns)
        for rec in fit_feature_stats(reference, args.dataset_id, features=features, bins=args.bins):
            store.put_stats(rec)

    latest = store.latest_versions(args.dataset_id)
    if not latest:
        print(
            f"error: no reference stats stored for dataset {args.dataset_id!r} "
            "(use --fit-from to bootstrap)",
            file=sys.stderr,
        )
        return 2
    monitored = args.features or sorted(latest)
    stats = {f: store.get_stats(args.dataset_id, f) for f in monitored}
    report = validate_ingest(stats, incoming, cfg.thresholds)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.passed else 1


def _monitor_config_from_doc(doc: dict, cfg) -> MonitorConfig:
    for key in ("model_name", "features", "retrain_pipeline"):
        if key not in doc:
            raise SmartMLOpsError(f"monitor config missing required key {key!r}")
    thresholds = DriftThresholds(**doc.get("thresholds", {})) if doc.get("thresholds") else cfg.thresholds
    policy = PolicyConfig.from_dict(doc["policy"]) if doc.get("policy") else cfg.policy
    return MonitorConfig(
        model_name=doc["model_name"],
        features=list(doc["features"]),
        retrain_pipeline=str(doc["retrain_pipeline"]),
        dataset_id=doc.get("dataset_id", ""),
        thresholds=thresholds,
        policy=policy,
        cooldown=int(doc.get("cooldown", 3)),
        labels_available=bool(doc.get("labels_available", True)),
        label_column=doc.get("label_column", "y"),
        recent_batches=int(doc.get("recent_batches", 1)),
        bins=int(doc.get("bins", 10)),
        max_parallel=int(doc.get("max_parallel", cfg.max_parallel)),
        seed=int(doc.get("seed", cfg.seed)),
    )


def cmd_monitor(args, cfg) -> int:
    doc = read_config_file(args.config_file)
    mon_cfg = _monitor_config_from_doc(doc, cfg)
    if not Path(mon_cfg.retrain_pipeline).is_file():
        print(f"error: retrain pipeline not found: {mon_cfg.retrain_pipeline}", file=sys.stderr)
        return 2
    load_pipeline(mon_cfg.retrain_pipeline)  # unparseable pipeline -> exit 2 via main

    batches_doc = doc.get("batches")
    if not isinstance(batches_doc, dict) or batches_doc.get("kind") not in ("scenario", "csv_dir"):
        print("error: monitor config needs batches.kind of scenario or csv_dir", file=sys.stderr)
        return 2

    session = doc.get("session") or time.strftime("%Y%m%d-%H%M%S")
    session_dir = Path(args.runs_dir) / "monitor" / session

    if batches_doc["kind"] == "scenario":
        scenario = ScenarioConfig.from_dict(batches_doc.get("scenario", {}))
        data = generate_scenario(scenario)
        batches = data.batches
        if doc.get("bootstrap", True):
            bootstrap_reference(mon_cfg, data.reference, cfg.store_root, session_dir / "bootstrap")
    else:
        paths = sorted(Path(batches_doc["path"]).glob("*.csv"))
        if not paths:
            print(f"error: no CSV batches under {batches_doc['path']}", file=sys.stderr)
            return 2
        batches = [ingest_csv(p) for p in paths]

    engine = MonitorEngine(mon_cfg, cfg.store_root, session_dir)
    result = engine.run(batches)
    write_monitor_outputs(result, session_dir, figure=not args.no_figure)

    counts: dict[str, int] = {}
    for ev in result.events:
        counts[ev.kind] = counts.get(ev.kind, 0) + 1
    lines = [f"monitored {len(result.samples)} batch(es); events: {counts or 'none'}"]
    lines.append(f"events:  {result.events_path}")
    lines.append(f"metrics: {result.metrics_path}")
    if result.figure_path:
        lines.append(f"figure:  {result.figure_path}")
    payload = {
        "session_dir": str(session_dir),
        "batches": len(result.samples),
        "event_counts": counts,
        "events": [ev.to_dict() for ev in result.events],
        "events_path": str(result.events_path),
        "metrics_path": str(result.metrics_path),
        "figure_path": str(result.figure_path) if result.figure_path else None,
    }
    _emit(args, payload, lines)
    return 0


def cmd_registry(args, cfg) -> int:
    registry = ModelRegistry(cfg.store_root)
    if args.registry_cmd == "list":
        versions = registry.list(args.model)
        payload = {"model": args.model, "versions": [mv.to_dict() for mv in versions]}
        lines = [
            f"v{mv.version}  {mv.stage:<10}  acc={mv.metrics.get('accuracy', float('nan')):.4f}  "
            f"{mv.trained_at}  {mv.artifact_digest[:12]}"
            for mv in versions
        ] or [f"no versions for model {args.model!r}"]
        _emit(args, payload, lines)
        return 0
    if args.registry_cmd == "promote":
        previous = registry.production_version(args.model)
        mv = registry.promote(args.model, args.version)
        payload = {"model": args.model, "previous_production": previous, "production": mv.version}
        _emit(args, payload, [f"production: {previous and f'v{previous}' or 'none'} -> v{mv.version}"])
        return 0
    if args.registry_cmd == "rollback":
        previous = registry.production_version(args.model)
        mv = registry.rollback(args.model, to_version=args.to)
        payload = {"model": args.model, "previous_production": previous, "production": mv.version}
        _emit(args, payload, [f"production: v{previous} -> v{mv.version}"])
        return 0
    # lineage
    chain = registry.lineage_of(args.model, args.version)
    lines = [
        f"v{link['version']}  run={link['run_id'] or '-'}  "
        f"stats={link['feature_stats'] or '{}'}  parent={link['parent_version']}"
        for link in chain
    ]
    _emit(args, {"model": args.model, "lineage": chain}, lines)
    return 0


def cmd_features(args, cfg) -> int:
    store = FeatureStore(cfg.store_root)
    if args.features_cmd == "list":
        rows = store.list_stats(args.dataset_id)
        payload = {
            "dataset_id": args.dataset_id,
            "features": [{"feature": f, "version": v, "created_at": c} for f, v, c in rows],
        }
        lines = [f"{f}  v{v}  {c}" for f, v, c in rows] or [
            f"no stats stored for dataset {args.dataset_id!r}"
        ]
        _emit(args, payload, lines)
        return 0
    rec = store.get_stats(args.dataset_id, args.feature, version=args.version)
    print(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_bench(args, cfg) -> int:
    doc = read_config_file(args.scenario_file)
    base = ScenarioConfig.from_dict(doc.get("scenario", {}))
    n_seeds = int(doc.get("seeds", 1))
    seeds = [base.seed + i for i in range(n_seeds)]
    bins = int(doc.get("bins", 10))
    thresholds = DriftThresholds(**doc.get("thresholds", {})) if doc.get("thresholds") else cfg.thresholds
    policy = PolicyConfig.from_dict(doc["policy"]) if doc.get("policy") else None
    magnitudes = [float(m) for m in doc.get("magnitudes", [])]

    out_dir = Path(args.out) if args.out else Path(args.runs_dir) / "bench" / new_run_id()
    out_dir.mkdir(parents=True, exist_ok=True)

    decisions_rows: list[dict] = []
    per_magnitude: dict[float, float] = {}
    per_seed: list[dict] = []
    first_result: DdaResult | None = None

    def run_one(cfg_s: ScenarioConfig, magnitude: float | None) -> DdaResult:
        nonlocal first_result
        result = run_dda_scenario(cfg_s, thresholds, policy=policy, bins=bins)
        if first_result is None:
            first_result = result
        for row in result.per_batch:
            decisions_rows.append({"seed": cfg_s.seed, "magnitude": magnitude, **row})
        return result

    if magnitudes:
        for magnitude in magnitudes:
            events = tuple(replace(e, magnitude=magnitude) for e in base.drift_events)
            ddas = []
            for seed in seeds:
                result = run_one(replace(base, seed=seed, drift_events=events), magnitude)
                ddas.append(result.dda)
                per_seed.append({"seed": seed, "magnitude": magnitude, "dda": result.dda})
            per_magnitude[magnitude] = sum(ddas) / len(ddas)
        summary = {"per_magnitude": per_magnitude, "per_seed": per_seed, "seeds": n_seeds}
        lines = [f"magnitude {m:g}: mean DDA {v:.4f}" for m, v in sorted(per_magnitude.items())]
    else:
        ddas, fprs = [], []
        for seed in seeds:
            result = run_one(replace(base, seed=seed), None)
            ddas.append(result.dda)
            fprs.append(result.false_positive_rate)
            per_seed.append({"seed": seed, "dda": result.dda, "fpr": result.false_positive_rate})
        summary = {
            "mean_dda": sum(ddas) / len(ddas),
            "mean_false_positive_rate": sum(fprs) / len(fprs),
            "per_seed": per_seed,
            "seeds": n_seeds,
        }
        lines = [
            f"mean DDA {summary['mean_dda']:.4f} over {n_seeds} seed(s); "
            f"mean FPR {summary['mean_false_positive_rate']:.4f}"
        ]

    json_path = out_dir / "dda.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = out_dir / "decisions.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("seed,magnitude,batch,drift_score,posterior,decision,truth\n")
        for row in decisions_rows:
            fh.write(
                f"{row['seed']},{'' if row['magnitude'] is None else row['magnitude']},"
                f"{row['batch']},{row['drift_score']},"
                f"{'' if row['posterior'] is None else row['posterior']},"
                f"{int(row['decision'])},{int(row['truth'])}\n"
            )
    lines.append(f"results: {json_path}")
    lines.append(f"decisions: {csv_path}")

    if not args.no_figure:
        from .report import render_bench_figure

        single = first_result.to_dict() if (not magnitudes and first_result) else None
        figure = render_bench_figure(per_magnitude, single, out_dir / "dda.png")
        lines.append(f"figure: {figure}")
        summary["figure_path"] = str(figure)

    _emit(args, summary, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smartmlops",
        description="Drift-aware ML pipeline orchestration: synthesize, run, validate, monitor.",
    )
    parser.add_argument("--store", help="store root (overrides config file and SMARTMLOPS_STORE)")
    parser.add_argument("--config", help="global config file (YAML or TOML)")
    parser.add_argument("--seed", type=int, default=None, help="base seed for all randomness")
    parser.add_argument("--json", action="store_true", help="machine-readable JSON output")
    parser.add_argument("--runs-dir", default="runs", help="directory for run artifacts")

    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Scan sources for mlops directives and write pipeline YAML.")
    synth.add_argument("paths", nargs="+", help="source files or directories to scan")
    synth.add_argument("--out", default="pipelines", help="output directory for pipeline YAML")
    synth.set_defaults(func=cmd_synth)

    run = sub.add_parser("run", help="Validate, schedule, and execute a pipeline YAML.")
    run.add_argument("pipeline", help="pipeline YAML file")
    run.add_argument("--max-parallel", type=int, default=None, help="parallel node limit")
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser("validate", help="Check an incoming CSV against stored reference stats.")
    validate.add_argument("incoming", help="incoming CSV file")
    validate.add_argument("--dataset-id", required=True, help="reference stats dataset id")
    validate.add_argument("--features", nargs="*", default=None, help="monitored features (default: all stored)")
    validate.add_argument("--fit-from", default=None, help="reference CSV to fit and store stats from first")
    validate.add_argument("--bins", type=int, default=10, help="bin count when fitting")
    validate.set_defaults(func=cmd_validate)

    monitor = sub.add_parser("monitor", help="Run the drift monitoring and retraining loop.")
    monitor.add_argument("config_file", help="monitor config YAML/TOML")
    monitor.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    monitor.set_defaults(func=cmd_monitor)

    registry = sub.add_parser("registry", help="Inspect and mutate the model registry.")
    rsub = registry.add_subparsers(dest="registry_cmd", required=True)
    rlist = rsub.add_parser("list", help="List versions of a model.")
    rlist.add_argument("model")
    rprom = rsub.add_parser("promote", help="Promote a candidate version to production.")
    rprom.add_argument("model")
    rprom.add_argument("version", type=int)
    rroll = rsub.add_parser("rollback", help="Walk the production pointer back.")
    rroll.add_argument("model")
    rroll.add_argument("--to", type=int, default=None, help="roll back to this ex-production version")
    rlin = rsub.add_parser("lineage", help="Show the parent chain of a version.")
    rlin.add_argument("model")
    rlin.add_argument("version", type=int)
    registry.set_defaults(func=cmd_registry)

    features = sub.add_parser("features", help="Inspect stored feature statistics.")
    fsub = features.add_subparsers(dest="features_cmd", required=True)
    flist = fsub.add_parser("list", help="List features with their latest version.")
    flist.add_argument("dataset_id")
    fshow = fsub.add_parser("show", help="Print one stats record as JSON.")
    fshow.add_argument("dataset_id")
    fshow.add_argument("feature")
    fshow.add_argument("--version", type=int, default=None)
    features.set_defaults(func=cmd_features)

    bench = sub.add_parser("bench", help="Measure drift detection accuracy on synthetic scenarios.")
    bench.add_argument("scenario_file", help="scenario config YAML/TOML")
    bench.add_argument("--out", default=None, help="output directory (default: runs/bench/<id>)")
    bench.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_global_config(
            config_path=args.config,
            store_flag=args.store,
            seed_flag=args.seed,
        )
        return int(args.func(args, cfg))
    except SmartMLOpsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
