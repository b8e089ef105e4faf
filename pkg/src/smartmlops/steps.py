"""Builtin pipeline step implementations and the step-kind registry.

A step receives its params, resolved input/output artifact paths keyed by
role, and a StepContext. It raises StepError to fail its node. New kinds
(e.g. cheap synthetic steps for scheduler tests) can be added through
register_step_kind; graph validation and YAML parsing consult the same
registry.
"""

from __future__ import annotations

import json
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .drift import DriftThresholds
from .errors import NotFoundError, SmartMLOpsError, StepError
from .feature_store import FeatureStore
from .learner import LogRegModel, align_matrix, builtin_train_logreg, design_matrix, holdout_indices
from .registry import Lineage, ModelRegistry
from .validation import (
    Dataset,
    ValidationReport,
    check_schema,
    fit_feature_stats,
    infer_schema,
    ingest_csv,
    validate_ingest,
)

BUILTIN_MODEL_KINDS = ("logreg",)


@dataclass
class StepContext:
    """Execution-time facts a step may need."""

    run_id: str
    run_dir: Path
    node_id: str
    node_dir: Path
    store_root: Path
    seed: int = 42
    env: dict[str, str] = field(default_factory=dict)


StepFn = Callable[[dict, dict, dict, StepContext], None]


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _role(mapping: dict, role: str, node_kind: str, direction: str) -> Path:
    if role not in mapping:
        raise StepError(f"{node_kind} step requires an {direction} role {role!r}")
    return mapping[role]


def _thresholds(params: dict) -> DriftThresholds:
    return DriftThresholds(
        kl_delta=float(params.get("kl_delta", 0.1)),
        psi_threshold=float(params.get("psi_threshold", 0.25)),
    )


def step_ingest(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    src = params["path"]
    try:
        ds = ingest_csv(src)
    except SmartMLOpsError as e:
        raise StepError(str(e)) from e
    ds.to_csv(_role(outputs, "dataset", "ingest", "output"))


def step_validate(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    ds = ingest_csv(_role(inputs, "dataset", "validate", "input"))
    dataset_id = params.get("dataset_id")
    wanted = params.get("features") or None
    store = FeatureStore(ctx.store_root)
    existing = store.latest_versions(dataset_id) if dataset_id else {}

    if existing:
        monitored = wanted or sorted(existing)
        stats = {}
        for f in monitored:
            try:
                stats[f] = store.get_stats(dataset_id, f)
            except NotFoundError as e:
                raise StepError(str(e)) from e
        report = validate_ingest(stats, ds, _thresholds(params))
    else:
        # no reference yet: self-consistency schema scan, optionally
        # bootstrapping the reference stats for later runs
        schema = infer_schema(ds)
        violations = check_schema(ds, schema)
        report = ValidationReport(
            schema_violations=violations,
            drift_reports=[],
            passed=not violations,
            flagged_features=[],
        )
        if dataset_id and params.get("fit_reference"):
            target = params.get("target")
            features = wanted or [c for c in ds.columns if c != target]
            for rec in fit_feature_stats(ds, dataset_id, features=features):
                store.put_stats(rec)

    _write_json(_role(outputs, "report", "validate", "output"), report.to_dict())
    if report.schema_violations and params.get("fail_on_schema", True):
        first = report.schema_violations[0]
        raise StepError(
            f"schema violations: {len(report.schema_violations)} "
            f"(first: {first.column} {first.rule})"
        )
    if not report.passed and params.get("fail_on_drift", False):
        raise StepError(f"drift flagged on features: {report.flagged_features}")


def step_features(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    ds = ingest_csv(_role(inputs, "dataset", "features", "input"))
    target = params["target"]
    cols = params.get("features") or [c for c in ds.columns if c != target]
    try:
        X, y, names = design_matrix(ds, target=target, feature_columns=cols)
    except SmartMLOpsError as e:
        raise StepError(str(e)) from e
    encoded = Dataset.from_columns(
        {**{n: X[:, j].tolist() for j, n in enumerate(names)}, target: y.tolist()}
    )
    encoded.to_csv(_role(outputs, "features", "features", "output"))


def step_train(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    kind = params.get("model", "logreg")
    if kind not in BUILTIN_MODEL_KINDS:
        raise StepError(
            f"unknown model kind {kind!r}; builtin kinds: {', '.join(BUILTIN_MODEL_KINDS)}"
        )
    feats = ingest_csv(_role(inputs, "features", "train", "input"))
    try:
        result = builtin_train_logreg(
            feats,
            target=params["target"],
            seed=int(params.get("seed", ctx.seed)),
            epochs=int(params.get("epochs", 300)),
            lr=float(params.get("lr", 0.5)),
        )
    except SmartMLOpsError as e:
        raise StepError(str(e)) from e
    result.model.save(_role(outputs, "model", "train", "output"))
    if "metrics" in outputs:
        _write_json(outputs["metrics"], result.metrics)


def step_evaluate(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    feats = ingest_csv(_role(inputs, "features", "evaluate", "input"))
    if "model" in inputs:
        model = LogRegModel.load(inputs["model"])
    else:
        registry = ModelRegistry(ctx.store_root)
        name = params.get("model_name")
        if not name:
            raise StepError("evaluate step needs a model input or a model_name param")
        version = registry.production_version(name)
        if version is None:
            raise StepError(f"model {name!r} has no production version to evaluate")
        model = LogRegModel.load(registry.artifact_path(name, version))
    target = params["target"]
    try:
        X, y, names = design_matrix(feats, target=target)
    except SmartMLOpsError as e:
        raise StepError(str(e)) from e
    eval_idx, _ = holdout_indices(len(y), seed=int(params.get("seed", ctx.seed)))
    Xa = align_matrix(X, names, model.feature_names)
    metrics = {
        "accuracy": model.accuracy(Xa[eval_idx], y[eval_idx]),
        "n_eval": float(len(eval_idx)),
    }
    _write_json(_role(outputs, "metrics", "evaluate", "output"), metrics)


def step_register(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    model_path = _role(inputs, "model", "register", "input")
    metrics = _read_json(_role(inputs, "metrics", "register", "input"))
    name = params["model_name"]
    registry = ModelRegistry(ctx.store_root)
    dataset_id = params.get("dataset_id")
    stats_versions = FeatureStore(ctx.store_root).latest_versions(dataset_id) if dataset_id else {}
    lineage = Lineage(
        run_id=ctx.run_id,
        parent_version=registry.production_version(name),
        feature_stats=stats_versions,
    )
    try:
        mv = registry.register(name, model_path, metrics, lineage, cause=f"run {ctx.run_id}")
    except SmartMLOpsError as e:
        raise StepError(str(e)) from e
    _write_json(
        _role(outputs, "registration", "register", "output"),
        {"model_name": name, "version": mv.version, "artifact_digest": mv.artifact_digest},
    )


def step_deploy_gate(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    registration = _read_json(_role(inputs, "registration", "deploy_gate", "input"))
    metrics = _read_json(_role(inputs, "metrics", "deploy_gate", "input"))
    metric = params.get("metric", "accuracy")
    min_value = float(params.get("min_value", 0.0))
    if metric not in metrics:
        raise StepError(f"gate metric {metric!r} not present in metrics")
    value = float(metrics[metric])
    passed = value >= min_value
    _write_json(
        _role(outputs, "decision", "deploy_gate", "output"),
        {
            "metric": metric,
            "value": value,
            "min_value": min_value,
            "passed": passed,
            "promote": bool(params.get("promote", False)) and passed,
            "model_name": registration["model_name"],
            "version": registration["version"],
        },
    )
    if not passed:
        raise StepError(f"deploy gate failed: {metric} {value:g} < {min_value:g}")
    if params.get("promote", False):
        try:
            ModelRegistry(ctx.store_root).promote(
                registration["model_name"], registration["version"], cause="deploy gate"
            )
        except SmartMLOpsError as e:
            raise StepError(str(e)) from e


def step_command(params: dict, inputs: dict, outputs: dict, ctx: StepContext) -> None:
    command = params.get("command")
    if not command:
        raise StepError("command step has no command line")
    env = dict(os.environ)
    env.update(ctx.env)
    env["SMARTMLOPS_RUN_ID"] = ctx.run_id
    env["SMARTMLOPS_SEED"] = str(params.get("seed", ctx.seed))
    env["SMARTMLOPS_STORE"] = str(ctx.store_root)
    for role, path in inputs.items():
        env[f"INPUT_{role.upper()}"] = str(path)
    for role, path in outputs.items():
        env[f"OUTPUT_{role.upper()}"] = str(path)
    proc = subprocess.run(
        command, shell=True, cwd=ctx.node_dir, env=env, capture_output=True, text=True
    )
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()[-5:]
        raise StepError(
            f"command exited with {proc.returncode}: {' | '.join(tail) or 'no output'}"
        )


@dataclass(frozen=True)
class StepSpec:
    fn: StepFn
    required_params: tuple[str, ...] = ()


_STEPS: dict[str, StepSpec] = {
    "ingest": StepSpec(step_ingest, ("path",)),
    "validate": StepSpec(step_validate),
    "features": StepSpec(step_features, ("target",)),
    "train": StepSpec(step_train, ("target",)),
    "evaluate": StepSpec(step_evaluate, ("target",)),
    "register": StepSpec(step_register, ("model_name",)),
    "deploy_gate": StepSpec(step_deploy_gate),
    "command": StepSpec(step_command),
}


def register_step_kind(kind: str, fn: StepFn, required_params: tuple[str, ...] = ()) -> None:
    """Add or replace a step kind (used by tests and extensions)."""
    _STEPS[kind] = StepSpec(fn, tuple(required_params))


def registered_kinds() -> frozenset[str]:
    return frozenset(_STEPS)


def required_params(kind: str) -> tuple[str, ...]:
    return _STEPS[kind].required_params


def run_step(
    kind: str,
    params: dict,
    inputs: dict[str, Path],
    outputs: dict[str, Path],
    ctx: StepContext,
    command: str | None = None,
) -> None:
    if kind not in _STEPS:
        raise StepError(f"unknown step kind {kind!r}")
    if command is not None:
        params = {**params, "command": command}
    _STEPS[kind].fn(params, inputs, outputs, ctx)
