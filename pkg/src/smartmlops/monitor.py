"""Monitoring loop: score batches, detect drift, retrain, promote.

Per batch the engine computes per-feature PSI against the feature store's
latest reference stats (drift score = max over features) and, when labels
are available, the degradation signal s = reference accuracy - batch
accuracy feeding the Bayesian posterior. Retraining triggers when either
the drift score exceeds the PSI threshold or the posterior exceeds its
threshold; a cooldown after each retrain suppresses immediate re-triggers.

A triggered retrain executes the configured pipeline synchronously on the
recent-batch buffer, then promotes the newly registered version, refreshes
the reference stats from the retraining data, and resumes.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .drift import DriftThresholds
from .errors import MonitorError, NotFoundError, SmartMLOpsError
from .feature_store import FeatureStore, utc_now_iso
from .graph import RunContext, execute
from .learner import LogRegModel
from .policy import DegradationSignal, PolicyConfig, decide, now_utc
from .registry import ModelRegistry
from .synth import load_pipeline
from .validation import Dataset, fit_feature_stats, validate_ingest


@dataclass
class MonitorConfig:
    model_name: str
    features: list[str]
    retrain_pipeline: str
    dataset_id: str = ""
    thresholds: DriftThresholds = field(default_factory=DriftThresholds)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    cooldown: int = 3
    labels_available: bool = True
    label_column: str = "y"
    recent_batches: int = 1
    bins: int = 10
    max_parallel: int = 2
    seed: int = 42

    def __post_init__(self):
        if self.cooldown < 0:
            raise MonitorError("cooldown must be >= 0")
        if self.recent_batches < 1:
            raise MonitorError("recent_batches must be >= 1")
        if not self.dataset_id:
            self.dataset_id = self.model_name


@dataclass
class MetricsSample:
    batch_index: int
    per_feature_psi: dict[str, float]
    drift_score: float
    accuracy: float | None
    latency_ms: float
    posterior: float | None

    def to_row(self) -> dict:
        return {
            "batch": self.batch_index,
            "drift_score": self.drift_score,
            "accuracy": "" if self.accuracy is None else self.accuracy,
            "latency_ms": self.latency_ms,
            "posterior": "" if self.posterior is None else self.posterior,
        }


@dataclass
class MonitorEvent:
    kind: str  # drift_flagged | retrain_triggered | retrain_completed |
    #            model_promoted | cooldown_suppressed | retrain_failed |
    #            validation_failed
    batch_index: int
    detail: str
    at: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "batch": self.batch_index, "detail": self.detail, "at": self.at}


@dataclass
class MonitorResult:
    events: list[MonitorEvent]
    samples: list[MetricsSample]
    session_dir: Path | None = None
    events_path: Path | None = None
    metrics_path: Path | None = None
    figure_path: Path | None = None

    def event_kinds(self) -> list[str]:
        return [e.kind for e in self.events]


class MonitorEngine:
    """Single-threaded owner of the monitoring state for one model."""

    def __init__(self, config: MonitorConfig, store_root: Path | str, session_dir: Path | str):
        self.config = config
        self.store_root = Path(store_root)
        self.session_dir = Path(session_dir)
        self.feature_store = FeatureStore(self.store_root)
        self.registry = ModelRegistry(self.store_root)
        self.buffer: deque[Dataset] = deque(maxlen=config.recent_batches)
        self.cooldown_remaining = 0
        self.prior = config.policy.prior_retrain
        self.retrain_count = 0
        self._model: LogRegModel | None = None
        self._model_version: int | None = None
        self.reference_accuracy: float | None = None
        if config.labels_available:
            self._load_production_model()

    # -- production model ------------------------------------------------

    def _load_production_model(self) -> None:
        version = self.registry.production_version(self.config.model_name)
        if version is None:
            raise MonitorError(
                f"model {self.config.model_name!r} has no production version; "
                "bootstrap one before monitoring with labels"
            )
        mv = self.registry.get(self.config.model_name, version)
        self._model = LogRegModel.load(self.registry.artifact_path(self.config.model_name, version))
        self._model_version = version
        self.reference_accuracy = float(mv.metrics.get("accuracy", 1.0))

    def _reference_stats(self) -> dict:
        stats = {}
        for feature in self.config.features:
            try:
                stats[feature] = self.feature_store.get_stats(self.config.dataset_id, feature)
            except NotFoundError as e:
                raise MonitorError(str(e)) from e
        return stats

    # -- single batch ------------------------------------------------------

    def step(self, batch: Dataset, batch_index: int) -> tuple[MetricsSample, list[MonitorEvent]]:
        """Score one batch; emits events but performs no retraining."""
        t0 = time.perf_counter()
        events: list[MonitorEvent] = []
        stats = self._reference_stats()

        report = validate_ingest(stats, batch, self.config.thresholds)
        if report.schema_violations:
            first = report.schema_violations[0]
            events.append(
                MonitorEvent(
                    "validation_failed",
                    batch_index,
                    f"{len(report.schema_violations)} schema violation(s); "
                    f"first: {first.column} {first.rule} ({first.detail})",
                    utc_now_iso(),
                )
            )

        per_feature = {r.feature: r.psi for r in report.drift_reports}
        drift_score = max(per_feature.values(), default=0.0)
        drift_flag = drift_score > self.config.thresholds.psi_threshold
        if drift_flag:
            worst = max(per_feature, key=per_feature.get)
            events.append(
                MonitorEvent(
                    "drift_flagged",
                    batch_index,
                    f"max PSI {drift_score:.6f} > {self.config.thresholds.psi_threshold:g} "
                    f"on feature {worst!r}",
                    utc_now_iso(),
                )
            )

        accuracy = None
        posterior = None
        posterior_flag = False
        if self.config.labels_available and self._model is not None:
            if self.config.label_column in batch.columns:
                accuracy = self._model.accuracy_on(batch, self.config.label_column)
                s_t = (self.reference_accuracy or 0.0) - accuracy
                policy = PolicyConfig(
                    prior_retrain=self.prior,
                    mu1=self.config.policy.mu1,
                    sigma1=self.config.policy.sigma1,
                    mu0=self.config.policy.mu0,
                    sigma0=self.config.policy.sigma0,
                    posterior_threshold=self.config.policy.posterior_threshold,
                    sequential=self.config.policy.sequential,
                )
                decision = decide(DegradationSignal(s_t, now_utc()), policy)
                posterior = decision.posterior
                posterior_flag = decision.trigger
                if self.config.policy.sequential:
                    self.prior = decision.posterior

        if drift_flag or posterior_flag:
            cause = "drift score" if drift_flag else "posterior"
            if self.cooldown_remaining > 0:
                events.append(
                    MonitorEvent(
                        "cooldown_suppressed",
                        batch_index,
                        f"{cause} trigger suppressed; {self.cooldown_remaining} batch(es) left",
                        utc_now_iso(),
                    )
                )
            else:
                detail = f"trigger by {cause}: drift={drift_score:.6f}"
                if posterior is not None:
                    detail += f", posterior={posterior:.6f}"
                events.append(MonitorEvent("retrain_triggered", batch_index, detail, utc_now_iso()))

        latency_ms = (time.perf_counter() - t0) * 1000.0
        sample = MetricsSample(
            batch_index=batch_index,
            per_feature_psi=per_feature,
            drift_score=drift_score,
            accuracy=accuracy,
            latency_ms=latency_ms,
            posterior=posterior,
        )
        return sample, events

    # -- retraining --------------------------------------------------------

    def _retrain(self, batch_index: int) -> list[MonitorEvent]:
        # both outcomes enter cooldown: a failing pipeline must not be
        # retried on every subsequent drifted batch
        self.cooldown_remaining = self.config.cooldown
        events: list[MonitorEvent] = []
        self.retrain_count += 1
        retrain_dir = self.session_dir / "retrains" / str(self.retrain_count)
        retrain_dir.mkdir(parents=True, exist_ok=True)

        rows: list[list] = []
        columns = None
        types = None
        for ds in self.buffer:
            columns = columns or ds.columns
            types = types or ds.types
            rows.extend(ds.rows)
        training = Dataset(columns=list(columns), types=dict(types), rows=rows)
        data_path = retrain_dir / "training_data.csv"
        training.to_csv(data_path)

        try:
            spec = load_pipeline(self.config.retrain_pipeline)
            ingest_nodes = [n.id for n in spec.nodes if n.kind == "ingest"]
            overrides = {nid: {"path": str(data_path)} for nid in ingest_nodes}
            ctx = RunContext(
                runs_root=retrain_dir / "runs",
                store_root=self.store_root,
                seed=self.config.seed,
                run_id=f"retrain-{self.retrain_count}",
                param_overrides=overrides,
            )
            record = execute(spec, max_parallel=self.config.max_parallel, context=ctx)
        except SmartMLOpsError as e:
            events.append(
                MonitorEvent("retrain_failed", batch_index, f"pipeline error: {e}", utc_now_iso())
            )
            return events

        if record.status != "succeeded":
            failed = sorted(
                f"{nid}: {r.error}" for nid, r in record.nodes.items() if r.status == "failed"
            )
            events.append(
                MonitorEvent(
                    "retrain_failed", batch_index, f"run {record.run_id} failed ({'; '.join(failed)})",
                    utc_now_iso(),
                )
            )
            return events

        registration = self._find_registration(spec, record)
        if registration is None:
            events.append(
                MonitorEvent(
                    "retrain_failed", batch_index,
                    f"run {record.run_id} succeeded but registered no model", utc_now_iso(),
                )
            )
            return events

        name, version = registration
        events.append(
            MonitorEvent(
                "retrain_completed", batch_index,
                f"run {record.run_id} registered {name} v{version}", utc_now_iso(),
            )
        )
        self.registry.promote(name, version, cause=f"monitor retrain at batch {batch_index}")
        events.append(
            MonitorEvent("model_promoted", batch_index, f"{name} v{version} promoted", utc_now_iso())
        )

        # post-retrain batches are compared against the new regime
        for rec in fit_feature_stats(
            training, self.config.dataset_id, features=self.config.features, bins=self.config.bins
        ):
            self.feature_store.put_stats(rec)
        if self.config.labels_available:
            self._load_production_model()
        self.prior = self.config.policy.prior_retrain
        return events

    def _find_registration(self, spec, record) -> tuple[str, int] | None:
        for node in spec.nodes:
            if node.kind != "register":
                continue
            result = record.nodes.get(node.id)
            if result is None or result.status != "succeeded":
                continue
            art = node.outputs.get("registration")
            if art and art in result.artifacts:
                with open(result.artifacts[art].path, encoding="utf-8") as fh:
                    payload = json.load(fh)
                return payload["model_name"], int(payload["version"])
        return None

    # -- full stream -------------------------------------------------------

    def run(self, batches: Iterable[Dataset]) -> MonitorResult:
        """Consume the batch stream, retraining synchronously on triggers."""
        all_events: list[MonitorEvent] = []
        samples: list[MetricsSample] = []
        for batch_index, batch in enumerate(batches):
            sample, events = self.step(batch, batch_index)
            samples.append(sample)
            all_events.extend(events)
            self.buffer.append(batch)
            if any(e.kind == "retrain_triggered" for e in events):
                all_events.extend(self._retrain(batch_index))
            elif self.cooldown_remaining > 0:
                self.cooldown_remaining -= 1
        return MonitorResult(events=all_events, samples=samples, session_dir=self.session_dir)


def bootstrap_reference(
    config: MonitorConfig,
    reference: Dataset,
    store_root: Path | str,
    workdir: Path | str,
    max_parallel: int = 2,
) -> int:
    """Fit reference stats and train+promote an initial model from a reference sample.

    Runs the configured retraining pipeline once with its ingest path
    pointed at the reference data. Returns the promoted version.
    """
    store_root = Path(store_root)
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(store_root)

    existing = store.latest_versions(config.dataset_id)
    missing = [f for f in config.features if f not in existing]
    if missing:
        for rec in fit_feature_stats(reference, config.dataset_id, features=missing, bins=config.bins):
            store.put_stats(rec)

    reference_csv = workdir / "reference.csv"
    reference.to_csv(reference_csv)
    spec = load_pipeline(config.retrain_pipeline)
    overrides = {n.id: {"path": str(reference_csv)} for n in spec.nodes if n.kind == "ingest"}
    ctx = RunContext(
        runs_root=workdir / "runs",
        store_root=store_root,
        seed=config.seed,
        run_id="bootstrap",
        param_overrides=overrides,
    )
    record = execute(spec, max_parallel=max_parallel, context=ctx)
    if record.status != "succeeded":
        failed = {nid: r.error for nid, r in record.nodes.items() if r.status == "failed"}
        raise MonitorError(f"bootstrap training run failed: {failed}")

    registry = ModelRegistry(store_root)
    versions = registry.versions(config.model_name)
    if not versions:
        raise MonitorError(
            f"bootstrap run registered nothing under model {config.model_name!r}; "
            "check the pipeline's register step"
        )
    version = versions[-1]
    if registry.get(config.model_name, version).stage == "candidate":
        registry.promote(config.model_name, version, cause="bootstrap")
    return version


def write_monitor_outputs(result: MonitorResult, session_dir: Path | str, figure: bool = True) -> MonitorResult:
    """Persist events (JSON lines), the metrics series (CSV), and the figure."""
    session_dir = Path(session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)

    events_path = session_dir / "events.jsonl"
    with open(events_path, "w", encoding="utf-8") as fh:
        for ev in result.events:
            fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")

    metrics_path = session_dir / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8") as fh:
        fh.write("batch,drift_score,accuracy,latency_ms,posterior\n")
        for s in result.samples:
            row = s.to_row()
            fh.write(
                f"{row['batch']},{row['drift_score']},{row['accuracy']},"
                f"{row['latency_ms']},{row['posterior']}\n"
            )

    result.events_path = events_path
    result.metrics_path = metrics_path
    if figure and result.samples:
        from .report import render_monitor_figure

        result.figure_path = render_monitor_figure(result, session_dir / "monitor.png")
    return result
