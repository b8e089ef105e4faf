"""Synthetic drift scenarios and drift-detection-accuracy measurement.

Scenarios draw i.i.d. standard-normal features and label them with a
fixed random linear rule (sigmoid thresholded at 0.5, so labels are a
deterministic function of the features). Drift events modify batches
from their index onward:

    mean_shift          adds magnitude (in reference sigma units) to the
                        chosen numeric features
    category_rebalance  moves `magnitude` probability mass between labels
                        of the categorical column
    concept_flip        negates the label rule's sign for the chosen
                        features (inputs look the same, labels change)

Ground truth marks every batch at or after the first event as drifted.
DDA is the fraction of batches whose drift decision (monitor rules:
max PSI over features beyond the threshold, or posterior beyond its
threshold when a policy is supplied) matches that ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .drift import DriftThresholds, bin_distribution, build_reference_binning, psi
from .errors import ScenarioError
from .learner import align_matrix, builtin_train_logreg, design_matrix
from .monitor import MonitorConfig, MonitorEngine, bootstrap_reference
from .policy import DegradationSignal, PolicyConfig, posterior_retrain
from .registry import ModelRegistry
from .synth import Intent, load_pipeline, synthesize_pipeline, write_pipeline
from .validation import CATEGORICAL, NUMERIC, Dataset

DRIFT_KINDS = ("mean_shift", "category_rebalance", "concept_flip")
CATEGORY_LABELS = ("a", "b", "c")
CATEGORY_PROBS = (0.5, 0.3, 0.2)


@dataclass(frozen=True)
class DriftEvent:
    batch: int
    kind: str
    magnitude: float
    features: tuple[int, ...] | None = None  # indices into numeric features; None = all

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ScenarioError(f"unknown drift kind {self.kind!r}")
        if self.magnitude <= 0:
            raise ScenarioError("drift magnitude must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_features: int = 2
    rows_per_batch: int = 1000
    batch_count: int = 10
    drift_events: tuple[DriftEvent, ...] = ()
    categorical: bool = False
    label_noise: float = 0.0
    reference_rows: int | None = None  # defaults to rows_per_batch

    def __post_init__(self):
        if self.n_features < 1 or self.rows_per_batch < 1 or self.batch_count < 1:
            raise ScenarioError("n_features, rows_per_batch, batch_count must be >= 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ScenarioError("label_noise must be in [0, 1)")
        for ev in self.drift_events:
            if not 0 <= ev.batch < self.batch_count:
                raise ScenarioError(f"drift event batch {ev.batch} outside 0..{self.batch_count - 1}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        events = tuple(
            DriftEvent(
                batch=int(e["batch"]),
                kind=e["kind"],
                magnitude=float(e["magnitude"]),
                features=tuple(e["features"]) if e.get("features") else None,
            )
            for e in d.get("drift_events", d.get("drift", []))
        )
        return cls(
            seed=int(d.get("seed", 0)),
            n_features=int(d.get("n_features", 2)),
            rows_per_batch=int(d.get("rows_per_batch", 1000)),
            batch_count=int(d.get("batch_count", 10)),
            drift_events=events,
            categorical=bool(d.get("categorical", False)),
            label_noise=float(d.get("label_noise", 0.0)),
            reference_rows=int(d["reference_rows"]) if d.get("reference_rows") else None,
        )


@dataclass
class ScenarioData:
    config: ScenarioConfig
    reference: Dataset
    batches: list[Dataset]
    drifted: list[bool]
    feature_names: list[str]
    label_weights: np.ndarray


def _include_categorical(config: ScenarioConfig) -> bool:
    return config.categorical or any(e.kind == "category_rebalance" for e in config.drift_events)


def _make_batch(
    rng: np.random.Generator,
    config: ScenarioConfig,
    weights: np.ndarray,
    shift: np.ndarray,
    flip_mask: np.ndarray,
    cat_probs: tuple[float, ...] | None,
    rows: int,
) -> Dataset:
    X = rng.standard_normal((rows, config.n_features)) + shift
    effective = weights * np.where(flip_mask, -1.0, 1.0)
    y = (X @ effective > 0.0).astype(float)
    if config.label_noise > 0.0:
        flips = rng.random(rows) < config.label_noise
        y = np.where(flips, 1.0 - y, y)

    columns = [f"x{i}" for i in range(config.n_features)]
    types = {c: NUMERIC for c in columns}
    cols: list[np.ndarray | list] = [X[:, i] for i in range(config.n_features)]
    if cat_probs is not None:
        labels = rng.choice(CATEGORY_LABELS, size=rows, p=cat_probs)
        columns.append("cat")
        types["cat"] = CATEGORICAL
        cols.append([str(v) for v in labels])
    columns.append("y")
    types["y"] = NUMERIC
    cols.append(y)

    rows_list = [list(t) for t in zip(*cols)]
    # convert numpy scalars so the Dataset round-trips through CSV exactly
    for row in rows_list:
        for j, v in enumerate(row):
            if isinstance(v, np.floating):
                row[j] = float(v)
    return Dataset(columns=columns, types=types, rows=rows_list)


def _rebalanced(probs: tuple[float, ...], magnitude: float) -> tuple[float, ...]:
    moved = min(magnitude, probs[0] - 0.01)
    out = list(probs)
    out[0] -= moved
    out[-1] += moved
    total = sum(out)
    return tuple(p / total for p in out)


def generate_scenario(config: ScenarioConfig) -> ScenarioData:
    """Deterministic batch stream plus ground-truth drift labels."""
    rng = np.random.default_rng(config.seed)
    weights = rng.standard_normal(config.n_features)
    # degenerate weights would make the label rule constant
    weights[np.abs(weights) < 0.1] = 0.1

    with_cat = _include_categorical(config)
    base_probs = CATEGORY_PROBS if with_cat else None

    ref_rows = config.reference_rows or config.rows_per_batch
    reference = _make_batch(
        rng, config, weights,
        shift=np.zeros(config.n_features),
        flip_mask=np.zeros(config.n_features, dtype=bool),
        cat_probs=base_probs, rows=ref_rows,
    )

    first_event = min((e.batch for e in config.drift_events), default=config.batch_count)
    batches: list[Dataset] = []
    drifted: list[bool] = []
    for b in range(config.batch_count):
        shift = np.zeros(config.n_features)
        flip_mask = np.zeros(config.n_features, dtype=bool)
        cat_probs = base_probs
        for ev in config.drift_events:
            if b < ev.batch:
                continue
            chosen = list(ev.features) if ev.features is not None else list(range(config.n_features))
            if ev.kind == "mean_shift":
                for i in chosen:
                    shift[i] += ev.magnitude
            elif ev.kind == "concept_flip":
                for i in chosen:
                    flip_mask[i] = True
            elif ev.kind == "category_rebalance":
                cat_probs = _rebalanced(base_probs, ev.magnitude)
        batches.append(
            _make_batch(rng, config, weights, shift, flip_mask, cat_probs, config.rows_per_batch)
        )
        drifted.append(b >= first_event)

    feature_names = [c for c in reference.columns if c != "y"]
    return ScenarioData(
        config=config,
        reference=reference,
        batches=batches,
        drifted=drifted,
        feature_names=feature_names,
        label_weights=weights,
    )


@dataclass
class DdaResult:
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int
    dda: float
    per_batch: list[dict]

    @property
    def total(self) -> int:
        return (
            self.true_positives + self.false_positives
            + self.true_negatives + self.false_negatives
        )

    @property
    def false_positive_rate(self) -> float:
        negatives = self.false_positives + self.true_negatives
        return self.false_positives / negatives if negatives else 0.0

    def to_dict(self) -> dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "true_negatives": self.true_negatives,
            "false_negatives": self.false_negatives,
            "dda": self.dda,
            "false_positive_rate": self.false_positive_rate,
            "per_batch": list(self.per_batch),
        }


def run_dda_scenario(
    config: ScenarioConfig,
    thresholds: DriftThresholds | None = None,
    policy: PolicyConfig | None = None,
    bins: int = 10,
) -> DdaResult:
    """Measure drift-detection accuracy on one scenario.

    The detector mirrors the monitor's rules against a frozen reference:
    flag when max per-feature PSI exceeds the threshold, or, when a policy
    is given, when the accuracy-degradation posterior exceeds its threshold.
    """
    thresholds = thresholds or DriftThresholds()
    data = generate_scenario(config)

    reference_bins = {}
    for feature in data.feature_names:
        kind = "numeric" if data.reference.types[feature] == NUMERIC else "categorical"
        values = data.reference.non_null(feature)
        binning = build_reference_binning(values, k=bins, kind=kind)
        reference_bins[feature] = (binning, bin_distribution(values, binning))

    model = None
    reference_accuracy = None
    if policy is not None:
        result = builtin_train_logreg(data.reference, target="y", seed=config.seed)
        model = result.model
        reference_accuracy = result.metrics["accuracy"]

    tp = fp = tn = fn = 0
    per_batch = []
    for b, batch in enumerate(data.batches):
        scores = {}
        for feature, (binning, ref_dist) in reference_bins.items():
            current = bin_distribution(batch.non_null(feature), binning)
            total, _ = psi(ref_dist, current)
            scores[feature] = total
        drift_score = max(scores.values())
        decision = drift_score > thresholds.psi_threshold

        posterior = None
        if model is not None:
            X, y, names = design_matrix(batch, target="y")
            acc = model.accuracy(align_matrix(X, names, model.feature_names), y)
            posterior = posterior_retrain(
                DegradationSignal(reference_accuracy - acc), policy
            )
            decision = decision or posterior > policy.posterior_threshold

        truth = data.drifted[b]
        if decision and truth:
            tp += 1
        elif decision and not truth:
            fp += 1
        elif not decision and not truth:
            tn += 1
        else:
            fn += 1
        per_batch.append(
            {
                "batch": b,
                "drift_score": drift_score,
                "posterior": posterior,
                "decision": decision,
                "truth": truth,
            }
        )

    total = len(data.batches)
    return DdaResult(
        true_positives=tp,
        false_positives=fp,
        true_negatives=tn,
        false_negatives=fn,
        dda=(tp + tn) / total,
        per_batch=per_batch,
    )


def sweep_magnitudes(
    base: ScenarioConfig,
    magnitudes: list[float],
    seeds: list[int],
    thresholds: DriftThresholds | None = None,
    bins: int = 10,
) -> dict[float, float]:
    """Mean DDA per mean-shift magnitude over a shared seed set."""
    out = {}
    for magnitude in magnitudes:
        events = tuple(replace(e, magnitude=magnitude) for e in base.drift_events)
        ddas = []
        for seed in seeds:
            cfg = replace(base, seed=seed, drift_events=events)
            ddas.append(run_dda_scenario(cfg, thresholds, bins=bins).dda)
        out[magnitude] = float(np.mean(ddas))
    return out


# -- closed-loop helpers ----------------------------------------------------


def make_toy_dataset(path: Path | str, rows: int = 400, seed: int = 42) -> Path:
    """Write the bundled-style toy CSV: two numerics, one categorical, binary y."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((rows, 2))
    cat = rng.choice(("a", "b"), size=rows, p=(0.6, 0.4))
    y = (X[:, 0] + 0.5 * X[:, 1] + (cat == "a") * 0.25 > 0.0).astype(float)
    ds = Dataset.from_columns(
        {
            "x0": [float(v) for v in X[:, 0]],
            "x1": [float(v) for v in X[:, 1]],
            "cat": [str(v) for v in cat],
            "y": [float(v) for v in y],
        }
    )
    path = Path(path)
    ds.to_csv(path)
    return path


@dataclass
class ClosedLoopSetup:
    pipeline_path: Path
    monitor_config: MonitorConfig
    engine: MonitorEngine
    data: ScenarioData
    registry: ModelRegistry
    initial_version: int


def bootstrap_closed_loop(
    scenario: ScenarioConfig,
    workdir: Path | str,
    model_name: str = "scenario-model",
    thresholds: DriftThresholds | None = None,
    policy: PolicyConfig | None = None,
    cooldown: int = 3,
    recent_batches: int = 1,
    bins: int = 10,
) -> ClosedLoopSetup:
    """Prepare a full monitoring session for a scenario.

    Fits reference stats, synthesizes the retraining pipeline, trains and
    promotes the initial model on the reference sample, and returns a
    ready MonitorEngine plus the generated batches.
    """
    workdir = Path(workdir)
    store_root = workdir / "store"
    session_dir = workdir / "session"
    session_dir.mkdir(parents=True, exist_ok=True)

    data = generate_scenario(scenario)

    # ingest path defaults to the bootstrap reference sample; monitor
    # retrains override it with the recent-batch buffer
    intent = Intent(
        kind="train-model",
        path="<monitor>",
        line=0,
        dataset=str(workdir / "bootstrap" / "reference.csv"),
        target="y",
        model="logreg",
        seed=scenario.seed,
    )
    spec = synthesize_pipeline(intent)
    for node in spec.nodes:
        if node.kind == "validate":
            node.params["dataset_id"] = model_name
            node.params.pop("fit_reference", None)  # bootstrap fits the stats
        if node.kind == "register":
            node.params["model_name"] = model_name
            node.params["dataset_id"] = model_name
    pipeline_path = workdir / "retrain_pipeline.yaml"
    write_pipeline(spec, pipeline_path)

    config = MonitorConfig(
        model_name=model_name,
        features=list(data.feature_names),
        retrain_pipeline=str(pipeline_path),
        dataset_id=model_name,
        thresholds=thresholds or DriftThresholds(),
        policy=policy or PolicyConfig(),
        cooldown=cooldown,
        labels_available=True,
        label_column="y",
        recent_batches=recent_batches,
        bins=bins,
        seed=scenario.seed,
    )
    version = bootstrap_reference(config, data.reference, store_root, workdir / "bootstrap")
    registry = ModelRegistry(store_root)
    engine = MonitorEngine(config, store_root, session_dir)
    return ClosedLoopSetup(
        pipeline_path=pipeline_path,
        monitor_config=config,
        engine=engine,
        data=data,
        registry=registry,
        initial_version=version,
    )


def sabotage_pipeline(pipeline_path: Path | str) -> None:
    """Rewrite the pipeline so its train step fails (for failure-isolation tests)."""
    path = Path(pipeline_path)
    spec = load_pipeline(path)
    for node in spec.nodes:
        if node.kind in ("features", "train", "evaluate"):
            node.params["target"] = "no_such_column"
    write_pipeline(spec, path)
