"""Drift-aware ML pipeline orchestration.

Declarative DAG pipelines with a parallel executor, KL/PSI drift
detection against a versioned feature store, a Bayesian retraining
trigger, a model registry with promotion/rollback/lineage, a rule-based
pipeline synthesizer, and a monitoring loop that closes the
drift -> retrain -> promote cycle.
"""

from .drift import (
    BinnedDistribution,
    Binning,
    DriftReport,
    DriftThresholds,
    bin_distribution,
    build_reference_binning,
    evaluate_drift,
    kl_divergence,
    psi,
)
from .errors import SmartMLOpsError
from .feature_store import FeatureStatsRecord, FeatureStore
from .graph import (
    PipelineSpec,
    RunContext,
    RunRecord,
    Schedule,
    StepNode,
    execute,
    topo_schedule,
    validate_graph,
)
from .learner import LogRegModel, builtin_train_logreg
from .monitor import MonitorConfig, MonitorEngine
from .policy import (
    DegradationSignal,
    PolicyConfig,
    RetrainDecision,
    decide,
    posterior_from_likelihoods,
    posterior_retrain,
)
from .registry import Lineage, ModelRegistry, ModelVersion
from .synth import Intent, RuleBasedProvider, parse_yaml, render_yaml, scan_source, synthesize_pipeline
from .validation import Dataset, SchemaSpec, check_schema, infer_schema, ingest_csv, validate_ingest

__version__ = "0.1.0"

__all__ = [
    "BinnedDistribution",
    "Binning",
    "Dataset",
    "DegradationSignal",
    "DriftReport",
    "DriftThresholds",
    "FeatureStatsRecord",
    "FeatureStore",
    "Intent",
    "Lineage",
    "LogRegModel",
    "ModelRegistry",
    "ModelVersion",
    "MonitorConfig",
    "MonitorEngine",
    "PipelineSpec",
    "PolicyConfig",
    "RetrainDecision",
    "RuleBasedProvider",
    "RunContext",
    "RunRecord",
    "Schedule",
    "SchemaSpec",
    "SmartMLOpsError",
    "StepNode",
    "bin_distribution",
    "build_reference_binning",
    "builtin_train_logreg",
    "check_schema",
    "decide",
    "evaluate_drift",
    "execute",
    "infer_schema",
    "ingest_csv",
    "kl_divergence",
    "parse_yaml",
    "posterior_from_likelihoods",
    "posterior_retrain",
    "psi",
    "render_yaml",
    "scan_source",
    "synthesize_pipeline",
    "topo_schedule",
    "validate_graph",
    "validate_ingest",
]
