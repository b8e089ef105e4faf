"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SmartMLOpsError(Exception):
    """Base class for all errors raised by this package."""


class BinningError(SmartMLOpsError):
    """Invalid binning construction (too few distinct values, bad k, ...)."""


class DistributionError(SmartMLOpsError):
    """Invalid binned distribution or mismatched binnings."""


class DegenerateEvidenceError(SmartMLOpsError):
    """Both likelihoods are zero; the posterior is undefined."""


class IngestError(SmartMLOpsError):
    """CSV ingestion failure (unreadable, ragged, or empty input)."""


class MissingReferenceStats(SmartMLOpsError):
    """No stored reference statistics for a monitored feature."""


class StoreError(SmartMLOpsError):
    """Feature store or registry persistence failure."""


class NotFoundError(StoreError):
    """Requested record, version, or model does not exist."""


class RegistryStateError(StoreError):
    """Operation not allowed in the current registry stage state."""


class GraphValidationError(SmartMLOpsError):
    """Pipeline graph failed validation; carries the full error list."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class CyclicGraphError(GraphValidationError):
    """Graph contains a cycle; names the nodes left after source elimination."""

    def __init__(self, nodes: list[str]):
        super().__init__([f"cycle detected involving nodes: {sorted(nodes)}"])
        self.nodes = sorted(nodes)


class StepError(SmartMLOpsError):
    """A pipeline step failed."""


class PipelineFormatError(SmartMLOpsError):
    """Pipeline YAML is syntactically or structurally invalid."""


class DirectiveError(SmartMLOpsError):
    """Malformed intent directive; carries file and line."""

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class ScenarioError(SmartMLOpsError):
    """Invalid synthetic-drift scenario configuration."""


class LearnerError(SmartMLOpsError):
    """Toy learner cannot train on the given data."""


class MonitorError(SmartMLOpsError):
    """Monitor configuration or state error."""
