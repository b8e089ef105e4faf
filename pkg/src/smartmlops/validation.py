"""Dataset ingestion, schema conformity, and ingest-time drift flagging.

CSV contract: comma separated, UTF-8, first row is the header, empty
fields are nulls. A column parses as numeric when every non-null cell is
a finite number; anything else is categorical. Drift is always measured
against the frozen reference binning from the feature store, never
against a re-fit of the incoming data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .drift import (
    DriftReport,
    DriftThresholds,
    bin_distribution,
    build_reference_binning,
    evaluate_drift,
)
from .errors import IngestError, MissingReferenceStats
from .feature_store import FeatureStatsRecord

NUMERIC = "numeric"
CATEGORICAL = "categorical"

# a monitored feature with more nulls than this fails validation outright
MAX_NULL_FRACTION = 0.2


@dataclass
class Dataset:
    """Rectangular table with two-valued column typing."""

    columns: list[str]
    types: dict[str, str]  # column -> "numeric" | "categorical"
    rows: list[list]  # row-major; numeric cells float|None, categorical str|None

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def non_null(self, name: str) -> list:
        return [v for v in self.column(name) if v is not None]

    def numeric_values(self, name: str) -> np.ndarray:
        return np.asarray(self.non_null(name), dtype=float)

    def to_csv(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow(["" if v is None else v for v in row])

    @classmethod
    def from_columns(cls, data: Mapping[str, Sequence]) -> "Dataset":
        columns = list(data)
        lengths = {len(data[c]) for c in columns}
        if len(lengths) > 1:
            raise IngestError("columns have unequal lengths")
        rows = [list(vals) for vals in zip(*(data[c] for c in columns))] if columns else []
        ds = cls(columns=columns, types={}, rows=rows)
        ds.types = {c: _infer_type([v for v in data[c] if v is not None]) for c in columns}
        _coerce(ds)
        return ds


def _infer_type(values: list) -> str:
    if not values:
        return CATEGORICAL
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return CATEGORICAL
        if not math.isfinite(v):
            return CATEGORICAL
    return NUMERIC


def _coerce(ds: Dataset) -> None:
    for i, c in enumerate(ds.columns):
        if ds.types[c] == NUMERIC:
            for row in ds.rows:
                if row[i] is not None:
                    row[i] = float(row[i])
        else:
            for row in ds.rows:
                if row[i] is not None:
                    row[i] = str(row[i])


def _parse_cell(cell: str):
    if cell == "":
        return None
    try:
        v = float(cell)
    except ValueError:
        return cell
    return v if math.isfinite(v) else cell


def ingest_csv(path: Path | str) -> Dataset:
    """Read a CSV file into a typed Dataset.

    Raises:
        IngestError: unreadable file, missing header, or a ragged row
            (the error names its 1-based line number).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if not header or all(h == "" for h in header):
            raise IngestError(f"{path}: empty header row")
        raw_rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestError(
                    f"{path}: ragged row at line {lineno} "
                    f"({len(row)} fields, expected {len(header)})"
                )
            raw_rows.append([_parse_cell(c) for c in row])

    types = {}
    for i, name in enumerate(header):
        types[name] = _infer_type([r[i] for r in raw_rows if r[i] is not None])
    ds = Dataset(columns=list(header), types=types, rows=raw_rows)
    _coerce(ds)
    return ds


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    type: str
    nullable: bool
    numeric_range: tuple[float, float] | None = None
    categories: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SchemaSpec:
    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise IngestError("schema column names must be unique")

    def by_name(self) -> dict[str, ColumnSpec]:
        return {c.name: c for c in self.columns}

    def to_dict(self) -> dict:
        return {
            "columns": [
                {
                    "name": c.name,
                    "type": c.type,
                    "nullable": c.nullable,
                    "numeric_range": list(c.numeric_range) if c.numeric_range else None,
                    "categories": list(c.categories) if c.categories else None,
                }
                for c in self.columns
            ]
        }


def infer_schema(dataset: Dataset) -> SchemaSpec:
    """Observed ranges, category sets, and nullability become the schema."""
    if dataset.n_rows == 0:
        raise IngestError("cannot infer a schema from an empty dataset")
    cols = []
    for name in dataset.columns:
        values = dataset.column(name)
        non_null = [v for v in values if v is not None]
        nullable = len(non_null) < len(values)
        if dataset.types[name] == NUMERIC and non_null:
            cols.append(
                ColumnSpec(
                    name=name,
                    type=NUMERIC,
                    nullable=nullable,
                    numeric_range=(float(min(non_null)), float(max(non_null))),
                )
            )
        else:
            cols.append(
                ColumnSpec(
                    name=name,
                    type=dataset.types[name],
                    nullable=nullable,
                    categories=tuple(sorted({str(v) for v in non_null})),
                )
            )
    return SchemaSpec(columns=tuple(cols))


@dataclass(frozen=True)
class Violation:
    column: str
    rule: str
    detail: str

    def to_dict(self) -> dict:
        return {"column": self.column, "rule": self.rule, "detail": self.detail}


def check_schema(dataset: Dataset, schema: SchemaSpec) -> list[Violation]:
    """Schema conformity scan; violations are data, not exceptions."""
    violations = []
    expected = schema.by_name()
    present = set(dataset.columns)

    for name in expected:
        if name not in present:
            violations.append(Violation(name, "missing-column", "column absent from dataset"))
    for name in dataset.columns:
        if name not in expected:
            violations.append(Violation(name, "extra-column", "column not in schema"))

    for name, spec in expected.items():
        if name not in present:
            continue
        actual_type = dataset.types[name]
        if actual_type != spec.type:
            violations.append(
                Violation(name, "type-mismatch", f"expected {spec.type}, got {actual_type}")
            )
            continue
        values = dataset.column(name)
        nulls = sum(1 for v in values if v is None)
        if nulls and not spec.nullable:
            violations.append(Violation(name, "unexpected-null", f"{nulls} null value(s)"))
        non_null = [v for v in values if v is not None]
        if spec.type == NUMERIC and spec.numeric_range is not None:
            lo, hi = spec.numeric_range
            bad = sum(1 for v in non_null if v < lo or v > hi)
            if bad:
                violations.append(
                    Violation(name, "out-of-range", f"{bad} value(s) outside [{lo:g}, {hi:g}]")
                )
        if spec.type == CATEGORICAL and spec.categories is not None:
            allowed = set(spec.categories)
            bad_labels = sorted({str(v) for v in non_null} - allowed)
            if bad_labels:
                count = sum(1 for v in non_null if str(v) in set(bad_labels))
                violations.append(
                    Violation(name, "disallowed-category", f"{count} value(s) in {bad_labels}")
                )
    return violations


@dataclass
class ValidationReport:
    schema_violations: list[Violation]
    drift_reports: list[DriftReport]
    passed: bool
    flagged_features: list[str]

    def to_dict(self) -> dict:
        return {
            "schema_violations": [v.to_dict() for v in self.schema_violations],
            "drift_reports": [r.to_dict() for r in self.drift_reports],
            "passed": self.passed,
            "flagged_features": list(self.flagged_features),
        }


def validate_ingest(
    reference_stats: Mapping[str, FeatureStatsRecord],
    incoming: Dataset,
    thresholds: DriftThresholds | None = None,
    schema: SchemaSpec | None = None,
    monitored: Iterable[str] | None = None,
) -> ValidationReport:
    """Check an incoming dataset against frozen reference statistics.

    Each monitored feature is binned with the reference binning and scored;
    the report passes only when there are no schema violations and no
    feature exceeds the KL flag threshold.

    Raises:
        MissingReferenceStats: a monitored feature has no stored stats.
    """
    thresholds = thresholds or DriftThresholds()
    features = sorted(monitored) if monitored is not None else sorted(reference_stats)
    missing = [f for f in features if f not in reference_stats]
    if missing:
        raise MissingReferenceStats(f"no reference stats for feature(s): {missing}")

    violations = list(check_schema(incoming, schema)) if schema is not None else []
    reports: list[DriftReport] = []

    for feature in features:
        rec = reference_stats[feature]
        if feature not in incoming.columns:
            violations.append(Violation(feature, "missing-column", "monitored feature absent"))
            continue
        expected_type = NUMERIC if rec.binning.kind == "numeric" else CATEGORICAL
        if incoming.types[feature] != expected_type:
            violations.append(
                Violation(
                    feature,
                    "type-mismatch",
                    f"reference is {expected_type}, incoming is {incoming.types[feature]}",
                )
            )
            continue
        values = incoming.column(feature)
        non_null = [v for v in values if v is not None]
        null_fraction = 1.0 - len(non_null) / len(values) if values else 1.0
        if null_fraction > MAX_NULL_FRACTION:
            violations.append(
                Violation(feature, "null-fraction", f"{null_fraction:.1%} nulls exceeds 20%")
            )
        if not non_null:
            continue
        current = bin_distribution(non_null, rec.binning)
        reports.append(evaluate_drift(rec.distribution(), current, thresholds, feature=feature))

    flagged = [r.feature for r in reports if r.kl_flagged]
    passed = not violations and not flagged
    return ValidationReport(
        schema_violations=violations,
        drift_reports=reports,
        passed=passed,
        flagged_features=flagged,
    )


def fit_feature_stats(
    dataset: Dataset,
    dataset_id: str,
    features: Iterable[str] | None = None,
    bins: int = 10,
) -> list[FeatureStatsRecord]:
    """Build reference statistics records (unversioned) from a dataset.

    Nulls are excluded from binning; numeric features also record their
    mean/std/min/max moments.
    """
    names = list(features) if features is not None else list(dataset.columns)
    records = []
    for name in names:
        if name not in dataset.columns:
            raise MissingReferenceStats(f"feature {name!r} absent from dataset")
        non_null = dataset.non_null(name)
        kind = "numeric" if dataset.types[name] == NUMERIC else "categorical"
        binning = build_reference_binning(non_null, k=bins, kind=kind)
        dist = bin_distribution(non_null, binning)
        moments: dict[str, float] = {}
        if kind == "numeric":
            arr = np.asarray(non_null, dtype=float)
            moments = {
                "mean": float(arr.mean()),
                "std": float(arr.std()),
                "min": float(arr.min()),
                "max": float(arr.max()),
            }
        records.append(
            FeatureStatsRecord(
                dataset_id=dataset_id,
                feature=name,
                binning=binning,
                proportions=dist.proportions,
                moments=moments,
                sample_count=dist.sample_count,
            )
        )
    return records
