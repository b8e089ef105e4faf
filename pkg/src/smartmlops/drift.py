"""Binned drift divergences: KL divergence and the Population Stability Index.

Both scores compare a frozen reference distribution against a current one
over a shared binning. Bins are equal-frequency quantile bins for numeric
features (outermost edges extended to +/- infinity so shifted data still
lands somewhere) and one bucket per frequent label plus a reserved "other"
bucket for categorical features.

Common PSI reading, for context when eyeballing reports:
    PSI < 0.1      stable
    0.1 - 0.25     moderate shift, investigate
    > 0.25         significant shift, retraining usually warranted

PSI is symmetric and equals the sum of the two directed KL divergences
(the Jeffreys divergence); KL itself is asymmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BinningError, DistributionError

DEFAULT_BIN_COUNT = 10
DEFAULT_EPSILON = 1e-6
RARE_LABEL_FRACTION = 0.01
OTHER_LABEL = "other"

# round-off guard: divergences in [-1e-12, 0) are clamped to exactly 0
_NEGATIVE_ROUNDOFF = -1e-12


@dataclass(frozen=True)
class Binning:
    """A frozen bin layout shared by reference and current distributions.

    Numeric binnings carry k+1 ascending edges (first -inf, last +inf);
    a value v falls in bin i when edges[i] <= v < edges[i+1]. Categorical
    binnings carry the kept labels plus the reserved "other" bucket last.
    """

    kind: str  # "numeric" | "categorical"
    edges: tuple[float, ...] = ()
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise BinningError(f"unknown binning kind: {self.kind!r}")
        if self.kind == "numeric":
            if len(self.edges) < 3:
                raise BinningError("numeric binning needs at least 3 edges (k >= 2)")
            if any(a >= b for a, b in zip(self.edges, self.edges[1:])):
                raise BinningError("bin edges must be strictly ascending")
        else:
            if len(self.categories) < 2:
                raise BinningError("categorical binning needs at least 2 buckets")
            if len(set(self.categories)) != len(self.categories):
                raise BinningError("categorical labels must be unique")
            if self.categories[-1] != OTHER_LABEL:
                raise BinningError(f"last categorical bucket must be {OTHER_LABEL!r}")

    @property
    def k(self) -> int:
        if self.kind == "numeric":
            return len(self.edges) - 1
        return len(self.categories)

    def to_dict(self) -> dict:
        if self.kind == "numeric":
            return {"kind": self.kind, "edges": [_edge_to_json(e) for e in self.edges]}
        return {"kind": self.kind, "categories": list(self.categories)}

    @classmethod
    def from_dict(cls, d: dict) -> "Binning":
        if d.get("kind") == "numeric":
            return cls(kind="numeric", edges=tuple(_edge_from_json(e) for e in d["edges"]))
        return cls(kind="categorical", categories=tuple(d["categories"]))


def _edge_to_json(e: float):
    # JSON has no Infinity literal; use string sentinels for the open ends
    if math.isinf(e):
        return "inf" if e > 0 else "-inf"
    return float(e)


def _edge_from_json(e) -> float:
    if isinstance(e, str):
        return float(e)
    return float(e)


@dataclass(frozen=True)
class BinnedDistribution:
    """Per-bin proportions of one sample under a fixed binning."""

    binning: Binning
    proportions: tuple[float, ...]
    sample_count: int

    def __post_init__(self):
        if len(self.proportions) != self.binning.k:
            raise DistributionError(
                f"expected {self.binning.k} proportions, got {len(self.proportions)}"
            )
        if any(p < 0 for p in self.proportions):
            raise DistributionError("proportions must be nonnegative")
        total = math.fsum(self.proportions)
        if abs(total - 1.0) > 1e-9:
            raise DistributionError(f"proportions must sum to 1 (got {total!r})")
        if self.sample_count < 0:
            raise DistributionError("sample_count must be nonnegative")


@dataclass(frozen=True)
class DriftThresholds:
    """Flagging bounds: KL for ingest-time checks, PSI for monitoring."""

    kl_delta: float = 0.1
    psi_threshold: float = 0.25

    def __post_init__(self):
        if self.kl_delta <= 0 or self.psi_threshold <= 0:
            raise DistributionError("drift thresholds must be strictly positive")

    def to_dict(self) -> dict:
        return {"kl_delta": self.kl_delta, "psi_threshold": self.psi_threshold}


@dataclass(frozen=True)
class DriftReport:
    """Divergence scores and flags for one feature."""

    feature: str
    kl: float
    psi: float
    per_bin_psi_terms: tuple[float, ...]
    kl_flagged: bool
    psi_flagged: bool
    thresholds: DriftThresholds = field(default_factory=DriftThresholds)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "kl": self.kl,
            "psi": self.psi,
            "per_bin_psi_terms": list(self.per_bin_psi_terms),
            "kl_flagged": self.kl_flagged,
            "psi_flagged": self.psi_flagged,
            "thresholds": self.thresholds.to_dict(),
        }


def build_reference_binning(values, k: int = DEFAULT_BIN_COUNT, kind: str | None = None) -> Binning:
    """Fit a binning to reference values.

    Numeric values get k equal-frequency bins from the reference quantiles,
    with the outermost edges pushed to +/- infinity. Categorical values get
    one bucket per label carrying at least 1% of the sample; rarer labels
    are merged into "other".

    Raises:
        BinningError: fewer than k distinct numeric values, or k < 2.
    """
    values = list(values)
    if not values:
        raise BinningError("cannot bin an empty reference sample")
    if kind is None:
        kind = "numeric" if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values) else "categorical"

    if kind == "numeric":
        if k < 2:
            raise BinningError(f"k must be >= 2, got {k}")
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise BinningError("reference values must be finite")
        if np.unique(arr).size < k:
            raise BinningError(
                f"too few distinct values: need >= {k}, got {np.unique(arr).size}"
            )
        qs = np.linspace(0.0, 1.0, k + 1)[1:-1]
        inner = np.unique(np.quantile(arr, qs))
        edges = (float("-inf"), *(float(e) for e in inner), float("inf"))
        if len(edges) < 3:
            raise BinningError("too few distinct values: degenerate quantiles")
        return Binning(kind="numeric", edges=edges)

    labels = [str(v) for v in values]
    counts: dict[str, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    cutoff = RARE_LABEL_FRACTION * len(labels)
    kept = sorted(lab for lab, c in counts.items() if c >= cutoff and lab != OTHER_LABEL)
    return Binning(kind="categorical", categories=(*kept, OTHER_LABEL))


def bin_distribution(values, binning: Binning) -> BinnedDistribution:
    """Assign values to the given bins and return their proportions.

    Numeric values outside the interior edges fall into the end bins;
    labels not kept by the binning fall into "other".

    Raises:
        DistributionError: empty input or non-finite numeric values.
    """
    values = list(values)
    if not values:
        raise DistributionError("cannot bin an empty sample")

    if binning.kind == "numeric":
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DistributionError("numeric values must be finite")
        inner = np.asarray(binning.edges[1:-1], dtype=float)
        idx = np.searchsorted(inner, arr, side="right")
        counts = np.bincount(idx, minlength=binning.k)
    else:
        positions = {lab: i for i, lab in enumerate(binning.categories)}
        other = positions[OTHER_LABEL]
        counts = np.zeros(binning.k, dtype=np.int64)
        for v in values:
            counts[positions.get(str(v), other)] += 1

    props = counts / counts.sum()
    return BinnedDistribution(
        binning=binning,
        proportions=tuple(float(p) for p in props),
        sample_count=len(values),
    )


def _smoothed(p: BinnedDistribution, q: BinnedDistribution, epsilon: float):
    if epsilon <= 0:
        raise DistributionError("epsilon must be strictly positive")
    if p.binning != q.binning:
        raise DistributionError("distributions use different binnings")
    ps = np.maximum(np.asarray(p.proportions), epsilon)
    qs = np.maximum(np.asarray(q.proportions), epsilon)
    return ps / ps.sum(), qs / qs.sum()


def _clamp(x: float) -> float:
    return 0.0 if _NEGATIVE_ROUNDOFF <= x < 0.0 else x


def kl_divergence(p: BinnedDistribution, q: BinnedDistribution, epsilon: float = DEFAULT_EPSILON) -> float:
    """Directed divergence sum(p'_i * ln(p'_i / q'_i)) over smoothed proportions.

    Proportions below epsilon are raised to epsilon and renormalized, so a
    zero bin in q yields a finite score instead of infinity.
    """
    ps, qs = _smoothed(p, q, epsilon)
    return _clamp(float(np.sum(ps * np.log(ps / qs))))


def psi(p: BinnedDistribution, q: BinnedDistribution, epsilon: float = DEFAULT_EPSILON) -> tuple[float, tuple[float, ...]]:
    """Population Stability Index with its per-bin terms.

    Each term (p'_i - q'_i) * ln(p'_i / q'_i) is individually nonnegative;
    the total is their exact sum.
    """
    ps, qs = _smoothed(p, q, epsilon)
    terms = tuple(_clamp(float(t)) for t in (ps - qs) * np.log(ps / qs))
    return math.fsum(terms), terms


def evaluate_drift(
    reference: BinnedDistribution,
    current: BinnedDistribution,
    thresholds: DriftThresholds | None = None,
    feature: str = "",
    epsilon: float = DEFAULT_EPSILON,
) -> DriftReport:
    """Score current against reference and apply both threshold flags."""
    thresholds = thresholds or DriftThresholds()
    kl = kl_divergence(reference, current, epsilon)
    total, terms = psi(reference, current, epsilon)
    return DriftReport(
        feature=feature,
        kl=kl,
        psi=total,
        per_bin_psi_terms=terms,
        kl_flagged=kl > thresholds.kl_delta,
        psi_flagged=total > thresholds.psi_threshold,
        thresholds=thresholds,
    )
