"""Versioned, immutable persistence of reference feature statistics.

Layout under the store root:

    features/<dataset_id>/<feature>/<version>.json   one immutable record each
    features/<dataset_id>/index.json                 feature -> latest version
    features/<dataset_id>/.lock                      advisory writer lock

Records are published with write-temp-then-rename so a crash mid-write
never corrupts the previous latest; readers take no lock.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .drift import Binning, BinnedDistribution
from .errors import NotFoundError, StoreError


@dataclass(frozen=True)
class FeatureStatsRecord:
    """Reference statistics for one feature of one dataset."""

    dataset_id: str
    feature: str
    binning: Binning
    proportions: tuple[float, ...]
    sample_count: int
    moments: dict[str, float] = field(default_factory=dict)  # mean/std/min/max, numeric only
    created_at: str = ""
    version: int = 0  # assigned by the store on put

    def distribution(self) -> BinnedDistribution:
        return BinnedDistribution(
            binning=self.binning,
            proportions=self.proportions,
            sample_count=self.sample_count,
        )

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "feature": self.feature,
            "version": self.version,
            "binning": self.binning.to_dict(),
            "proportions": list(self.proportions),
            "moments": dict(self.moments),
            "sample_count": self.sample_count,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStatsRecord":
        return cls(
            dataset_id=d["dataset_id"],
            feature=d["feature"],
            version=d["version"],
            binning=Binning.from_dict(d["binning"]),
            proportions=tuple(d["proportions"]),
            moments=dict(d["moments"]),
            sample_count=d["sample_count"],
            created_at=d["created_at"],
        )


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def atomic_write_json(path: Path, payload: dict) -> None:
    """Write JSON to a temp sibling, then rename over path.

    The fixed temp name is safe because writers are serialized by the
    advisory locks; readers never see partial files.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = str(path) + ".tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class FeatureStore:
    """File-backed store of FeatureStatsRecord versions."""

    def __init__(self, root: Path | str):
        self.root = Path(root) / "features"

    def _dataset_dir(self, dataset_id: str) -> Path:
        return self.root / dataset_id

    def _feature_dir(self, dataset_id: str, feature: str) -> Path:
        return self._dataset_dir(dataset_id) / feature

    def _index_path(self, dataset_id: str) -> Path:
        return self._dataset_dir(dataset_id) / "index.json"

    def _lock(self, dataset_id: str) -> FileLock:
        d = self._dataset_dir(dataset_id)
        d.mkdir(parents=True, exist_ok=True)
        return FileLock(str(d / ".lock"))

    def _read_index(self, dataset_id: str) -> dict[str, int]:
        path = self._index_path(dataset_id)
        if not path.exists():
            return {}
        with open(path, encoding="utf-8") as fh:
            return {k: int(v) for k, v in json.load(fh)["features"].items()}

    def put_stats(self, record: FeatureStatsRecord) -> int:
        """Persist the record under the next version; returns that version.

        The record's own version field is ignored. Writers are serialized
        per dataset via the advisory lock; the index update is atomic.
        """
        # constructing the distribution enforces the proportion invariants
        record.distribution()
        if not record.dataset_id or not record.feature:
            raise StoreError("dataset_id and feature must be nonempty")

        with self._lock(record.dataset_id):
            index = self._read_index(record.dataset_id)
            fdir = self._feature_dir(record.dataset_id, record.feature)
            # an orphaned record file (crash after record rename, before the
            # index rename) must never be overwritten: skip past it
            version = index.get(record.feature, 0) + 1
            while (fdir / f"{version}.json").exists():
                version += 1

            stored = FeatureStatsRecord(
                dataset_id=record.dataset_id,
                feature=record.feature,
                binning=record.binning,
                proportions=record.proportions,
                moments=record.moments,
                sample_count=record.sample_count,
                created_at=record.created_at or utc_now_iso(),
                version=version,
            )
            atomic_write_json(fdir / f"{version}.json", stored.to_dict())
            index[record.feature] = version
            atomic_write_json(self._index_path(record.dataset_id), {"features": index})
        return version

    def get_stats(self, dataset_id: str, feature: str, version: int | None = None) -> FeatureStatsRecord:
        """Fetch one record; version=None means the latest published one."""
        if version is None:
            index = self._read_index(dataset_id)
            if feature not in index:
                raise NotFoundError(f"no stats for feature {feature!r} in dataset {dataset_id!r}")
            version = index[feature]
        path = self._feature_dir(dataset_id, feature) / f"{version}.json"
        if not path.exists():
            raise NotFoundError(
                f"no version {version} for feature {feature!r} in dataset {dataset_id!r}"
            )
        with open(path, encoding="utf-8") as fh:
            return FeatureStatsRecord.from_dict(json.load(fh))

    def list_stats(self, dataset_id: str) -> list[tuple[str, int, str]]:
        """(feature, latest version, created_at) tuples sorted by feature name."""
        index = self._read_index(dataset_id)
        out = []
        for feature in sorted(index):
            rec = self.get_stats(dataset_id, feature, index[feature])
            out.append((feature, rec.version, rec.created_at))
        return out

    def latest_versions(self, dataset_id: str) -> dict[str, int]:
        return self._read_index(dataset_id)
