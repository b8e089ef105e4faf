"""Versioned model registry with stages, lineage, promotion, and rollback.

Layout under the store root:

    models/<name>/<version>/artifact.bin    copied parameter file
    models/<name>/<version>/meta.json       version metadata incl. stage
    models/<name>/events.log                append-only JSON lines
    models/<name>/state.json                production pointer + history stack
    models/<name>/.lock                     advisory writer lock

Stages: candidate -> production -> archived. At most one production
version exists per model. Rollback walks the production history stack
backwards (lineage parents may never have been deployed, so rollback
follows deployments, not parents).
"""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .errors import NotFoundError, RegistryStateError, StoreError
from .feature_store import atomic_write_json, utc_now_iso

CANDIDATE = "candidate"
PRODUCTION = "production"
ARCHIVED = "archived"


@dataclass(frozen=True)
class Lineage:
    run_id: str = ""
    parent_version: int | None = None
    feature_stats: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "parent_version": self.parent_version,
            "feature_stats": dict(self.feature_stats),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lineage":
        return cls(
            run_id=d.get("run_id", ""),
            parent_version=d.get("parent_version"),
            feature_stats={k: int(v) for k, v in d.get("feature_stats", {}).items()},
        )


@dataclass(frozen=True)
class ModelVersion:
    model_name: str
    version: int
    artifact_digest: str
    metrics: dict[str, float]
    trained_at: str
    lineage: Lineage
    stage: str

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "version": self.version,
            "artifact_digest": self.artifact_digest,
            "metrics": dict(self.metrics),
            "trained_at": self.trained_at,
            "lineage": self.lineage.to_dict(),
            "stage": self.stage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelVersion":
        return cls(
            model_name=d["model_name"],
            version=d["version"],
            artifact_digest=d["artifact_digest"],
            metrics=dict(d["metrics"]),
            trained_at=d["trained_at"],
            lineage=Lineage.from_dict(d["lineage"]),
            stage=d["stage"],
        )


@dataclass(frozen=True)
class RegistryEvent:
    kind: str  # registered | promoted | rolled_back | archived
    model_name: str
    version: int
    timestamp: str
    cause: str = ""

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "model_name": self.model_name,
            "version": self.version,
            "timestamp": self.timestamp,
            "cause": self.cause,
        }


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class ModelRegistry:
    """File-backed model catalog with a single-production-stage invariant."""

    def __init__(self, root: Path | str):
        self.root = Path(root) / "models"

    def _model_dir(self, name: str) -> Path:
        return self.root / name

    def _version_dir(self, name: str, version: int) -> Path:
        return self._model_dir(name) / str(version)

    def _lock(self, name: str) -> FileLock:
        d = self._model_dir(name)
        d.mkdir(parents=True, exist_ok=True)
        return FileLock(str(d / ".lock"))

    def _read_state(self, name: str) -> dict:
        path = self._model_dir(name) / "state.json"
        if not path.exists():
            return {"production": None, "stack": []}
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def _write_state(self, name: str, state: dict) -> None:
        atomic_write_json(self._model_dir(name) / "state.json", state)

    def _read_meta(self, name: str, version: int) -> ModelVersion:
        path = self._version_dir(name, version) / "meta.json"
        if not path.exists():
            raise NotFoundError(f"model {name!r} has no version {version}")
        with open(path, encoding="utf-8") as fh:
            return ModelVersion.from_dict(json.load(fh))

    def _write_meta(self, mv: ModelVersion) -> None:
        atomic_write_json(self._version_dir(mv.model_name, mv.version) / "meta.json", mv.to_dict())

    def _append_event(self, event: RegistryEvent) -> None:
        path = self._model_dir(event.model_name) / "events.log"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")

    def _set_stage(self, name: str, version: int, stage: str) -> ModelVersion:
        mv = self._read_meta(name, version)
        updated = ModelVersion(
            model_name=mv.model_name,
            version=mv.version,
            artifact_digest=mv.artifact_digest,
            metrics=mv.metrics,
            trained_at=mv.trained_at,
            lineage=mv.lineage,
            stage=stage,
        )
        self._write_meta(updated)
        return updated

    # -- operations ------------------------------------------------------

    def register(
        self,
        model_name: str,
        artifact_path: Path | str,
        metrics: dict[str, float],
        lineage: Lineage | None = None,
        cause: str = "",
    ) -> ModelVersion:
        """Copy the artifact in, assign the next version, stage = candidate."""
        artifact_path = Path(artifact_path)
        if not artifact_path.is_file():
            raise StoreError(f"artifact file not found: {artifact_path}")
        if not model_name:
            raise StoreError("model_name must be nonempty")
        with self._lock(model_name):
            state = self._read_state(model_name)
            version = state.get("next_version")
            if version is None:
                versions = self.versions(model_name)
                version = (versions[-1] if versions else 0) + 1
            # claim the number before publishing; a crash here leaves a
            # harmless gap instead of a reusable collision
            state["next_version"] = version + 1
            self._write_state(model_name, state)
            vdir = self._version_dir(model_name, version)
            vdir.mkdir(parents=True, exist_ok=True)
            stored = vdir / "artifact.bin"
            shutil.copyfile(artifact_path, stored)
            digest = sha256_file(stored)
            mv = ModelVersion(
                model_name=model_name,
                version=version,
                artifact_digest=digest,
                metrics={k: float(v) for k, v in metrics.items()},
                trained_at=utc_now_iso(),
                lineage=lineage or Lineage(),
                stage=CANDIDATE,
            )
            self._write_meta(mv)
            self._append_event(
                RegistryEvent("registered", model_name, version, utc_now_iso(), cause)
            )
        return mv

    def promote(self, model_name: str, version: int, cause: str = "") -> ModelVersion:
        """Move a candidate to production; the old production is archived."""
        with self._lock(model_name):
            mv = self._read_meta(model_name, version)
            if mv.stage != CANDIDATE:
                raise RegistryStateError(
                    f"cannot promote {model_name} v{version}: stage is {mv.stage}, not candidate"
                )
            state = self._read_state(model_name)
            previous = state.get("production")
            if previous is not None:
                self._set_stage(model_name, previous, ARCHIVED)
                self._append_event(
                    RegistryEvent("archived", model_name, previous, utc_now_iso(),
                                  f"displaced by v{version}")
                )
            promoted = self._set_stage(model_name, version, PRODUCTION)
            state["production"] = version
            state.setdefault("stack", []).append(version)
            self._write_state(model_name, state)
            self._append_event(
                RegistryEvent("promoted", model_name, version, utc_now_iso(), cause)
            )
        return promoted

    def rollback(self, model_name: str, to_version: int | None = None, cause: str = "") -> ModelVersion:
        """Walk the production pointer back through ex-production history.

        Without to_version, move one step back; with it, pop history until
        that version (which must be an archived ex-production ancestor).

        Raises:
            RegistryStateError: nothing to roll back to.
        """
        with self._lock(model_name):
            state = self._read_state(model_name)
            stack = state.get("stack", [])
            current = state.get("production")
            if current is None or len(stack) < 2:
                raise RegistryStateError(f"{model_name}: nothing to roll back to")
            if to_version is None:
                target = stack[-2]
            else:
                if to_version not in stack[:-1]:
                    raise RegistryStateError(
                        f"{model_name}: v{to_version} is not an ex-production ancestor"
                    )
                target = to_version
            target_meta = self._read_meta(model_name, target)
            if target_meta.stage != ARCHIVED:
                raise RegistryStateError(
                    f"{model_name}: v{target} is {target_meta.stage}, expected archived"
                )
            self._set_stage(model_name, current, ARCHIVED)
            self._append_event(
                RegistryEvent("archived", model_name, current, utc_now_iso(),
                              f"rolled back to v{target}")
            )
            while stack and stack[-1] != target:
                stack.pop()
            restored = self._set_stage(model_name, target, PRODUCTION)
            state["production"] = target
            state["stack"] = stack
            self._write_state(model_name, state)
            self._append_event(
                RegistryEvent("rolled_back", model_name, target, utc_now_iso(), cause)
            )
        return restored

    # -- queries ---------------------------------------------------------

    def versions(self, model_name: str) -> list[int]:
        # a version exists only once its meta.json is published; a crash
        # mid-register leaves an invisible orphan directory that the next
        # register may safely reuse
        d = self._model_dir(model_name)
        if not d.is_dir():
            return []
        return sorted(
            int(p.name)
            for p in d.iterdir()
            if p.is_dir() and p.name.isdigit() and (p / "meta.json").exists()
        )

    def get(self, model_name: str, version: int | None = None, verify: bool = False) -> ModelVersion:
        """Fetch one version (default: production, else latest).

        With verify=True the stored artifact is re-hashed and compared to
        the recorded digest; a mismatch means tampering.
        """
        if version is None:
            state = self._read_state(model_name)
            version = state.get("production")
            if version is None:
                versions = self.versions(model_name)
                if not versions:
                    raise NotFoundError(f"model {model_name!r} has no versions")
                version = versions[-1]
        mv = self._read_meta(model_name, version)
        if verify:
            actual = sha256_file(self.artifact_path(model_name, version))
            if actual != mv.artifact_digest:
                raise StoreError(
                    f"artifact digest mismatch for {model_name} v{version}: "
                    f"stored {mv.artifact_digest[:12]}..., actual {actual[:12]}..."
                )
        return mv

    def artifact_path(self, model_name: str, version: int) -> Path:
        path = self._version_dir(model_name, version) / "artifact.bin"
        if not path.exists():
            raise NotFoundError(f"model {model_name!r} has no artifact for version {version}")
        return path

    def production_version(self, model_name: str) -> int | None:
        return self._read_state(model_name).get("production")

    def list(self, model_name: str) -> list[ModelVersion]:
        return [self._read_meta(model_name, v) for v in self.versions(model_name)]

    def lineage_of(self, model_name: str, version: int) -> list[dict]:
        """Chain of (version, run_id, feature_stats) links, newest first."""
        chain = []
        seen = set()
        cursor: int | None = version
        while cursor is not None and cursor not in seen:
            seen.add(cursor)
            mv = self._read_meta(model_name, cursor)
            chain.append(
                {
                    "version": mv.version,
                    "run_id": mv.lineage.run_id,
                    "feature_stats": dict(mv.lineage.feature_stats),
                    "parent_version": mv.lineage.parent_version,
                }
            )
            cursor = mv.lineage.parent_version
        return chain

    def events(self, model_name: str) -> list[RegistryEvent]:
        path = self._model_dir(model_name) / "events.log"
        if not path.exists():
            return []
        out = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    out.append(RegistryEvent(d["kind"], d["model_name"], d["version"],
                                             d["timestamp"], d.get("cause", "")))
        return out

    def replay_events(self, model_name: str) -> dict:
        """Reconstruct {stages, production, stack} purely from the event log."""
        stages: dict[int, str] = {}
        production: int | None = None
        stack: list[int] = []
        for ev in self.events(model_name):
            if ev.kind == "registered":
                stages[ev.version] = CANDIDATE
            elif ev.kind == "archived":
                stages[ev.version] = ARCHIVED
                if production == ev.version:
                    production = None
            elif ev.kind == "promoted":
                stages[ev.version] = PRODUCTION
                production = ev.version
                stack.append(ev.version)
            elif ev.kind == "rolled_back":
                stages[ev.version] = PRODUCTION
                production = ev.version
                while stack and stack[-1] != ev.version:
                    stack.pop()
        return {"stages": stages, "production": production, "stack": stack}
