"""Pipeline DAGs: validation, layered topological scheduling, execution.

A pipeline is G = (V, E): nodes are typed steps, edges come from explicit
declarations plus artifact wiring (the producer of an artifact precedes
each consumer). Scheduling is ASAP layering: a node's layer is the length
of the longest path reaching it, so mutually independent nodes share a
layer and can run in parallel. Ties inside a layer break lexicographically
so schedules, logs, and digests are reproducible.

Failure policy is fail-fast with descendant skipping: a node is skipped
exactly when some ancestor failed; independent branches still complete, so
serial and parallel executions of the same spec produce identical
RunRecords (statuses and artifact digests).
"""

from __future__ import annotations

import secrets
import time
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import CyclicGraphError, GraphValidationError, StepError
from .feature_store import atomic_write_json
from .registry import sha256_file
from .steps import StepContext, registered_kinds, required_params, run_step


@dataclass
class StepNode:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)  # role -> artifact name
    outputs: dict[str, str] = field(default_factory=dict)  # role -> artifact name
    command: str | None = None

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "kind": self.kind,
            "params": dict(self.params),
            "inputs": dict(self.inputs),
            "outputs": dict(self.outputs),
        }
        if self.command is not None:
            d["command"] = self.command
        return d


@dataclass
class PipelineSpec:
    name: str
    nodes: list[StepNode] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def node_map(self) -> dict[str, StepNode]:
        return {n.id: n for n in self.nodes}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [{"from": u, "to": v} for u, v in self.edges],
        }


def derived_edges(spec: PipelineSpec) -> set[tuple[str, str]]:
    """Edges implied by artifact names: producer precedes each consumer."""
    producers: dict[str, str] = {}
    for n in spec.nodes:
        for art in n.outputs.values():
            producers.setdefault(art, n.id)
    out = set()
    for n in spec.nodes:
        for art in n.inputs.values():
            p = producers.get(art)
            if p is not None and p != n.id:
                out.add((p, n.id))
    return out


def effective_edges(spec: PipelineSpec) -> set[tuple[str, str]]:
    ids = {n.id for n in spec.nodes}
    explicit = {(u, v) for u, v in spec.edges if u in ids and v in ids and u != v}
    return explicit | derived_edges(spec)


def _source_elimination(ids: list[str], edges: set[tuple[str, str]]):
    """Kahn's algorithm; returns (levels, layer order, unprocessed nodes)."""
    indeg = {i: 0 for i in ids}
    adj = defaultdict(list)
    for u, v in edges:
        adj[u].append(v)
        indeg[v] += 1
    level = {i: 0 for i in ids}
    queue = deque(sorted(i for i in ids if indeg[i] == 0))
    processed = set()
    while queue:
        u = queue.popleft()
        processed.add(u)
        for v in sorted(adj[u]):
            level[v] = max(level[v], level[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    remaining = [i for i in ids if i not in processed]
    return level, remaining


def validate_graph(spec: PipelineSpec) -> list[str]:
    """Structural checks; returns an error list (empty means valid)."""
    errors: list[str] = []
    kinds = registered_kinds()

    seen: set[str] = set()
    for n in spec.nodes:
        if not n.id:
            errors.append("empty node id")
        elif n.id in seen:
            errors.append(f"duplicate node id: {n.id}")
        seen.add(n.id)

    for n in spec.nodes:
        if n.kind not in kinds:
            errors.append(f"node '{n.id}': unknown step kind {n.kind!r}")
            continue
        for p in required_params(n.kind):
            if p not in n.params:
                errors.append(f"node '{n.id}': {n.kind} step requires param {p!r}")
        if n.kind == "command" and not n.command:
            errors.append(f"node '{n.id}': command step requires a command line")

    producers: dict[str, str] = {}
    for n in spec.nodes:
        for art in n.outputs.values():
            if art in producers:
                errors.append(
                    f"artifact {art!r} produced by multiple nodes: "
                    f"{producers[art]}, {n.id}"
                )
            else:
                producers[art] = n.id
    for n in spec.nodes:
        for art in n.inputs.values():
            if art not in producers:
                errors.append(f"no producer for artifact {art!r} consumed by node '{n.id}'")
            elif producers[art] == n.id:
                errors.append(f"node '{n.id}' consumes its own output artifact {art!r}")

    ids = {n.id for n in spec.nodes}
    for u, v in spec.edges:
        if u not in ids:
            errors.append(f"edge references unknown node '{u}'")
        if v not in ids:
            errors.append(f"edge references unknown node '{v}'")
        if u == v and u in ids:
            errors.append(f"self-edge on node '{u}'")

    if not errors:
        _, remaining = _source_elimination([n.id for n in spec.nodes], effective_edges(spec))
        if remaining:
            errors.append(f"cycle detected involving nodes: {sorted(remaining)}")
    return errors


@dataclass(frozen=True)
class Schedule:
    layers: tuple[tuple[str, ...], ...]

    def to_dict(self) -> dict:
        return {"layers": [list(layer) for layer in self.layers]}


def topo_schedule(spec: PipelineSpec) -> Schedule:
    """ASAP layers: layer(n) = longest path from any source to n.

    Raises:
        CyclicGraphError: the graph has a cycle (names the nodes left
            after iterative source elimination).
    """
    ids = [n.id for n in spec.nodes]
    level, remaining = _source_elimination(ids, effective_edges(spec))
    if remaining:
        raise CyclicGraphError(remaining)
    if not ids:
        return Schedule(layers=())
    depth = max(level.values()) + 1
    buckets: list[list[str]] = [[] for _ in range(depth)]
    for i in ids:
        buckets[level[i]].append(i)
    return Schedule(layers=tuple(tuple(sorted(b)) for b in buckets))


@dataclass
class ArtifactInfo:
    path: str
    sha256: str


@dataclass
class NodeResult:
    status: str  # succeeded | failed | skipped
    started_at: str | None = None
    ended_at: str | None = None
    error: str | None = None
    artifacts: dict[str, ArtifactInfo] = field(default_factory=dict)


@dataclass
class RunRecord:
    run_id: str
    pipeline: str
    status: str  # succeeded | failed
    nodes: dict[str, NodeResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "pipeline": self.pipeline,
            "status": self.status,
            "nodes": {
                nid: {
                    "status": r.status,
                    "started_at": r.started_at,
                    "ended_at": r.ended_at,
                    "error": r.error,
                    "artifacts": {
                        name: {"path": a.path, "sha256": a.sha256}
                        for name, a in sorted(r.artifacts.items())
                    },
                }
                for nid, r in sorted(self.nodes.items())
            },
        }

    def signature(self) -> dict:
        """Statuses plus artifact digests; the determinism-relevant part."""
        return {
            nid: (r.status, tuple(sorted((n, a.sha256) for n, a in r.artifacts.items())))
            for nid, r in self.nodes.items()
        }


@dataclass
class RunContext:
    runs_root: Path = Path("runs")
    store_root: Path = Path("store")
    seed: int = 42
    run_id: str | None = None
    env: dict[str, str] = field(default_factory=dict)
    param_overrides: dict[str, dict] = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def new_run_id() -> str:
    return time.strftime("%Y%m%d-%H%M%S") + "-" + secrets.token_hex(4)


def execute(spec: PipelineSpec, max_parallel: int = 1, context: RunContext | None = None) -> RunRecord:
    """Run the pipeline layer by layer with at most max_parallel workers.

    Artifacts land under runs/<run_id>/<node_id>/ and are digested into the
    RunRecord, which is also written to runs/<run_id>/record.json.

    Raises:
        GraphValidationError: the spec does not validate.
    """
    if max_parallel < 1:
        raise GraphValidationError(["max_parallel must be >= 1"])
    errors = validate_graph(spec)
    if errors:
        raise GraphValidationError(errors)
    ctx = context or RunContext()

    run_id = ctx.run_id or new_run_id()
    run_dir = Path(ctx.runs_root) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    schedule = topo_schedule(spec)
    nodes = spec.node_map()
    edges = effective_edges(spec)
    parents = defaultdict(set)
    for u, v in edges:
        parents[v].add(u)

    artifact_paths: dict[str, Path] = {}
    for n in spec.nodes:
        for art in n.outputs.values():
            artifact_paths[art] = run_dir / n.id / art

    results: dict[str, NodeResult] = {}

    def run_node(node: StepNode) -> NodeResult:
        node_dir = run_dir / node.id
        node_dir.mkdir(parents=True, exist_ok=True)
        started = _now()
        inputs = {role: artifact_paths[art] for role, art in node.inputs.items()}
        outputs = {role: artifact_paths[art] for role, art in node.outputs.items()}
        for role, path in inputs.items():
            if not path.exists():
                return NodeResult(
                    status="failed",
                    started_at=started,
                    ended_at=_now(),
                    error=f"missing input artifact {node.inputs[role]!r} for role {role!r}",
                )
        params = {**node.params, **ctx.param_overrides.get(node.id, {})}
        step_ctx = StepContext(
            run_id=run_id,
            run_dir=run_dir,
            node_id=node.id,
            node_dir=node_dir,
            store_root=Path(ctx.store_root),
            seed=ctx.seed,
            env=dict(ctx.env),
        )
        try:
            run_step(node.kind, params, inputs, outputs, step_ctx, command=node.command)
        except StepError as e:
            return NodeResult(status="failed", started_at=started, ended_at=_now(), error=str(e))
        except Exception as e:  # a buggy step must fail its node, not the engine
            return NodeResult(
                status="failed",
                started_at=started,
                ended_at=_now(),
                error=f"{type(e).__name__}: {e}",
            )
        artifacts = {}
        for role, art in node.outputs.items():
            path = outputs[role]
            if not path.exists():
                return NodeResult(
                    status="failed",
                    started_at=started,
                    ended_at=_now(),
                    error=f"step did not produce declared output artifact {art!r}",
                )
            artifacts[art] = ArtifactInfo(path=str(path), sha256=sha256_file(path))
        return NodeResult(status="succeeded", started_at=started, ended_at=_now(), artifacts=artifacts)

    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        for layer in schedule.layers:
            runnable = []
            for nid in layer:
                bad = [p for p in parents[nid] if results[p].status != "succeeded"]
                if bad:
                    results[nid] = NodeResult(
                        status="skipped", error=f"upstream did not succeed: {sorted(bad)}"
                    )
                else:
                    runnable.append(nid)
            futures = {nid: pool.submit(run_node, nodes[nid]) for nid in runnable}
            # the coordinator is the only writer of `results`
            for nid in runnable:
                results[nid] = futures[nid].result()

    status = "failed" if any(r.status == "failed" for r in results.values()) else "succeeded"
    record = RunRecord(run_id=run_id, pipeline=spec.name, status=status, nodes=results)
    atomic_write_json(run_dir / "record.json", record.to_dict())
    return record
