"""Shared test fixtures: a cheap synthetic step kind and random generators."""

from __future__ import annotations

import numpy as np
import pytest

from smartmlops.errors import StepError
from smartmlops.graph import PipelineSpec, StepNode
from smartmlops.steps import register_step_kind


def noop_step(params, inputs, outputs, ctx):
    """Deterministic sub-millisecond step: copies a payload to each output."""
    if params.get("fail"):
        raise StepError("injected failure")
    payload = str(params.get("payload", ctx.node_id))
    for path in outputs.values():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload, encoding="utf-8")


register_step_kind("noop", noop_step)


def make_random_dag(
    rng: np.random.Generator,
    max_nodes: int = 50,
    edge_density: float = 0.3,
    fail_prob: float = 0.0,
) -> PipelineSpec:
    """Random DAG of noop nodes; edges only go from lower to higher index."""
    n = int(rng.integers(1, max_nodes + 1))
    ids = [f"n{i:02d}" for i in range(n)]
    nodes = [
        StepNode(
            id=ids[i],
            kind="noop",
            params={
                "payload": f"p{int(rng.integers(0, 1_000_000))}",
                **({"fail": True} if rng.random() < fail_prob else {}),
            },
            outputs={"out": f"art-{ids[i]}"},
        )
        for i in range(n)
    ]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_density * 2 / max(1, n - i - 1):
                edges.append((ids[i], ids[j]))
    return PipelineSpec(name=f"random-{n}", nodes=nodes, edges=edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
