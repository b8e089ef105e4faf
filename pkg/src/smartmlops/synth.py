"""Rule-based pipeline synthesis from source-code intent directives.

A directive is a comment line (any of the #, //, -- comment markers)
of the form

    mlops: train-model dataset=data/toy.csv target=y model=logreg

Recognized keys: dataset, target, model, seed, features (comma-separated).
Each directive becomes one pipeline; train-model intents expand to the
fixed template ingest -> validate -> features -> train -> evaluate ->
register -> deploy_gate, with an extra features -> evaluate edge. The
synthesizer sits behind a small provider interface so a smarter backend
can replace it without touching callers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import yaml

from .errors import DirectiveError, PipelineFormatError, SmartMLOpsError
from .graph import PipelineSpec, StepNode, validate_graph
from .steps import BUILTIN_MODEL_KINDS, registered_kinds

INTENT_KINDS = ("train-model", "evaluate-model")
DIRECTIVE_KEYS = ("dataset", "target", "model", "seed", "features")

_DIRECTIVE_RE = re.compile(r"^\s*(?:#|//|--)\s*mlops:\s*(.*)$")
_PAIR_RE = re.compile(r"^([A-Za-z_]+)=(\S+)$")

SOURCE_SUFFIXES = {".py", ".js", ".ts", ".go", ".sql", ".r", ".jl", ".lua", ".txt"}


@dataclass(frozen=True)
class Intent:
    kind: str
    path: str
    line: int
    dataset: str
    target: str
    model: str = "logreg"
    seed: int = 42
    features: tuple[str, ...] | None = None


def _parse_directive(path: str, lineno: int, body: str) -> Intent:
    tokens = body.split()
    if not tokens:
        raise DirectiveError(path, lineno, "empty directive")
    kind = tokens[0]
    if kind not in INTENT_KINDS:
        raise DirectiveError(
            path, lineno, f"unknown intent kind {kind!r} (expected one of {', '.join(INTENT_KINDS)})"
        )
    values: dict[str, str] = {}
    for tok in tokens[1:]:
        m = _PAIR_RE.match(tok)
        if not m:
            raise DirectiveError(path, lineno, f"malformed key=value token {tok!r}")
        key, value = m.group(1), m.group(2)
        if key not in DIRECTIVE_KEYS:
            raise DirectiveError(
                path, lineno, f"unknown key {key!r} (allowed: {', '.join(DIRECTIVE_KEYS)})"
            )
        if key in values:
            raise DirectiveError(path, lineno, f"duplicate key {key!r}")
        values[key] = value
    for required in ("dataset", "target"):
        if required not in values:
            raise DirectiveError(path, lineno, f"directive missing required key {required!r}")
    seed = 42
    if "seed" in values:
        try:
            seed = int(values["seed"])
        except ValueError:
            raise DirectiveError(path, lineno, f"seed must be an integer, got {values['seed']!r}") from None
    features = tuple(f for f in values["features"].split(",") if f) if "features" in values else None
    return Intent(
        kind=kind,
        path=path,
        line=lineno,
        dataset=values["dataset"],
        target=values["target"],
        model=values.get("model", "logreg"),
        seed=seed,
        features=features,
    )


def scan_source(paths: Iterable[Path | str]) -> list[Intent]:
    """Line-scan text files for mlops directives.

    Directories are walked for common source suffixes. Pure with respect
    to file content: same bytes, same intents.

    Raises:
        DirectiveError: a directive line is malformed (names file:line).
    """
    files: list[Path] = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*") if q.suffix in SOURCE_SUFFIXES and q.is_file()))
        else:
            files.append(p)
    intents: list[Intent] = []
    for f in files:
        text = f.read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = _DIRECTIVE_RE.match(line)
            if m:
                intents.append(_parse_directive(str(f), lineno, m.group(1)))
    return intents


class SynthProvider(Protocol):
    """Turns intents into pipeline specs; output must pass validate_graph."""

    name: str

    def synthesize(self, intent: Intent) -> PipelineSpec: ...


@dataclass
class RuleBasedProvider:
    """Deterministic template expansion; the default (and only bundled) provider."""

    name: str = "rule-based"

    def synthesize(self, intent: Intent) -> PipelineSpec:
        return synthesize_pipeline(intent)


def _pipeline_name(intent: Intent) -> str:
    stem = re.sub(r"[^A-Za-z0-9_.-]", "-", Path(intent.dataset).stem) or "data"
    return f"{intent.kind}-{stem}-l{intent.line}"


def synthesize_pipeline(intent: Intent) -> PipelineSpec:
    """Expand one intent into its pipeline template.

    Raises:
        SmartMLOpsError: unknown model kind (message lists builtin kinds).
    """
    if intent.model not in BUILTIN_MODEL_KINDS:
        raise SmartMLOpsError(
            f"unknown model kind {intent.model!r}; builtin kinds: {', '.join(BUILTIN_MODEL_KINDS)}"
        )
    stem = re.sub(r"[^A-Za-z0-9_.-]", "-", Path(intent.dataset).stem) or "data"
    features = list(intent.features) if intent.features else None

    if intent.kind == "evaluate-model":
        nodes = [
            StepNode("ingest", "ingest", params={"path": intent.dataset, "seed": intent.seed},
                     outputs={"dataset": "raw.csv"}),
            StepNode("validate", "validate",
                     params={"dataset_id": stem, "target": intent.target,
                             **({"features": features} if features else {})},
                     inputs={"dataset": "raw.csv"}, outputs={"report": "validation.json"}),
            StepNode("features", "features",
                     params={"target": intent.target, **({"features": features} if features else {})},
                     inputs={"dataset": "raw.csv"}, outputs={"features": "features.csv"}),
            StepNode("evaluate", "evaluate",
                     params={"target": intent.target, "model_name": stem, "seed": intent.seed},
                     inputs={"features": "features.csv"}, outputs={"metrics": "eval_metrics.json"}),
        ]
        edges = [("ingest", "validate"), ("validate", "features"), ("features", "evaluate")]
        spec = PipelineSpec(name=_pipeline_name(intent), nodes=nodes, edges=edges)
        problems = validate_graph(spec)
        if problems:
            raise SmartMLOpsError(f"synthesized pipeline is invalid: {problems}")
        return spec

    nodes = [
        StepNode("ingest", "ingest", params={"path": intent.dataset, "seed": intent.seed},
                 outputs={"dataset": "raw.csv"}),
        StepNode("validate", "validate",
                 params={"dataset_id": stem, "fit_reference": True, "target": intent.target,
                         **({"features": features} if features else {})},
                 inputs={"dataset": "raw.csv"}, outputs={"report": "validation.json"}),
        StepNode("features", "features",
                 params={"target": intent.target, **({"features": features} if features else {})},
                 inputs={"dataset": "raw.csv"}, outputs={"features": "features.csv"}),
        StepNode("train", "train",
                 params={"target": intent.target, "model": intent.model, "seed": intent.seed},
                 inputs={"features": "features.csv"},
                 outputs={"model": "model.json", "metrics": "train_metrics.json"}),
        StepNode("evaluate", "evaluate",
                 params={"target": intent.target, "seed": intent.seed},
                 inputs={"model": "model.json", "features": "features.csv"},
                 outputs={"metrics": "eval_metrics.json"}),
        StepNode("register", "register",
                 params={"model_name": stem, "dataset_id": stem},
                 inputs={"model": "model.json", "metrics": "eval_metrics.json"},
                 outputs={"registration": "registration.json"}),
        StepNode("deploy_gate", "deploy_gate",
                 params={"metric": "accuracy", "min_value": 0.0},
                 inputs={"registration": "registration.json", "metrics": "eval_metrics.json"},
                 outputs={"decision": "gate_decision.json"}),
    ]
    edges = [
        ("ingest", "validate"),
        ("validate", "features"),
        ("features", "train"),
        ("train", "evaluate"),
        ("evaluate", "register"),
        ("register", "deploy_gate"),
        ("features", "evaluate"),
    ]
    spec = PipelineSpec(name=_pipeline_name(intent), nodes=nodes, edges=edges)
    problems = validate_graph(spec)
    if problems:  # template bug, not user error; fail loudly
        raise SmartMLOpsError(f"synthesized pipeline is invalid: {problems}")
    return spec


def render_yaml(spec: PipelineSpec) -> str:
    """Deterministic YAML (sorted keys) for a pipeline spec."""
    return yaml.safe_dump(spec.to_dict(), sort_keys=True, default_flow_style=False)


def _expect(condition: bool, where: str, message: str) -> None:
    if not condition:
        raise PipelineFormatError(f"{where}: {message}")


def parse_yaml(text: str) -> PipelineSpec:
    """Parse pipeline YAML into a spec without graph validation.

    Parsing and validation are separate stages: a cyclic pipeline parses
    fine here and is rejected by validate_graph.

    Raises:
        PipelineFormatError: YAML syntax error (with line/column) or a
            schema violation (named by field path).
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise PipelineFormatError(f"YAML syntax error{where}: {getattr(e, 'problem', e)}") from e

    _expect(isinstance(doc, dict), "$", "top level must be a mapping")
    _expect(isinstance(doc.get("name"), str) and doc["name"], "name", "required string")
    raw_nodes = doc.get("nodes", [])
    _expect(isinstance(raw_nodes, list), "nodes", "must be a list")

    kinds = registered_kinds()
    nodes: list[StepNode] = []
    for i, rn in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        _expect(isinstance(rn, dict), where, "must be a mapping")
        _expect(isinstance(rn.get("id"), str) and rn["id"], f"{where}.id", "required string")
        kind = rn.get("kind")
        _expect(isinstance(kind, str) and bool(kind), f"{where}.kind", "required string")
        _expect(
            kind in kinds,
            f"{where}.kind",
            f"unknown node kind {kind!r} on node {rn['id']!r}",
        )
        params = rn.get("params") or {}
        _expect(isinstance(params, dict), f"{where}.params", "must be a mapping")
        inputs = rn.get("inputs") or {}
        outputs = rn.get("outputs") or {}
        for label, m in (("inputs", inputs), ("outputs", outputs)):
            _expect(isinstance(m, dict), f"{where}.{label}", "must be a mapping")
            for k, v in m.items():
                _expect(
                    isinstance(k, str) and isinstance(v, str) and bool(v),
                    f"{where}.{label}.{k}",
                    "artifact references must be nonempty strings",
                )
        command = rn.get("command")
        _expect(command is None or isinstance(command, str), f"{where}.command", "must be a string")
        nodes.append(
            StepNode(id=rn["id"], kind=kind, params=dict(params),
                     inputs=dict(inputs), outputs=dict(outputs), command=command)
        )

    raw_edges = doc.get("edges", [])
    _expect(isinstance(raw_edges, list), "edges", "must be a list")
    edges: list[tuple[str, str]] = []
    for i, re_ in enumerate(raw_edges):
        where = f"edges[{i}]"
        _expect(isinstance(re_, dict), where, "must be a mapping with from/to")
        _expect(isinstance(re_.get("from"), str), f"{where}.from", "required string")
        _expect(isinstance(re_.get("to"), str), f"{where}.to", "required string")
        edges.append((re_["from"], re_["to"]))

    return PipelineSpec(name=doc["name"], nodes=nodes, edges=edges)


def load_pipeline(path: Path | str) -> PipelineSpec:
    return parse_yaml(Path(path).read_text(encoding="utf-8"))


def write_pipeline(spec: PipelineSpec, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_yaml(spec), encoding="utf-8")
