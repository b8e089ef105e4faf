"""Global engine configuration: store root, defaults, parallelism.

Precedence, lowest to highest: built-in defaults, config file (YAML or
TOML), the SMARTMLOPS_STORE environment variable (store root only),
command-line flags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .drift import DriftThresholds
from .errors import SmartMLOpsError
from .policy import PolicyConfig

STORE_ENV_VAR = "SMARTMLOPS_STORE"


@dataclass
class GlobalConfig:
    store_root: Path = Path("store")
    thresholds: DriftThresholds = field(default_factory=DriftThresholds)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    max_parallel: int = 4
    seed: int = 42

    def __post_init__(self):
        if self.max_parallel < 1:
            raise SmartMLOpsError("max_parallel must be >= 1")


def read_config_file(path: Path | str) -> dict:
    """Parse a YAML or TOML config file into a plain dict."""
    path = Path(path)
    if not path.is_file():
        raise SmartMLOpsError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:  # pragma: no cover - depends on interpreter
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = yaml.safe_load(text)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise SmartMLOpsError(f"{path}: config top level must be a mapping")
    return doc


def load_global_config(
    config_path: Path | str | None = None,
    store_flag: str | None = None,
    seed_flag: int | None = None,
    max_parallel_flag: int | None = None,
    env: dict | None = None,
) -> GlobalConfig:
    env = os.environ if env is None else env
    doc = read_config_file(config_path) if config_path else {}

    store = doc.get("store", "store")
    if env.get(STORE_ENV_VAR):
        store = env[STORE_ENV_VAR]
    if store_flag:
        store = store_flag

    thresholds = DriftThresholds(**doc.get("thresholds", {}))
    policy = PolicyConfig.from_dict(doc.get("policy", {}))

    max_parallel = int(doc.get("max_parallel", 4))
    if max_parallel_flag is not None:
        max_parallel = max_parallel_flag
    seed = int(doc.get("seed", 42))
    if seed_flag is not None:
        seed = seed_flag

    return GlobalConfig(
        store_root=Path(store),
        thresholds=thresholds,
        policy=policy,
        max_parallel=max_parallel,
        seed=seed,
    )
