"""Experiment configuration: TOML loading, strict key checking, overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .env import Objective
from .llm import MockParams, ProposerConfig

METHODS = ("dynamic", "passive", "none", "brute_force")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    objective: str = "EE"
    n_cells: int = 3
    p_max: float = 10.0
    p_circuit: float = 1.0
    noise_power: float = 1.0
    n_agents: int = 5
    n_iterations: int = 500
    actions_per_step: int = 5
    n_init: int = 5
    icl_k: int = 10
    policies: tuple = METHODS
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    channel_seed: int = 0
    run_seeds: tuple = tuple(range(10))
    grid_points: int = 101
    out_dir: str = "runs"

    def __post_init__(self):
        if self.objective not in (Objective.SE.value, Objective.EE.value):
            raise ConfigError(f"objective must be 'SE' or 'EE', got {self.objective!r}")
        for name in ("n_cells", "n_agents", "n_iterations", "actions_per_step",
                     "n_init", "icl_k", "grid_points"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < self._min(name):
                raise ConfigError(f"{name} must be an integer >= {self._min(name)}, got {v!r}")
        for name in ("p_max", "p_circuit", "noise_power"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or v < 0 or (name != "p_circuit" and v <= 0):
                raise ConfigError(f"{name} out of range: {v!r}")
        if not self.policies:
            raise ConfigError("policies must name at least one method")
        for p in self.policies:
            if p not in METHODS:
                raise ConfigError(f"unknown policy {p!r}; choose from {METHODS}")
        if not self.run_seeds:
            raise ConfigError("run_seeds must be non-empty")
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "run_seeds", tuple(int(s) for s in self.run_seeds))

    @staticmethod
    def _min(name: str) -> int:
        # n_iterations = 0 is a legal degenerate run (init only)
        return 0 if name == "n_iterations" else 1


def config_to_dict(config: ExperimentConfig) -> dict:
    """Nested plain-data form of a config; mirrors the TOML file layout."""
    doc = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "proposer":
            prop = {
                "kind": value.kind,
                "model_name": value.model_name,
                "endpoint_url": value.endpoint_url,
                "temperature": value.temperature,
                "request_timeout": value.request_timeout,
                "max_retries": value.max_retries,
                "mock": {
                    "exploit_sigma": value.mock.exploit_sigma,
                    "explore_prob": value.mock.explore_prob,
                    "halluc_prob": value.mock.halluc_prob,
                    "seed": value.mock.seed,
                },
            }
            doc["proposer"] = prop
        elif isinstance(value, tuple):
            doc[f.name] = list(value)
        else:
            doc[f.name] = value
    return doc


_TOP_KEYS = {f.name for f in fields(ExperimentConfig)}
_PROPOSER_KEYS = {"kind", "model_name", "endpoint_url", "temperature",
                  "request_timeout", "max_retries", "mock"}
_MOCK_KEYS = {"exploit_sigma", "explore_prob", "halluc_prob", "seed"}


def _check_keys(doc: dict):
    for key in doc:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    prop = doc.get("proposer", {})
    if not isinstance(prop, dict):
        raise ConfigError("proposer must be a table")
    for key in prop:
        if key not in _PROPOSER_KEYS:
            raise ConfigError(f"unknown config key 'proposer.{key}'")
    mock = prop.get("mock", {})
    if not isinstance(mock, dict):
        raise ConfigError("proposer.mock must be a table")
    for key in mock:
        if key not in _MOCK_KEYS:
            raise ConfigError(f"unknown config key 'proposer.mock.{key}'")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _build(doc: dict) -> ExperimentConfig:
    _check_keys(doc)
    doc = dict(doc)
    prop = doc.pop("proposer", None)
    proposer = None
    if prop is not None:
        prop = dict(prop)
        mock_doc = prop.pop("mock", None)
        try:
            mock = MockParams(**mock_doc) if mock_doc is not None else MockParams()
            proposer = ProposerConfig(mock=mock, **prop)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid proposer config: {exc}") from exc
    if "policies" in doc:
        doc["policies"] = tuple(doc["policies"])
    if "run_seeds" in doc:
        doc["run_seeds"] = tuple(doc["run_seeds"])
    kwargs = doc if proposer is None else {**doc, "proposer": proposer}
    return ExperimentConfig(**kwargs)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Load a TOML config file and apply overrides on top.

    Unknown keys are rejected; an empty file (or no file) yields all
    documented defaults.  ``overrides`` uses the same nested layout as the
    file and takes precedence over it.
    """
    doc: dict = {}
    if path is not None:
        raw = Path(path).read_bytes()
        try:
            doc = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        doc = _merge(doc, overrides)
    return _build(doc)
