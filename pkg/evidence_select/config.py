"""Experiment configuration: YAML files, defaults and environment settings."""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .constants import CONFIG_SCHEMA_VERSION, ENV_THREADS
from .diagnostics.suite import DiagnosticsConfig
from .errors import ConfigError
from .recovery import RecoveryConfig
from .synthbag import GenConfig
from .training import TrainConfig


SECTIONS = {
    "generate": GenConfig,
    "train": TrainConfig,
    "recovery": RecoveryConfig,
    "diagnostics": DiagnosticsConfig,
}


@dataclass
class ExperimentConfig:
    """Every section of an experiment file, each holding its defaults."""
    generate: GenConfig = field(default_factory=GenConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    schema_version: int = CONFIG_SCHEMA_VERSION

    def validate(self) -> None:
        self.generate.validate()
        self.train.validate()
        self.recovery.validate()
        self.diagnostics.validate()

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"schema_version": self.schema_version}
        for name in SECTIONS:
            data[name] = getattr(self, name).to_dict()
        return data


def _build_section(name: str, cls, values: Any):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError("must be a mapping", name)
    known = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError("unknown key", f"{name}.{key}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), name)


def from_dict(data: Optional[Dict[str, Any]]) -> ExperimentConfig:
    """Build a config from parsed YAML; missing keys take defaults.

    Raises:
        ConfigError: On unknown keys (named with their dotted path) or a schema mismatch
    """
    data = dict(data or {})
    version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported version {version!r}", "schema_version")
    for key in data:
        if key not in SECTIONS:
            raise ConfigError("unknown key", key)
    sections = {name: _build_section(name, cls, data.get(name)) for name, cls in SECTIONS.items()}
    return ExperimentConfig(schema_version=version, **sections)


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Load an experiment file; defaults when no path is given."""
    if path is None:
        return ExperimentConfig()
    config_file = Path(path)
    if not config_file.exists():
        raise ConfigError(f"{config_file} not found", "config")
    try:
        with open(config_file, "r") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{config_file}: {e}", "config")
    if not isinstance(data, dict):
        raise ConfigError(f"{config_file}: top level must be a mapping", "config")
    return from_dict(data)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    """Write the resolved config (defaults filled in) as YAML."""
    with open(path, "w") as f:
        yaml.dump(config.to_dict(), f, default_flow_style=False, sort_keys=False)


def override(section, **values):
    """Copy of a config section with the non-None values replaced."""
    changes = {k: v for k, v in values.items() if v is not None}
    return dataclasses.replace(section, **changes) if changes else section


def get_threads() -> int:
    """Evaluation parallelism from EVSEL_THREADS (default 1).

    Raises:
        ConfigError: If the variable is set but is not a positive integer
    """
    raw = os.environ.get(ENV_THREADS)
    if raw is None or raw.strip() == "":
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"must be a positive integer, got {raw!r}", ENV_THREADS)
    if threads < 1:
        raise ConfigError(f"must be a positive integer, got {raw!r}", ENV_THREADS)
    return threads
