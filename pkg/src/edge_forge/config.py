"""One JSON document configures a run: sections world, rss, neural, agent,
validation.  Unknown keys are rejected."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .agent import TrainConfig
from .errors import ConfigError
from .neural import NeuralConfig
from .rss import RssParams
from .sim_env import WorldConfig
from .validation import ValidationConfig

SECTIONS = {
    "world": WorldConfig,
    "rss": RssParams,
    "neural": NeuralConfig,
    "agent": TrainConfig,
    "validation": ValidationConfig,
}


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    rss: RssParams = field(default_factory=RssParams)
    neural: NeuralConfig = field(default_factory=NeuralConfig)
    agent: TrainConfig = field(default_factory=TrainConfig)
    validation: ValidationConfig = field(default_factory=ValidationConfig)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return out


def _check_type(key: str, annotation: str, value: Any) -> None:
    if annotation == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif annotation == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif annotation == "str":
        ok = isinstance(value, str)
    else:
        ok = isinstance(value, (list, tuple))
    if not ok:
        raise ConfigError(f"{key}: expected {annotation}, got {type(value).__name__} {value!r}")


def build_section(name: str, values: dict[str, Any]):
    cls = SECTIONS[name]
    if not isinstance(values, dict):
        raise ConfigError(f"{name}: section must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key '{name}.{key}'")
        _check_type(f"{name}.{key}", str(known[key].type), value)
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def from_dict(doc: dict[str, Any]) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    # A run manifest carries its configuration under "config".
    if "config" in doc and isinstance(doc["config"], dict) and "manifest_version" in doc:
        doc = doc["config"]
    for key in doc:
        if key not in SECTIONS:
            raise ConfigError(f"unknown config section '{key}'")
    return RunConfig(**{name: build_section(name, doc.get(name, {})) for name in SECTIONS})


def read_document(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def apply_overrides(doc: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    doc = json.loads(json.dumps(doc))
    if "config" in doc and "manifest_version" in doc:
        doc = doc["config"]
    for item in overrides:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override '{item}' must look like section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section '{section}' in override '{item}'")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc.setdefault(section, {})[name] = value
    return doc


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    doc = read_document(path) if path is not None else {}
    return from_dict(apply_overrides(doc, overrides))


def load_world_config(path: str | Path) -> WorldConfig:
    """Read a bare ``world`` section document."""
    return build_section("world", read_document(path))
