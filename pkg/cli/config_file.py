"""
config_file.py
--------------
Run configuration file: `key = value` lines under section headers.

    [network]   NetworkConfig      [train]   TrainConfig
    [loss]      LossWeights        [skin]    SkinConfig
    [render]    RenderConfig       [scene]   SceneConfig

Values are JSON literals (numbers, lists, strings in quotes, null); bare words
are taken as strings. `--print-config` writes the merged configuration in the
same format, so its output can be fed back with `--config`.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from network.config import NetworkConfig
from rendering.config import RenderConfig
from skinning.config import SkinConfig
from training.losses import LossWeights
from training.optimizer import TrainConfig
from training.scene import SceneConfig
from utils.errors import ConfigError

Overrides = dict[str, dict[str, Any]]


SECTIONS: dict[str, type[BaseModel]] = {
    "network": NetworkConfig,
    "train": TrainConfig,
    "loss": LossWeights,
    "skin": SkinConfig,
    "render": RenderConfig,
    "scene": SceneConfig,
}


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = NetworkConfig()
    train: TrainConfig = TrainConfig()
    loss: LossWeights = LossWeights()
    skin: SkinConfig = SkinConfig()
    render: RenderConfig = RenderConfig()
    scene: SceneConfig = SceneConfig()
    # sections the config file or a flag actually set
    explicit: frozenset[str] = field(default_factory=frozenset)

    def to_text(self) -> str:
        blocks = []
        for section in SECTIONS:
            model: BaseModel = getattr(self, section)
            lines = [f"[{section}]"]
            lines += [f"{key} = {json.dumps(value)}" for key, value in model.model_dump(mode="json").items()]
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"


def _value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str, source: str = "<config>") -> Overrides:
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values: Overrides = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
        values[section] = {key: _value(raw) for key, raw in parser.items(section)}
    return values


def build_config(file_values: Overrides | None = None, overrides: Overrides | None = None) -> RunConfig:
    """File values first, command-line overrides on top; unknown keys are errors."""
    merged: Overrides = {name: {} for name in SECTIONS}
    for layer in (file_values or {}, overrides or {}):
        for section, values in layer.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
            merged[section].update({k: v for k, v in values.items() if v is not None})
    built: dict[str, Any] = {}
    for section, model in SECTIONS.items():
        try:
            built[section] = model(**merged[section])
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
            )
            raise ConfigError(f"[{section}] {problems}") from exc
    explicit = frozenset(s for s, values in merged.items() if values)
    return RunConfig(**built, explicit=explicit)


def load_config(path: str | Path | None = None, overrides: Overrides | None = None) -> RunConfig:
    file_values: Overrides = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        file_values = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    return build_config(file_values, overrides)
