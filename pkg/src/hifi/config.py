"""Run configuration files: INI-style sections of ``key=value`` lines.

Sections are ``[model]`` (HifiConfig fields except the data-derived ``d``),
``[train]`` (TrainConfig fields), ``[data]`` and ``[score]``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .model import ConfigError, HifiConfig, _coerce
from .train import TrainConfig


@dataclass
class DataOptions:
    clip: bool = True
    stride: int = 1
    format: str = "auto"


@dataclass
class ScoreOptions:
    deterministic: bool = False
    samples: int = 1
    eps_seed: int = 0


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(seed=0))
    data: DataOptions = field(default_factory=DataOptions)
    score: ScoreOptions = field(default_factory=ScoreOptions)

    def model_config(self, d: int) -> HifiConfig:
        values = {f.name: f.default for f in dataclasses.fields(HifiConfig) if f.name != "d"}
        values.update(self.model)
        return HifiConfig(d=d, **values).validate()


def _fields(cls) -> dict[str, Any]:
    return {f.name: f.type for f in dataclasses.fields(cls)}


def _build(cls, values: dict, section: str):
    types = _fields(cls)
    kwargs = {}
    for key, raw in values.items():
        if key not in types:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        t = types[key]
        if isinstance(raw, str) and raw.lower() in ("none", "") and "Optional" in str(t):
            kwargs[key] = None
        elif isinstance(raw, str) and "Optional[float]" in str(t):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = _coerce(raw, t)
    return kwargs


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep K and k_topk distinct
    cp.read_string(text)
    unknown = set(cp.sections()) - {"model", "train", "data", "score"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    model_types = {k: v for k, v in _fields(HifiConfig).items() if k != "d"}
    model = {}
    for key, raw in (cp["model"].items() if cp.has_section("model") else []):
        if key not in model_types:
            raise ConfigError(f"[model] unknown key {key!r}")
        model[key] = _coerce(raw, model_types[key])
    train_kw = _build(TrainConfig, dict(cp["train"]) if cp.has_section("train") else {}, "train")
    train_kw.setdefault("seed", 0)
    return RunConfig(
        model=model,
        train=TrainConfig(**train_kw),
        data=DataOptions(**_build(DataOptions, dict(cp["data"]) if cp.has_section("data") else {}, "data")),
        score=ScoreOptions(**_build(ScoreOptions, dict(cp["score"]) if cp.has_section("score") else {}, "score")),
    )


def load_config(path: Optional[str | Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


def format_config(model: HifiConfig | dict, train: TrainConfig, data: Optional[DataOptions] = None,
                  score: Optional[ScoreOptions] = None) -> str:
    model_items = model.to_dict() if isinstance(model, HifiConfig) else dict(model)
    sections = [("model", model_items), ("train", train.to_dict()),
                ("data", dataclasses.asdict(data or DataOptions())),
                ("score", dataclasses.asdict(score or ScoreOptions()))]
    lines = []
    for name, items in sections:
        lines.append(f"[{name}]")
        lines += [f"{k} = {_fmt(v)}" for k, v in items.items()]
        lines.append("")
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def default_config_text() -> str:
    """The shipped defaults, with the data-derived channel count left out."""
    model = {k: v for k, v in HifiConfig(d=1).to_dict().items() if k != "d"}
    return format_config(model, TrainConfig(seed=0))
