"""Run configuration: flat ``section.key = value`` files plus ``--set`` overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any

from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    kind: str = "amplifier"
    lookback: int = 96
    horizon: int = 96
    sci_enabled: bool = True
    eat_enabled: bool = True
    sci_channel_hidden: int | None = None
    ffn_hidden: int | None = None
    ma_kernel: int | None = None
    leaky_slope: float = 0.01
    norm_eps: float = 1e-5


@dataclass
class DataSection:
    path: str = ""            # empty: generate the two-tone task
    protocol: str = "auto"    # auto | ett | standard
    split: str = "test"       # split scored by eval/spectrum


@dataclass
class TaskSection:
    periods: int = 40
    strong_amp: float = 10.0
    weak_amp: float = 0.1
    low_bin: float = 2
    high_bin: float = 30
    noise_std: float = 0.1
    placement: str = "low-high"


@dataclass
class ExperimentSection:
    variants: str = "full,wo-eat,wo-sci,baseline,baseline+eat"
    keep_fractions: str = "1.0,0.75,0.5,0.25"
    workers: int = 1


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataSection = field(default_factory=DataSection)
    task: TaskSection = field(default_factory=TaskSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    SECTIONS = ("model", "train", "data", "task", "experiment")

    def flat(self) -> dict[str, Any]:
        out = {}
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                out[f"{sec}.{f.name}"] = getattr(obj, f.name)
        return out

    def model_kwargs(self) -> dict:
        m = self.model
        return dict(sci_enabled=m.sci_enabled, eat_enabled=m.eat_enabled,
                    sci_channel_hidden=m.sci_channel_hidden, ffn_hidden=m.ffn_hidden,
                    ma_kernel=m.ma_kernel, leaky_slope=m.leaky_slope, norm_eps=m.norm_eps)

    def variants(self) -> list[str]:
        return [v.strip() for v in self.experiment.variants.split(",") if v.strip()]

    def keep_fractions(self) -> list[float]:
        try:
            return [float(v) for v in self.experiment.keep_fractions.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"experiment.keep_fractions: bad list "
                              f"{self.experiment.keep_fractions!r}") from None


def _coerce(key: str, raw: Any, annotation: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = "None" in annotation
    if optional and text.lower() in ("", "none", "null"):
        return None
    kind = annotation.replace("| None", "").strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {kind}") from None
    return text


def apply(cfg: RunConfig, values: dict[str, Any]) -> RunConfig:
    """Set dotted keys on ``cfg``; unknown keys and bad values raise ConfigError."""
    pending: dict[str, dict[str, Any]] = {}
    for key, raw in values.items():
        sec, _, name = key.partition(".")
        if sec not in RunConfig.SECTIONS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(cfg, sec)
        types = {f.name: str(f.type) for f in fields(obj)}
        if name not in types:
            raise ConfigError(f"unknown config key {key!r}; {sec} keys: {', '.join(types)}")
        pending.setdefault(sec, {})[name] = _coerce(key, raw, types[name])
    for sec, updates in pending.items():
        obj = getattr(cfg, sec)
        merged = {f.name: getattr(obj, f.name) for f in fields(obj)} | updates
        try:
            setattr(cfg, sec, type(obj)(**merged))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{sec}: {exc}") from None
    return cfg


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    values = {}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def load(path: str | None = None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides.

    A JSON run manifest is accepted as a config file, which reruns the run
    it describes.
    """
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        if text.lstrip().startswith("{"):
            try:
                values = json.loads(text)["config"]
            except (ValueError, KeyError, TypeError):
                raise ConfigError(f"{path}: not a run manifest") from None
        else:
            values = parse_text(text, path)
        apply(cfg, values)
    extra = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        extra[key.strip()] = value
    return apply(cfg, extra)
