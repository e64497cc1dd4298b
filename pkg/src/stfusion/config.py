"""Flat ``key=value`` configuration files.

Keys are dotted paths into :class:`Config` (``dsp.n_fft``, ``loss.beta``,
``synth.occupant.resp_amp`` ...).  Unknown keys are rejected so typos fail
loudly.  Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

from .dsp import DSPConfig
from .exceptions import ConfigError
from .losses import LossConfig, MixupConfig
from .models import ModelConfig
from .streaming import StreamConfig
from .synth import SynthConfig
from .training import SegmentTrainConfig, StreamTrainConfig

__all__ = [
    "Config",
    "CorpusConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "apply_overrides",
    "dump_synth_config",
    "load_synth_config",
]


@dataclass(frozen=True)
class CorpusConfig:
    n_traces: int = 40
    n_segments: int = 0  # 0 = every whole segment of the written traces
    segment_s: float = 30.0


@dataclass(frozen=True)
class Config:
    seed: int = 0
    checkpoint: Optional[str] = None
    dsp: DSPConfig = DSPConfig()
    model: ModelConfig = ModelConfig()
    train_seg: SegmentTrainConfig = SegmentTrainConfig()
    train_stream: StreamTrainConfig = StreamTrainConfig()
    loss: LossConfig = LossConfig()
    mixup: MixupConfig = MixupConfig()
    stream: StreamConfig = StreamConfig()
    synth: SynthConfig = SynthConfig()
    corpus: CorpusConfig = CorpusConfig()

    def synth_config(self) -> SynthConfig:
        return replace(self.synth, seed=self.seed)

    def validate(self) -> "Config":
        self.dsp.validate(self.synth.sample_rate_hz)
        self.stream.validate()
        self.synth.validate()
        return self


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key: str, raw: str, current):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(current).__name__}") from None
    if current is None or isinstance(current, str):
        return None if raw.lower() in ("", "none") else raw
    raise ConfigError(f"{key}: unsupported value type {type(current).__name__}")


def _configurable(obj):
    return {f.name: f for f in fields(obj) if f.metadata.get("config", True)}


def _set_path(obj, parts, key: str, raw: str):
    names = _configurable(obj)
    head = parts[0]
    if head not in names:
        raise ConfigError(f"unknown config key {key!r}")
    current = getattr(obj, head)
    if len(parts) == 1:
        if is_dataclass(current):
            raise ConfigError(f"config key {key!r} names a section, not a value")
        value = _convert(key, raw, current)
    else:
        if not is_dataclass(current):
            raise ConfigError(f"unknown config key {key!r}")
        value = _set_path(current, parts[1:], key, raw)
    try:
        return replace(obj, **{head: value})
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def apply_overrides(cfg: Config, overrides: Mapping[str, str]) -> Config:
    for key, raw in overrides.items():
        cfg = _set_path(cfg, key.split("."), key, str(raw))
    return cfg


def parse_config(text: str, base: Config = None) -> Config:
    cfg = base or Config()
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg = _set_path(cfg, key.split("."), key, raw)
    return cfg


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _flatten(obj, prefix=""):
    for name, f in _configurable(obj).items():
        value = getattr(obj, name)
        key = f"{prefix}{name}"
        if is_dataclass(value):
            yield from _flatten(value, key + ".")
        elif isinstance(value, tuple):
            yield key, ",".join(repr(float(v)) for v in value)
        elif isinstance(value, bool):
            yield key, "true" if value else "false"
        elif isinstance(value, float) or isinstance(f.default, float):
            # an int given for a float field still dumps as a float
            yield key, repr(float(value))
        elif value is None:
            yield key, "none"
        else:
            yield key, str(value)


def dump_config(cfg: Config) -> str:
    return "".join(f"{k}={v}\n" for k, v in _flatten(cfg))


def dump_synth_config(synth: SynthConfig) -> str:
    return "".join(f"synth.{k}={v}\n" for k, v in _flatten(synth))


def load_synth_config(path) -> SynthConfig:
    return load_config(path).synth
