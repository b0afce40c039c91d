"""Run configuration.

Every analysis constant lives here. A config file is JSON, either nested
(``{"dsp": {"window_ms": 32}}``) or flat with dotted keys
(``{"dsp.window_ms": 32}``); command-line ``--set key=value`` pairs are
applied on top. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from msdclass.errors import ConfigError


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 16000
    window_ms: float = 32.0
    hop_ms: float = 10.0
    nfft: int = 512
    resample_kaiser_beta: float = 8.0
    # voicing
    f0_min: float = 50.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45
    voicing_energy_ratio: float = 0.02
    # formants
    preemphasis: float = 0.97
    lpc_order: int = 18
    formant_max_bandwidth: float = 400.0
    formant_min_hz: float = 90.0
    formant_max_hz: float = 5500.0
    # loudness / LTAS
    loudness_smooth_ms: float = 100.0
    loudness_floor_db: float = -80.0
    peak_prominence_db: float = 1.2
    ltas_gate_db: float = -60.0
    ltas_floor_db: float = -120.0
    # chi fitting
    chi_floor: float = 1e-12
    chi_k_min: float = 0.05
    chi_k_max: float = 100.0
    chi_tol: float = 1e-6
    chi_max_iter: int = 50

    @property
    def win_length(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))


@dataclass(frozen=True)
class FeatureConfig:
    region_merge_gap: int = 2
    region_min_frames: int = 3
    min_voiced_frames: int = 8
    min_fit_items: int = 8


@dataclass(frozen=True)
class SvmConfig:
    tol: float = 1e-3
    no_progress_epochs: int = 200
    class_weighting: str = "balanced"  # or "none"


@dataclass(frozen=True)
class ClassifierConfig:
    stage1_tie_to_patient: bool = True


@dataclass(frozen=True)
class EvaluationConfig:
    repetitions: int = 10
    outer_folds: int = 5
    inner_folds: int = 5
    seed: int = 0
    grid_mode: str = "range"  # "range": log-spaced points; "endpoints": the two values only
    grid_points: int = 7
    c_min: float = 1e-2
    c_max: float = 1e4
    gamma_min: float = 1e-4
    gamma_max: float = 1e2
    n_features: tuple[int, ...] = (5, 10, 15, 20)
    schemes: tuple[str, ...] = ("hierarchical", "hierarchical-no-fs", "ovo", "ovr")


@dataclass(frozen=True)
class Config:
    dsp: DspConfig = field(default_factory=DspConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def flat(self) -> dict[str, Any]:
        """Effective configuration as a flat ``section.key -> value`` dict."""
        out = {}
        for section in dataclasses.fields(self):
            sub = getattr(self, section.name)
            for f in dataclasses.fields(sub):
                value = getattr(sub, f.name)
                out[f"{section.name}.{f.name}"] = list(value) if isinstance(value, tuple) else value
        return out

    def with_overrides(self, overrides: dict[str, Any]) -> Config:
        sections = {s.name: {} for s in dataclasses.fields(self)}
        for key, value in _flatten(overrides).items():
            section, _, name = key.partition(".")
            if section not in sections or not name:
                raise ConfigError(f"unknown config key {key!r}")
            sub = getattr(self, section)
            known = {f.name: f for f in dataclasses.fields(sub)}
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            sections[section][name] = _coerce(key, getattr(sub, name), value)
        return Config(**{
            name: dataclasses.replace(getattr(self, name), **changes)
            for name, changes in sections.items()
        })


def _flatten(d: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for key, value in d.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


def _coerce(key: str, default: Any, value: Any) -> Any:
    if isinstance(value, str) and not isinstance(default, (str, tuple)):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"cannot parse value {value!r} for {key}") from None
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, tuple):
            if isinstance(value, str):
                try:
                    value = json.loads(value)
                except json.JSONDecodeError:
                    value = [v.strip() for v in value.split(",") if v.strip()]
                if not isinstance(value, list):
                    value = [value]
            items = tuple(value)
            if default and isinstance(default[0], int):
                items = tuple(int(v) for v in items)
            return items
        if isinstance(default, str):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {key}") from None
    return value


def load_config(path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> Config:
    cfg = Config()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = cfg.with_overrides(data)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def parse_set_args(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out
