"""JSON run configuration, validated against a schema before use.

Every section is optional and falls back to library defaults; unknown keys
anywhere are rejected. Example::

    {
      "seed": 7,
      "stft": {"fft_size": 512, "hop": 128, "window": "hann"},
      "frontend": {"name": "mvdr", "eps_rel": 1e-6},
      "augment": {"channel": {"mode": "freq_independent_slice", "c_min": 4, "c_max": 4}},
      "scene": {"n_mics": 8, "snr_db": 0},
      "simulate": {"n_bundles": 4}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .augment import MODES, ChannelAugmentPolicy, SpecAugmentPolicy
from .simroom import PRESETS, SceneConfig
from .spectral import StftConfig

__all__ = ["ConfigError", "SCHEMA", "RunConfig", "load_config", "parse_config", "config_hash"]


class ConfigError(ValueError):
    """Missing, unreadable or schema-invalid configuration."""


_num = {"type": "number"}
_int = {"type": "integer"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_xyz = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "sample_rate": {"type": "integer", "minimum": 1},
    "stft": _obj({
        "fft_size": {"type": "integer", "minimum": 2},
        "hop": {"type": "integer", "minimum": 1},
        "window": {"enum": ["hann", "sqrt-hann"]},
    }),
    "highpass_hz": {"type": ["number", "null"], "exclusiveMinimum": 0},
    "frontend": _obj({
        "name": {"enum": ["sf", "mvdr"]},
        "eps_rel": {"type": "number", "minimum": 0},
        "mask_floor": {"type": ["number", "null"], "minimum": 0, "maximum": 0.5},
        "reference": {"type": ["integer", "null"], "minimum": 0},
        "n_directions": {"type": "integer", "minimum": 1},
        "c_sound": {"type": "number", "exclusiveMinimum": 0},
    }),
    "features": _obj({
        "n_mels": {"type": "integer", "minimum": 1},
        "f_low": {"type": "number", "minimum": 0},
        "f_high": {"type": "number", "exclusiveMinimum": 0},
        "floor": {"type": "number", "exclusiveMinimum": 0},
    }),
    "augment": _obj({
        "channel": {"oneOf": [{"type": "null"}, _obj({
            "mode": {"enum": list(MODES)},
            "c_min": {"type": "integer", "minimum": 1},
            "c_max": {"type": "integer", "minimum": 1},
            "p_keep": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        }, required=["mode"])]},
        "spec": {"oneOf": [{"type": "null"}, _obj({
            "f_max": {"type": "integer", "minimum": 0},
            "m_f": {"type": "integer", "minimum": 0},
            "t_max": {"type": "integer", "minimum": 0},
            "m_t": {"type": "integer", "minimum": 0},
        })]},
    }),
    "scene": _obj({
        "room_dims": _xyz,
        "reflection_coeff": {"type": "number", "minimum": 0, "maximum": 1},
        "max_order": {"type": "integer", "minimum": 0},
        "rir_length": {"type": "integer", "minimum": 1},
        "c_sound": {"type": "number", "exclusiveMinimum": 0},
        "n_mics": {"type": "integer", "minimum": 1, "maximum": 64},
        "spacing_m": {"type": "number", "exclusiveMinimum": 0},
        "array_center": _xyz,
        "orientation_deg": _num,
        "n_source_positions": {"type": "integer", "minimum": 1},
        "source_distance": _pair,
        "source_azimuth": _pair,
        "duration_s": _pair,
        "snr_db": _num,
        "noise": {"enum": ["white", "pink"]},
        "gain_offset_db": {"type": "number", "minimum": 0},
        "self_noise_db": {"type": ["number", "null"]},
    }),
    "presets": {"type": "object", "additionalProperties": {
        "type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}},
    "simulate": _obj({"n_bundles": {"type": "integer", "minimum": 1}}),
    "sweep": _obj({
        "n_bundles": {"type": "integer", "minimum": 1},
        "frontends": {"type": "array", "items": {"enum": ["sf", "mvdr"]}},
        "presets": {"type": "array", "items": {"type": "string"}},
        "policies": {"type": "array", "items": {"oneOf": [{"type": "null"}, _obj({
            "mode": {"enum": list(MODES)},
            "c_min": {"type": "integer", "minimum": 1},
            "c_max": {"type": "integer", "minimum": 1},
            "p_keep": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        }, required=["mode"])]}},
        "timing": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
    }),
    "paths": _obj({
        "input": {"type": "string"},
        "output": {"type": "string"},
        "masks": {"type": "string"},
    }),
})


@dataclass
class RunConfig:
    seed: int = 0
    sample_rate: int = 16000
    stft: StftConfig = field(default_factory=StftConfig)
    highpass_hz: float | None = None
    frontend: dict = field(default_factory=lambda: {
        "name": "mvdr", "eps_rel": 1e-6, "mask_floor": None, "reference": None,
        "n_directions": 11, "c_sound": 343.0})
    features: dict = field(default_factory=lambda: {
        "n_mels": 80, "f_low": 20.0, "f_high": 7600.0, "floor": 1e-10})
    channel_augment: dict | None = None
    spec_augment: dict | None = None
    scene: SceneConfig = field(default_factory=SceneConfig)
    presets: dict = field(default_factory=lambda: dict(PRESETS))
    n_bundles: int = 4
    sweep: dict = field(default_factory=lambda: {
        "n_bundles": 20, "frontends": ["mvdr"], "presets": ["2", "4", "4S3", "16"],
        "policies": [None], "timing": False, "workers": 1})
    paths: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def channel_policy(self, seed: int | None = None) -> ChannelAugmentPolicy | None:
        if self.channel_augment is None:
            return None
        return ChannelAugmentPolicy(seed=self.seed if seed is None else seed, **self.channel_augment)

    def spec_policy(self, seed: int | None = None) -> SpecAugmentPolicy | None:
        if self.spec_augment is None:
            return None
        return SpecAugmentPolicy(seed=self.seed if seed is None else seed, **self.spec_augment)

    def sweep_policies(self) -> list:
        return [None if p is None else ChannelAugmentPolicy(seed=self.seed, **p)
                for p in self.sweep["policies"]]


def parse_config(obj: dict) -> RunConfig:
    """Validate a decoded JSON object and build a :class:`RunConfig`."""
    try:
        jsonschema.validate(obj, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    cfg = RunConfig(raw=obj)
    cfg.seed = obj.get("seed", cfg.seed)
    cfg.sample_rate = obj.get("sample_rate", cfg.sample_rate)
    cfg.highpass_hz = obj.get("highpass_hz", cfg.highpass_hz)
    cfg.frontend.update(obj.get("frontend", {}))
    cfg.features.update(obj.get("features", {}))
    cfg.n_bundles = obj.get("simulate", {}).get("n_bundles", cfg.n_bundles)
    cfg.sweep.update(obj.get("sweep", {}))
    cfg.paths = dict(obj.get("paths", {}))
    if "presets" in obj:
        cfg.presets = {k: tuple(v) for k, v in obj["presets"].items()}
    aug = obj.get("augment", {})
    cfg.channel_augment = aug.get("channel")
    cfg.spec_augment = aug.get("spec")
    try:
        cfg.stft = StftConfig(**obj.get("stft", {}))
        scene = dict(obj.get("scene", {}))
        for key in ("room_dims", "array_center", "source_distance", "source_azimuth", "duration_s"):
            if key in scene:
                scene[key] = tuple(scene[key])
        cfg.scene = SceneConfig(**scene)
        cfg.channel_policy()
        cfg.spec_policy()
        cfg.sweep_policies()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    if cfg.scene.fs != cfg.sample_rate:
        cfg.scene = SceneConfig(**{**cfg.scene.__dict__, "fs": cfg.sample_rate})
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(obj)


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the config as given."""
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
