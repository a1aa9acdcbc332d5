from __future__ import annotations

import io
import os
import copy
import enum
import logging

from typing import Any, Dict, List, Tuple, Mapping, Optional, Sequence
from dataclasses import asdict, dataclass, fields

from ruamel.yaml import YAML

log = logging.getLogger(__name__)

DEFAULT_FILENAME = "config.yaml"

CONFIG_FORMAT = {
    "model": {
        "channels": int,
        "heads": int,
        "grid": int,
        "window": int,
        "theta": float,
        "tau": float,
        "variant": str,
        "positional_encoding": bool,
        "ffn_mult": int,
        "cls_bias": float,
        "backbone_channels": list,
        "encoder_depth": int,
        "decoder_depth": int,
    },
    "train": {
        "lr": float,
        "lr_end": float,
        "schedule": str,
        "momentum": float,
        "iterations": int,
        "seed": int,
        "grad_clip": float,
        "jitter": float,
        "log_every": int,
        "frame_pairs": int,
    },
    "tracker": {
        "penalty": float,
        "scale_momentum": float,
        "min_size": float,
        "context": float,
    },
    "paths": {"checkpoint": str, "sequence": str, "output": str},
    "sentry": {"enabled": bool, "debug": bool, "dsn": str},
}

ENV_PREFIX = "SGDVIT_"

# env variable suffix -> dotted config key
ENV_OVERRIDES = {"SEED": "train.seed"}

_EMPTY = object()


class ConfigError(Exception):
    def __init__(self, path: str, msg: str):
        self.path = path

        super().__init__(msg)

    def __str__(self) -> str:
        return f"{self.path}: {self.args[0]}"


class UnknownVariantError(ConfigError):
    def __init__(self, variant: str):
        super().__init__(
            "model.variant",
            f"unknown variant {variant!r}, expected one of {[v.value for v in Variant]}",
        )


class Variant(enum.Enum):
    BASELINE = "BASELINE"
    SIT = "SIT"
    SAT = "SAT"
    SAT_DYN = "SAT_DYN"

    @classmethod
    def parse(cls, value: Any) -> Variant:
        if isinstance(value, Variant):
            return value

        try:
            return cls(str(value).upper())
        except ValueError:
            raise UnknownVariantError(str(value))


class EnvTag:
    yaml_tag = "!env"

    def from_yaml(constructor: EnvTag, node: Any) -> str:
        if node.value not in os.environ:
            log.warning(f"{node.value} env variable is missing, using ''")

        return os.environ.get(node.value, "")


def _yaml() -> YAML:
    yaml = YAML(typ="safe")
    yaml.register_class(EnvTag)
    yaml.default_flow_style = False

    return yaml


def _parse_scalar(text: str) -> Any:
    return YAML(typ="safe").load(text)


class Config:
    """
    Validated run configuration. Sections are read with `config["model"]` or dotted
    keys with `config.get("model.grid")`.
    """

    def __init__(
        self,
        path: Optional[str] = None,
        data: Optional[Mapping[str, Any]] = None,
        overrides: Sequence[str] = (),
        env: Optional[Mapping[str, str]] = None,
    ) -> None:
        if data is None:
            data = self._read_file(path) if path is not None else {}

        raw = copy.deepcopy(dict(data or {}))

        for override in overrides:
            key, value = self._split_override(override)
            self._assign(raw, key, _parse_scalar(value))

        for suffix, key in ENV_OVERRIDES.items():
            value = (os.environ if env is None else env).get(f"{ENV_PREFIX}{suffix}")
            if value is not None:
                log.info(f"{key} overridden by {ENV_PREFIX}{suffix}={value}")
                self._assign(raw, key, _parse_scalar(value))

        self._data = self.validate(raw)

    @staticmethod
    def _read_file(path: str) -> Any:
        if not os.path.exists(path):
            raise ConfigError(
                path,
                "config file is missing, example config is located at "
                f"{os.path.join('config', 'config.example.yaml')}",
            )

        with open(path, "r") as f:
            loaded = _yaml().load(f)

        if loaded is None:
            return {}

        if not isinstance(loaded, dict):
            raise ConfigError(path, "top level of the config must be a mapping")

        return loaded

    @staticmethod
    def _split_override(override: str) -> Tuple[str, str]:
        key, sep, value = override.partition("=")
        if not sep or not key:
            raise ConfigError(override, "override must look like section.key=value")

        return key.strip(), value.strip()

    @staticmethod
    def _assign(raw: Dict[str, Any], key: str, value: Any) -> None:
        *sections, leaf = key.split(".")

        node = raw
        for section in sections:
            node = node.setdefault(section, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"{section} is not a section")

        node[leaf] = value

    @staticmethod
    def validate(config: Any) -> Dict[str, Any]:
        """Fill defaults, coerce types and check ranges."""

        filled = Config._detect_missing(config, CONFIG_FORMAT, DEFAULTS)
        validated = Config._validate(filled, CONFIG_FORMAT)

        Config._check_ranges(validated)

        return validated

    @staticmethod
    def _detect_missing(cfg: Any, fmt: Any, defaults: Any, *path: str) -> Any:
        """Fill missing config keys from defaults."""

        # node
        if isinstance(fmt, dict):
            if cfg is _EMPTY:
                cfg = {}

            if not isinstance(cfg, dict):
                raise ConfigError(".".join(path), "expected a section")

            filled_node: Dict[str, Any] = {}
            for name, node in fmt.items():
                filled_node[name] = Config._detect_missing(
                    cfg.get(name, _EMPTY), node, (defaults or {}).get(name, _EMPTY), *path, name
                )

            for name, value in cfg.items():
                if name not in fmt:
                    filled_node[name] = value

            return filled_node

        # leaf
        if cfg is not _EMPTY:
            return cfg

        if defaults is not _EMPTY:
            return copy.deepcopy(defaults)

        raise ConfigError(".".join(path), "key is missing from config/env")

    @staticmethod
    def _validate(cfg: Any, fmt: Any, *path: str) -> Any:
        """Validate config using format."""

        # leaf
        if not isinstance(fmt, dict):
            if fmt is bool and not isinstance(cfg, bool):
                raise ConfigError(".".join(path), f"expected a boolean, got {cfg!r}")

            if fmt is not bool and isinstance(cfg, bool):
                raise ConfigError(".".join(path), f"expected {fmt.__name__}, got a boolean {cfg!r}")

            if fmt is int and isinstance(cfg, float) and not cfg.is_integer():
                raise ConfigError(".".join(path), f"expected an integer, got {cfg!r}")

            try:
                return fmt(cfg)
            except Exception as e:
                raise ConfigError(".".join(path), f"failed to convert {cfg!r} to {fmt.__name__}: {e}")

        # node
        validated_node = {}
        for name, node in cfg.items():
            if name not in fmt:
                log.warning(f"Unknown config key: {'.'.join([*path, name])}")

                continue

            validated_node[name] = Config._validate(node, fmt[name], *path, name)

        return validated_node

    @staticmethod
    def _check_ranges(cfg: Dict[str, Any]) -> None:
        model, train, tracker = cfg["model"], cfg["train"], cfg["tracker"]

        def check(ok: bool, key: str, msg: str) -> None:
            if not ok:
                raise ConfigError(key, msg)

        model["variant"] = Variant.parse(model["variant"]).value

        check(0.0 <= model["theta"] <= 1.0, "model.theta", "must be in [0, 1]")
        check(model["tau"] > 0, "model.tau", "must be > 0")
        check(model["channels"] > 0, "model.channels", "must be > 0")
        check(model["heads"] > 0, "model.heads", "must be > 0")
        check(
            model["channels"] % model["heads"] == 0,
            "model.channels",
            f"{model['channels']} is not divisible by {model['heads']} heads",
        )
        check(
            model["channels"] % 4 == 0,
            "model.channels",
            "must be a multiple of 4 for the 2-D positional encoding",
        )
        check(model["channels"] >= 3, "model.channels", "adjust network needs >= 3 channels")
        check(model["window"] > 0 and model["window"] % 2 == 0, "model.window", "must be even")
        check(
            model["grid"] > 0 and model["grid"] % model["window"] == 0,
            "model.grid",
            f"{model['grid']} is not divisible by window {model['window']}",
        )
        check(model["ffn_mult"] > 0, "model.ffn_mult", "must be > 0")
        check(model["encoder_depth"] >= 1, "model.encoder_depth", "must be >= 1")
        check(model["decoder_depth"] >= 1, "model.decoder_depth", "must be >= 1")
        check(
            len(model["backbone_channels"]) == 4
            and all(isinstance(c, int) and c > 0 for c in model["backbone_channels"]),
            "model.backbone_channels",
            "expected 4 positive channel counts for conv1..conv4",
        )

        check(train["lr"] >= 0, "train.lr", "must be >= 0")
        check(train["lr_end"] >= 0, "train.lr_end", "must be >= 0")
        check(train["schedule"] in ("constant", "log"), "train.schedule", "constant or log")
        check(0.0 <= train["momentum"] < 1.0, "train.momentum", "must be in [0, 1)")
        check(train["iterations"] >= 0, "train.iterations", "must be >= 0")
        check(train["grad_clip"] >= 0, "train.grad_clip", "must be >= 0, 0 disables")
        check(train["jitter"] >= 0, "train.jitter", "must be >= 0")
        check(train["log_every"] > 0, "train.log_every", "must be > 0")
        check(train["frame_pairs"] > 0, "train.frame_pairs", "must be > 0")

        check(0.0 <= tracker["penalty"] <= 1.0, "tracker.penalty", "must be in [0, 1]")
        check(
            0.0 <= tracker["scale_momentum"] <= 1.0,
            "tracker.scale_momentum",
            "must be in [0, 1]",
        )
        check(tracker["min_size"] > 0, "tracker.min_size", "must be > 0")
        check(tracker["context"] >= 0, "tracker.context", "must be >= 0")

    def __getitem__(self, key: str) -> Any:
        return self._data[key]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Config) and self._data == other._data

    def get(self, key: str) -> Any:
        node: Any = self._data
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                raise KeyError(key)

            node = node[part]

        return node

    def as_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._data)

    def dump(self) -> str:
        stream = io.StringIO()
        _yaml().dump(self.as_dict(), stream)

        return stream.getvalue()

    @classmethod
    def loads(cls, text: str, env: Optional[Mapping[str, str]] = None) -> Config:
        return cls(data=_yaml().load(text) or {}, env=env)

    @property
    def model(self) -> ModelConfig:
        return ModelConfig.from_dict(self._data["model"])

    @property
    def train(self) -> TrainConfig:
        return TrainConfig(**self._data["train"])

    @property
    def tracker(self) -> TrackerConfig:
        return TrackerConfig(**self._data["tracker"])


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 96
    heads: int = 4
    grid: int = 16
    window: int = 4
    theta: float = 0.5
    tau: float = 1.0
    variant: str = "SAT_DYN"
    positional_encoding: bool = True
    ffn_mult: int = 4
    cls_bias: float = 0.0
    backbone_channels: Tuple[int, ...] = (48, 96, 192, 192)
    encoder_depth: int = 1
    decoder_depth: int = 1

    template_size: int = 127
    search_size: int = 287

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in data.items() if k in known}

        if "backbone_channels" in values:
            values["backbone_channels"] = tuple(values["backbone_channels"])

        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["backbone_channels"] = list(self.backbone_channels)

        return data

    @property
    def kind(self) -> Variant:
        return Variant.parse(self.variant)

    @property
    def windows_per_side(self) -> int:
        return self.grid // self.window

    @property
    def n_windows(self) -> int:
        return self.windows_per_side ** 2

    def replace(self, **changes: Any) -> ModelConfig:
        data = self.to_dict()
        data.update(changes)

        return ModelConfig.from_dict(data)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    lr_end: float = 0.0001
    schedule: str = "log"
    momentum: float = 0.9
    iterations: int = 200
    seed: int = 0
    grad_clip: float = 10.0
    jitter: float = 0.1
    log_every: int = 20
    frame_pairs: int = 1


@dataclass(frozen=True)
class TrackerConfig:
    penalty: float = 0.3
    scale_momentum: float = 0.7
    min_size: float = 4.0
    context: float = 0.5


# the dataclasses above hold the single copy of every model, train and tracker default
DEFAULTS: Dict[str, Any] = {
    "model": ModelConfig().to_dict(),
    "train": asdict(TrainConfig()),
    "tracker": asdict(TrackerConfig()),
    "paths": {"checkpoint": "checkpoint.sgd", "sequence": "", "output": "out"},
    "sentry": {"enabled": False, "debug": False, "dsn": ""},
}


def default_config() -> Config:
    return Config(data={}, env={})


def split_densities(text: str) -> List[float]:
    try:
        densities = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError("--densities", f"expected comma-separated numbers, got {text!r}")

    for d in densities:
        if not 0.0 <= d <= 1.0:
            raise ConfigError("--densities", f"density {d} outside [0, 1]")

    return densities
