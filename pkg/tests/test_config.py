import os
import dataclasses
import logging

import pytest

from sgdvit.config import (
    Config,
    Variant,
    ConfigError,
    ModelConfig,
    TrainConfig,
    TrackerConfig,
    CONFIG_FORMAT,
    UnknownVariantError,
    default_config,
    split_densities,
)

EXAMPLE_CONFIG = os.path.join(os.path.dirname(__file__), "..", "config", "config.example.yaml")


class TestDefaults:
    def test_sections(self):
        config = default_config()

        assert config.model == ModelConfig()
        assert config.train == TrainConfig()
        assert config.get("model.grid") == 16
        assert config["sentry"]["enabled"] is False

    def test_defaults_come_from_the_dataclasses(self):
        config = Config(data={}, env={})

        assert config.model == ModelConfig()
        assert config.train == TrainConfig()
        assert config.tracker == TrackerConfig()
        assert config["model"]["backbone_channels"] == [48, 96, 192, 192]

    @pytest.mark.parametrize("section, cls", [("train", TrainConfig), ("tracker", TrackerConfig)])
    def test_format_covers_every_field(self, section, cls):
        assert set(CONFIG_FORMAT[section]) == {f.name for f in dataclasses.fields(cls)}

    def test_model_format_leaves_out_crop_sizes(self):
        names = {f.name for f in dataclasses.fields(ModelConfig)}

        assert names - set(CONFIG_FORMAT["model"]) == {"template_size", "search_size"}

    def test_derived_window_counts(self):
        model = ModelConfig()

        assert model.windows_per_side == 4
        assert model.n_windows == 16
        assert model.kind is Variant.SAT_DYN

    def test_example_file_validates(self, monkeypatch):
        monkeypatch.setenv("SGDVIT_SENTRY_DSN", "")
        monkeypatch.delenv("SGDVIT_SEED", raising=False)

        config = Config(EXAMPLE_CONFIG)

        assert config.model.variant == "SAT_DYN"
        assert config.get("paths.checkpoint") == "out/checkpoint.sgd"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="config file is missing"):
            Config(str(tmp_path / "config.yaml"))


class TestOverrides:
    def test_dump_and_load(self):
        config = Config(data={"model": {"grid": 8, "window": 2}}, env={})

        assert Config.loads(config.dump(), env={}) == config

    def test_cli_overrides(self):
        config = Config(
            data={}, overrides=["model.channels=32", "train.lr=0.5", "model.variant=sat"], env={}
        )

        assert config.model.channels == 32
        assert config.train.lr == 0.5
        assert config.model.variant == "SAT"

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            Config(data={}, overrides=["model.channels"], env={})

    def test_seed_from_environment(self, caplog):
        with caplog.at_level(logging.INFO):
            config = Config(data={"train": {"seed": 1}}, env={"SGDVIT_SEED": "42"})

        assert config.train.seed == 42
        assert "SGDVIT_SEED" in caplog.text

    def test_env_tag(self, monkeypatch):
        monkeypatch.setenv("TEST_SENTRY_DSN", "https://key@example.invalid/1")

        config = Config.loads("sentry:\n  dsn: !env TEST_SENTRY_DSN\n", env={})

        assert config.get("sentry.dsn") == "https://key@example.invalid/1"

    def test_env_tag_missing_variable(self, monkeypatch, caplog):
        monkeypatch.delenv("TEST_SENTRY_DSN", raising=False)

        config = Config.loads("sentry:\n  dsn: !env TEST_SENTRY_DSN\n", env={})

        assert config.get("sentry.dsn") == ""
        assert "TEST_SENTRY_DSN" in caplog.text


class TestValidation:
    @pytest.mark.parametrize(
        "section, values, key",
        [
            ("model", {"theta": 1.5}, "model.theta"),
            ("model", {"tau": 0}, "model.tau"),
            ("model", {"channels": 30}, "model.channels"),
            ("model", {"grid": 18}, "model.grid"),
            ("model", {"window": 3, "grid": 15}, "model.window"),
            ("model", {"backbone_channels": [8, 8]}, "model.backbone_channels"),
            ("train", {"momentum": 1.0}, "train.momentum"),
            ("train", {"schedule": "cosine"}, "train.schedule"),
            ("tracker", {"penalty": -0.1}, "tracker.penalty"),
        ],
    )
    def test_ranges(self, section, values, key):
        with pytest.raises(ConfigError) as info:
            Config(data={section: values}, env={})

        assert info.value.path == key

    def test_unknown_variant(self):
        with pytest.raises(UnknownVariantError):
            Config(data={"model": {"variant": "SAT_FAST"}}, env={})

    def test_type_errors(self):
        with pytest.raises(ConfigError, match="model.positional_encoding"):
            Config(data={"model": {"positional_encoding": "yes"}}, env={})

        with pytest.raises(ConfigError, match="train.iterations"):
            Config(data={"train": {"iterations": 2.5}}, env={})

    @pytest.mark.parametrize("key", ["train.iterations", "train.lr", "model.channels", "paths.output"])
    def test_booleans_are_rejected(self, key):
        with pytest.raises(ConfigError, match="got a boolean") as info:
            Config(data={}, overrides=[f"{key}=true"], env={})

        assert info.value.path == key

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError):
            Config(data={"model": 3}, env={})

    def test_unknown_keys_warn(self, caplog):
        config = Config(data={"model": {"depth": 12}}, env={})

        assert "Unknown config key: model.depth" in caplog.text
        with pytest.raises(KeyError):
            config.get("model.depth")

    def test_variant_parse(self):
        assert Variant.parse("sit") is Variant.SIT
        assert Variant.parse(Variant.SAT) is Variant.SAT

        with pytest.raises(UnknownVariantError):
            Variant.parse("dyn")


class TestDensities:
    def test_split(self):
        assert split_densities("0, 0.25,1") == [0.0, 0.25, 1.0]

    @pytest.mark.parametrize("text", ["0,abc", "0.5,1.5"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            split_densities(text)
