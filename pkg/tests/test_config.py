from pathlib import Path

import pytest

from protosed.core.config import (
    DEFAULT_CACHE_DIR,
    RunConfig,
    feature_hash,
    load_run_config,
    parse_config_text,
    resolve_cache_dir,
)
from protosed.core.errors import ConfigError


class TestDefaults:
    def test_reference_values(self):
        config = RunConfig()
        assert config.feature.window_len == 1024
        assert config.feature.hop == 256
        assert config.feature.n_mels == 128
        assert config.trainer.lr == 0.001
        assert config.trainer.n_way == 5
        assert config.detector.n_shots == 5
        assert len(config.detector.alpha_grid) * len(config.detector.threshold_grid) == 180
        assert config.evaluator.e_max == 100.0
        assert config.model.se_placement == [2, 3]

    def test_all_keys_default(self):
        config = load_run_config()
        assert set(config.provenance.values()) == {"default"}


class TestParsing:
    def test_comments_and_blank_lines(self):
        entries = parse_config_text("# header\n\ntrainer.lr = 0.01  # faster\nseed=3\n")
        assert entries == {"trainer.lr": "0.01", "seed": "3"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("seed = 1\ntrainer.lr 0.1\n", "run.cfg")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="trainer.learning_rate"):
            load_run_config(overrides=["trainer.learning_rate=0.1"])

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="trainer.lr"):
            load_run_config(overrides=["trainer.lr=fast"])

    def test_cross_field_validation(self):
        with pytest.raises(ConfigError):
            load_run_config(overrides=["detector.alpha_grid=0.5,2.5"])
        with pytest.raises(ConfigError):
            load_run_config(overrides=["model.base_channels=10", "model.reduction_rate=4"])

    def test_lists(self):
        config = load_run_config(overrides=["detector.alpha_grid=0.2, 0.4", "model.se_placement=1,3"])
        assert config.detector.alpha_grid == [0.2, 0.4]
        assert config.model.se_placement == [1, 3]

    def test_override_without_equals(self):
        with pytest.raises(ConfigError):
            load_run_config(overrides=["trainer.lr"])


class TestPrecedence:
    def test_file_then_set_then_flags(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("trainer.lr = 0.01\ntrainer.k_shot = 3\nseed = 5\n")
        config = load_run_config(str(path), ["trainer.k_shot=4", "seed=6"], {"seed": 7, "data.workers": None})
        assert config.trainer.lr == 0.01
        assert config.trainer.k_shot == 4
        assert config.seed == 7
        assert config.provenance["trainer.lr"] == "file"
        assert config.provenance["trainer.k_shot"] == "flag"
        assert config.provenance["data.workers"] == "default"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(str(tmp_path / "absent.cfg"))

    def test_text_roundtrip(self):
        config = load_run_config(overrides=["trainer.lr=0.002", "feature.fmax=8000", "data.allow_partial=true"])
        again = RunConfig.from_flat(parse_config_text(config.to_text()))
        assert again.model_dump() == config.model_dump()


class TestFeatureHash:
    def test_stable_and_feature_only(self):
        base = feature_hash(RunConfig())
        assert len(base) == 16
        assert feature_hash(load_run_config(overrides=["trainer.lr=0.5"])) == base
        assert feature_hash(load_run_config(overrides=["feature.n_mels=64"])) != base

    def test_resample_flag_keeps_the_hash(self):
        base = feature_hash(RunConfig())
        assert feature_hash(load_run_config(overrides=["feature.resample=true"])) == base
        assert feature_hash(load_run_config(flags={"feature.resample": True})) == base

    def test_same_for_section_and_run(self):
        config = RunConfig()
        assert feature_hash(config) == feature_hash(config.feature)


class TestCacheDir:
    def test_precedence(self, monkeypatch):
        monkeypatch.delenv("PROTOSED_CACHE_DIR", raising=False)
        monkeypatch.chdir(Path(__file__).parent)
        config = RunConfig()
        assert resolve_cache_dir(config) == Path(DEFAULT_CACHE_DIR)

        monkeypatch.setenv("PROTOSED_CACHE_DIR", "/tmp/from-env")
        assert resolve_cache_dir(config) == Path("/tmp/from-env")

        from_config = load_run_config(overrides=["data.cache_dir=/tmp/from-config"])
        assert resolve_cache_dir(from_config) == Path("/tmp/from-config")
        assert resolve_cache_dir(from_config, "/tmp/from-flag") == Path("/tmp/from-flag")
