import numpy as np
import pytest

from protosed.cache import FeatureCache
from protosed.core.config import RunConfig, feature_hash, load_run_config
from protosed.core.errors import CheckpointError, FeatureCacheError
from protosed.dsp.features import FeatureStats
from protosed.network.mcs_net import init_params
from protosed.storage.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from protosed.storage.records import pack_array


@pytest.fixture
def saved(tmp_path, tiny_model):
    config = RunConfig(model=tiny_model)
    params = init_params(tiny_model, n_bins=16, seed=2)
    params.buffer("bl1.bn.running_mean")[:] = 0.25
    stats = FeatureStats(mean=[1.5, -2.0], std=[0.5, 3.0])
    path = save_checkpoint(tmp_path / "ckpt" / "best.mcsn", params, config, n_bins=16, best_val_acc=0.8, best_epoch=4, stats=stats)
    return path, params, config


class TestRecords:
    def test_little_endian_layout(self):
        assert pack_array(np.array([1.0])) == b"\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x80\x3f"


class TestCheckpoint:
    def test_roundtrip_is_exact(self, saved):
        path, params, config = saved
        checkpoint = load_checkpoint(path, expected_hash=feature_hash(config))
        state = params.state()
        assert list(checkpoint.state) == list(state)
        for name, value in state.items():
            assert checkpoint.state[name].dtype == np.float32
            np.testing.assert_array_equal(checkpoint.state[name], value)
        assert checkpoint.config.model == config.model
        assert checkpoint.n_bins == 16
        assert checkpoint.best_val_acc == 0.8
        assert checkpoint.best_epoch == 4
        assert checkpoint.stats == FeatureStats(mean=[1.5, -2.0], std=[0.5, 3.0])

    def test_reencode_is_byte_identical(self, saved):
        path, _, _ = saved
        data = path.read_bytes()
        assert encode_checkpoint(decode_checkpoint(data)) == data

    def test_truncated(self, saved):
        path, _, _ = saved
        data = path.read_bytes()
        for cut in (3, 20, len(data) // 2, len(data) - 1):
            with pytest.raises(CheckpointError):
                decode_checkpoint(data[:cut])

    def test_trailing_bytes(self, saved):
        path, _, _ = saved
        with pytest.raises(CheckpointError):
            decode_checkpoint(path.read_bytes() + b"\x00")

    def test_bad_magic(self, saved):
        path, _, _ = saved
        with pytest.raises(CheckpointError, match="magic"):
            decode_checkpoint(b"XXXXX" + path.read_bytes()[5:])

    def test_feature_hash_mismatch(self, saved):
        path, _, _ = saved
        other = feature_hash(load_run_config(overrides=["feature.n_mels=64"]))
        with pytest.raises(CheckpointError, match="--force"):
            load_checkpoint(path, expected_hash=other)
        assert load_checkpoint(path, expected_hash=other, force=True).n_bins == 16

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "none.mcsn")

    def test_state_loads_into_fresh_network(self, saved, tiny_model):
        path, params, _ = saved
        fresh = init_params(tiny_model, n_bins=16, seed=99)
        fresh.load_state(load_checkpoint(path).state)
        np.testing.assert_array_equal(fresh.buffer("bl1.bn.running_mean"), 0.25)
        np.testing.assert_array_equal(fresh["pl.fc.weight"].data, params["pl.fc.weight"].data)


class TestFeatureCache:
    HASH = "0123456789abcdef"

    def test_roundtrip(self, tmp_path, rng):
        cache = FeatureCache(tmp_path, self.HASH)
        values = rng.standard_normal((2, 7, 16)).astype(np.float32)
        assert cache.set("train/a/rec.wav", values)
        assert cache.exists("train/a/rec.wav")
        np.testing.assert_array_equal(cache.get("train/a/rec.wav"), values)
        assert cache.path_for("train/a/rec.wav").parent == tmp_path / self.HASH / "train" / "a"

    def test_missing_key(self, tmp_path):
        assert FeatureCache(tmp_path, self.HASH).get("nothing") is None

    def test_written_under_another_hash(self, tmp_path, rng):
        FeatureCache(tmp_path, self.HASH).set("rec", rng.standard_normal((2, 3, 4)))
        data = (tmp_path / self.HASH / "rec.psfd").read_bytes()
        with pytest.raises(FeatureCacheError, match="re-run extract"):
            FeatureCache(tmp_path, "fedcba9876543210").decode(data)

    def test_truncated(self, tmp_path, rng):
        cache = FeatureCache(tmp_path, self.HASH)
        cache.set("rec", rng.standard_normal((2, 3, 4)))
        path = cache.path_for("rec")
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(FeatureCacheError):
            cache.get("rec")

    def test_bad_hash_length(self, tmp_path):
        with pytest.raises(FeatureCacheError):
            FeatureCache(tmp_path, "short")

    def test_stats(self, tmp_path):
        cache = FeatureCache(tmp_path, self.HASH)
        assert cache.load_stats() is None
        stats = FeatureStats(mean=[0.1, 0.2], std=[1.0, 2.0])
        cache.save_stats(stats)
        assert cache.load_stats() == stats

    def test_corrupt_stats(self, tmp_path):
        cache = FeatureCache(tmp_path, self.HASH)
        cache.root.mkdir(parents=True)
        (cache.root / "stats.json").write_text("{not json")
        with pytest.raises(FeatureCacheError):
            cache.load_stats()
