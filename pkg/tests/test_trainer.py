import numpy as np
import pandas as pd
import pytest

from protosed.agents import EpisodeSamplerAgent
from protosed.core.config import FeatureConfig, RunConfig, TrainerConfig, feature_hash
from protosed.core.errors import EpisodeError, InputError, TrainingError
from protosed.models import ClassPool, EpisodeCorpus, Segment, TrainState
from protosed.network import MCSNet
from protosed.services.dataset import dataset_service
from protosed.services.features import FeatureBank, feature_service
from protosed.services.trainer import trainer_service
from protosed.storage.checkpoint import load_checkpoint

from conftest import build_tone_dataset

FEATURES = FeatureConfig(n_mels=16)


def synthetic_data(seed: int = 0, classes: int = 2, positives: int = 6):
    """Corpus of evenly spaced positives plus random standardized features per file"""
    generator = np.random.default_rng(seed)
    pools, durations, features = {}, {}, {}
    for c in range(classes):
        name, file_id = f"class{c}", f"class{c}.wav"
        segments = [
            Segment(file_id=file_id, onset=1.0 + 2.0 * i, offset=1.3 + 2.0 * i, class_id=name)
            for i in range(positives)
        ]
        pools[name] = ClassPool(
            class_id=name, positives=segments, free=[(file_id, s.offset, s.offset + 1.7) for s in segments]
        )
        durations[file_id] = 2.0 * positives + 2.0
        frames = int(durations[file_id] * FEATURES.sample_rate / FEATURES.hop) + 1
        features[file_id] = generator.standard_normal((2, frames, 16)).astype(np.float32)
    return EpisodeCorpus(pools=pools, durations=durations), FeatureBank(features, FEATURES)


def fast_config(tiny_model, **trainer) -> RunConfig:
    settings = dict(
        n_way=2,
        k_shot=2,
        q_queries=2,
        val_n_way=2,
        val_k_shot=2,
        val_q_queries=2,
        val_episodes=2,
        episodes_per_epoch=2,
        max_epochs=2,
        crop_dur=0.1,
    )
    settings.update(trainer)
    return RunConfig(feature=FEATURES, model=tiny_model, trainer=TrainerConfig(**settings))


class TestTrainState:
    def test_step_decay(self):
        state = TrainState(base_lr=0.001, lr_decay=0.65, lr_step=10)
        assert state.lr_at(0) == pytest.approx(0.001)
        assert state.lr_at(9) == pytest.approx(0.001)
        assert state.lr_at(10) == pytest.approx(0.00065)
        assert state.lr_at(20) == pytest.approx(0.0004225)

    def test_early_stopping(self):
        state = TrainState(patience=10)
        accuracies = [0.5, 0.6] + [0.6] * 10
        stops = [state.observe(acc) for acc in accuracies]
        assert stops == [False] * 11 + [True]
        assert state.best_epoch == 1
        assert state.epoch == 12
        assert state.best_val_acc == 0.6


class TestEpisodeForward:
    def test_loss_and_gradients_are_finite(self, tiny_model, rng):
        corpus, bank = synthetic_data()
        net = MCSNet(tiny_model, n_bins=16)
        episode = EpisodeSamplerAgent.sample_episode(corpus, 2, 2, 2, rng, crop_dur=0.1)
        loss, accuracy = trainer_service.episode_forward(net, bank, episode, bank.frames_for(0.1), training=True)
        assert np.isfinite(loss.item())
        assert 0.0 <= accuracy <= 1.0
        loss.backward()
        for name, tensor in net.params.items():
            assert tensor.grad is not None and np.all(np.isfinite(tensor.grad)), name

    def test_crop_frames(self):
        _, bank = synthetic_data()
        assert bank.frames_for(0.1) == 9
        assert bank.frames_for(0.4) == 34


class TestTrain:
    def test_fast_run(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data()
        config = fast_config(tiny_model)
        result = trainer_service.train(config, corpus, bank, tmp_path / "run")

        assert result.checkpoint_path.is_file()
        assert result.log_path.is_file()
        assert result.epochs_run == 2
        log = pd.read_csv(result.log_path)
        assert list(log.columns) == ["epoch", "step", "loss", "val_acc", "lr"]
        assert log["epoch"].tolist() == [0, 1]
        assert log["step"].tolist() == [2, 4]
        assert log["lr"].tolist() == pytest.approx([0.001, 0.001])

        checkpoint = load_checkpoint(result.checkpoint_path, expected_hash=feature_hash(config))
        assert checkpoint.n_bins == 16
        assert checkpoint.best_epoch == result.best_epoch
        net = MCSNet(checkpoint.config.model, n_bins=16)
        net.params.load_state(checkpoint.state)

    def test_logged_learning_rates(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data()
        config = fast_config(tiny_model, episodes_per_epoch=1, val_episodes=1, max_epochs=21, patience=50)
        result = trainer_service.train(config, corpus, bank, tmp_path / "run")
        log = pd.read_csv(result.log_path, dtype={"lr": str})
        assert len(log) == 21
        assert log["lr"].iloc[[0, 9, 10, 20]].tolist() == ["0.001", "0.001", "0.00065", "0.0004225"]

    def test_runs_are_reproducible(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data()
        config = fast_config(tiny_model)
        first = trainer_service.train(config, corpus, bank, tmp_path / "a")
        second = trainer_service.train(config, corpus, bank, tmp_path / "b")
        assert first.log_path.read_text() == second.log_path.read_text()
        assert first.checkpoint_path.read_bytes() == second.checkpoint_path.read_bytes()

    def test_diverged_parameters(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data()
        net = MCSNet(tiny_model, n_bins=16)
        weight = net.params["pl.fc.weight"]
        weight.data = np.full_like(weight.data, np.nan)
        with pytest.raises(TrainingError):
            trainer_service.train(fast_config(tiny_model), corpus, bank, tmp_path, net=net)

    def test_crop_too_short_for_network(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data()
        with pytest.raises(InputError):
            trainer_service.train(fast_config(tiny_model, crop_dur=0.05), corpus, bank, tmp_path)

    def test_fewer_classes_than_ways(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data(classes=2)
        result = trainer_service.train(fast_config(tiny_model, n_way=5, max_epochs=1), corpus, bank, tmp_path)
        assert result.epochs_run == 1

    def test_no_qualifying_class(self, tiny_model, tmp_path):
        corpus, bank = synthetic_data(positives=3)
        with pytest.raises(EpisodeError):
            trainer_service.train(fast_config(tiny_model), corpus, bank, tmp_path)


@pytest.mark.slow
def test_learns_tone_classes(tone_dataset, tiny_model, tmp_path):
    cache = feature_service.cache_for(tmp_path / "cache", FEATURES)
    splits = {}
    for split in ("train", "val"):
        manifest = dataset_service.scan_dataset(tone_dataset[split], split)
        feature_service.extract(manifest, cache, FEATURES, workers=1)
        splits[split] = manifest
    stats = feature_service.compute_stats(splits["train"], cache)

    def load(split):
        manifest = splits[split]
        corpus = dataset_service.build_corpus(manifest, dataset_service.load_tables(manifest))
        return corpus, feature_service.load_bank(manifest, cache, FEATURES, stats)

    corpus, bank = load("train")
    val_corpus, val_bank = load("val")
    config = fast_config(
        tiny_model,
        n_way=3,
        k_shot=3,
        q_queries=3,
        val_n_way=3,
        val_k_shot=3,
        val_q_queries=3,
        val_episodes=5,
        episodes_per_epoch=10,
        max_epochs=30,
        patience=30,
        crop_dur=0.2,
    )
    result = trainer_service.train(config, corpus, bank, tmp_path / "run", val_corpus, val_bank, stats=stats)
    assert result.best_val_acc >= 0.9


@pytest.mark.slow
def test_three_way_five_shot_validation(tmp_path, tiny_model):
    dataset = build_tone_dataset(tmp_path / "data", events=12)
    cache = feature_service.cache_for(tmp_path / "cache", FEATURES)
    splits = {}
    for split in ("train", "val"):
        manifest = dataset_service.scan_dataset(dataset[split], split)
        feature_service.extract(manifest, cache, FEATURES, workers=1)
        corpus = dataset_service.build_corpus(manifest, dataset_service.load_tables(manifest))
        splits[split] = (manifest, corpus)
    stats = feature_service.compute_stats(splits["train"][0], cache)
    (train_manifest, corpus), (val_manifest, val_corpus) = splits["train"], splits["val"]
    bank = feature_service.load_bank(train_manifest, cache, FEATURES, stats)
    val_bank = feature_service.load_bank(val_manifest, cache, FEATURES, stats)

    config = fast_config(
        tiny_model,
        n_way=3,
        k_shot=5,
        q_queries=5,
        val_n_way=3,
        val_k_shot=5,
        val_q_queries=5,
        val_episodes=5,
        episodes_per_epoch=10,
        max_epochs=30,
        patience=30,
        crop_dur=0.2,
    )
    first = trainer_service.train(config, corpus, bank, tmp_path / "a", val_corpus, val_bank, stats=stats)
    assert first.best_val_acc >= 0.9
    second = trainer_service.train(config, corpus, bank, tmp_path / "b", val_corpus, val_bank, stats=stats)
    assert first.checkpoint_path.read_bytes() == second.checkpoint_path.read_bytes()
