"""
Episodic prototypical training with early stopping on validation accuracy
"""

from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel

from protosed.agents.episode_sampler import EpisodeSamplerAgent
from protosed.agents.prototypes import PrototypeAgent
from protosed.core.config import RunConfig
from protosed.core.errors import EpisodeError, InputError, TrainingError
from protosed.dsp.features import FeatureStats
from protosed.models.episode import Episode, EpisodeCorpus, TrainState
from protosed.network.mcs_net import MIN_FRAMES, MCSNet
from protosed.services.features import FeatureBank
from protosed.storage.checkpoint import save_checkpoint
from protosed.tensor import Adam, Tensor, no_grad

LOG_COLUMNS = ["epoch", "step", "loss", "val_acc", "lr"]
CHECKPOINT_NAME = "best.mcsn"
LOG_NAME = "train_log.csv"


class TrainResult(BaseModel):
    checkpoint_path: Path
    log_path: Path
    best_val_acc: float
    best_epoch: int
    epochs_run: int


class TrainerService:
    """Service for episodic training of the embedding network"""

    def episode_forward(
        self,
        net: MCSNet,
        bank: FeatureBank,
        episode: Episode,
        n_frames: int,
        training: bool,
        squared: bool = False,
    ) -> Tuple[Tensor, float]:
        """
        Loss and accuracy of one episode.

        Support and queries go through the network as one batch.
        """
        support = episode.support_segments()
        queries = episode.query_segments()
        batch = bank.batch(support + queries, n_frames)
        embeddings = net(batch, training=training)

        n_support = len(support)
        prototypes = PrototypeAgent.compute_prototypes(
            embeddings.take(np.arange(n_support)), episode.n_way, episode.k_shot
        )
        query_embeddings = embeddings.take(np.arange(n_support, n_support + len(queries)))
        distances = PrototypeAgent.pairwise_dist(query_embeddings, prototypes, squared=squared)
        return PrototypeAgent.episode_loss(distances, episode.query_targets())

    def _ways(self, corpus: EpisodeCorpus, wanted: int, k_shot: int, q_queries: int, label: str) -> int:
        available = len(EpisodeSamplerAgent.eligible_classes(corpus, k_shot, q_queries))
        if available == 0:
            raise EpisodeError(
                f"no {label} class has >= {k_shot + q_queries} positive segments and negative audio"
            )
        if available < wanted:
            logger.warning(f"Only {available} {label} classes qualify; using {available}-way episodes instead of {wanted}")
        return min(wanted, available)

    def validate(self, net: MCSNet, corpus: EpisodeCorpus, bank: FeatureBank, config: RunConfig) -> float:
        """Mean query accuracy over the fixed-seed validation episodes, eval mode"""
        trainer = config.trainer
        n_way = self._ways(corpus, trainer.val_n_way, trainer.val_k_shot, trainer.val_q_queries, "validation")
        n_frames = bank.frames_for(trainer.crop_dur)
        rng = np.random.default_rng(trainer.val_seed)
        accuracies = []
        with no_grad():
            for _ in range(trainer.val_episodes):
                episode = EpisodeSamplerAgent.sample_episode(
                    corpus, n_way, trainer.val_k_shot, trainer.val_q_queries, rng, crop_dur=trainer.crop_dur
                )
                _, accuracy = self.episode_forward(
                    net, bank, episode, n_frames, training=False, squared=trainer.distance == "squared"
                )
                accuracies.append(accuracy)
        return float(np.mean(accuracies))

    def _write_log(self, rows: List[dict], path: Path):
        pd.DataFrame(rows, columns=LOG_COLUMNS).to_csv(path, index=False, lineterminator="\n")

    def train(
        self,
        config: RunConfig,
        corpus: EpisodeCorpus,
        bank: FeatureBank,
        out_dir: Path,
        val_corpus: Optional[EpisodeCorpus] = None,
        val_bank: Optional[FeatureBank] = None,
        stats: Optional[FeatureStats] = None,
        net: Optional[MCSNet] = None,
    ) -> TrainResult:
        """
        Train until validation accuracy stalls for `patience` epochs or `max_epochs`

        Args:
            config: resolved run configuration
            corpus, bank: training episodes and their features
            out_dir: receives the best checkpoint and the training log
            val_corpus, val_bank: validation data (training data when absent)
            stats: feature standardization stored with the checkpoint
            net: network to train (fresh from `config.seed` when absent)

        Returns:
            TrainResult pointing at the best checkpoint
        """
        trainer = config.trainer
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_dir / CHECKPOINT_NAME
        log_path = out_dir / LOG_NAME

        if val_corpus is None or val_bank is None:
            logger.warning("No validation set given; validating on training data")
            val_corpus, val_bank = corpus, bank

        n_frames = bank.frames_for(trainer.crop_dur)
        if n_frames < MIN_FRAMES:
            raise InputError(f"crop_dur {trainer.crop_dur}s gives {n_frames} frames; the network needs {MIN_FRAMES}")
        n_way = self._ways(corpus, trainer.n_way, trainer.k_shot, trainer.q_queries, "training")

        net = net or MCSNet(config.model, n_bins=bank.n_bins, seed=config.seed)
        state = TrainState(
            base_lr=trainer.lr,
            lr_decay=trainer.lr_decay,
            lr_step=trainer.lr_step,
            patience=trainer.patience,
            seed=config.seed,
        )
        optimizer = Adam(net.params, lr=state.lr, beta1=trainer.adam_beta1, beta2=trainer.adam_beta2, eps=trainer.adam_eps)
        rng = np.random.default_rng(config.seed)
        squared = trainer.distance == "squared"
        rows: List[dict] = []

        logger.info(
            f"Training {n_way}-way {trainer.k_shot}-shot, {trainer.episodes_per_epoch} episodes/epoch, "
            f"up to {trainer.max_epochs} epochs"
        )
        while state.epoch < trainer.max_epochs:
            epoch = state.epoch
            optimizer.lr = state.lr
            losses = []
            for _ in range(trainer.episodes_per_epoch):
                episode = EpisodeSamplerAgent.sample_episode(
                    corpus, n_way, trainer.k_shot, trainer.q_queries, rng, crop_dur=trainer.crop_dur
                )
                loss, _ = self.episode_forward(net, bank, episode, n_frames, training=True, squared=squared)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"loss became {value} at epoch {epoch}, step {state.step} (lr {optimizer.lr})"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                state.step += 1
                losses.append(value)

            val_acc = self.validate(net, val_corpus, val_bank, config)
            stop = state.observe(val_acc)
            rows.append(
                {"epoch": epoch, "step": state.step, "loss": float(np.mean(losses)), "val_acc": val_acc, "lr": round(optimizer.lr, 12)}
            )
            self._write_log(rows, log_path)

            if state.best_epoch == epoch:
                save_checkpoint(
                    checkpoint_path,
                    net.params,
                    config,
                    n_bins=bank.n_bins,
                    best_val_acc=val_acc,
                    best_epoch=epoch,
                    stats=stats,
                )
                logger.info(f"✓ Epoch {epoch}: loss {rows[-1]['loss']:.4f}, val_acc {val_acc:.4f} (new best)")
            else:
                logger.info(
                    f"Epoch {epoch}: loss {rows[-1]['loss']:.4f}, val_acc {val_acc:.4f} "
                    f"({state.epochs_since_improvement} without improvement)"
                )
            if stop:
                logger.info(f"Early stop after epoch {epoch}: no improvement for {trainer.patience} epochs")
                break

        return TrainResult(
            checkpoint_path=checkpoint_path,
            log_path=log_path,
            best_val_acc=float(state.best_val_acc or 0.0),
            best_epoch=state.best_epoch,
            epochs_run=state.epoch,
        )


trainer_service = TrainerService()
