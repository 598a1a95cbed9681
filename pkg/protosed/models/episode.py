from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from protosed.models.events import Segment


class ClassPool(BaseModel):
    """Everything episode sampling may draw for one class"""

    class_id: str
    positives: List[Segment] = []
    free: List[Tuple[str, float, float]] = []  # (file_id, start, end) clear of POS and UNK


class EpisodeCorpus(BaseModel):
    pools: Dict[str, ClassPool] = {}
    durations: Dict[str, float] = {}  # file_id -> seconds

    def classes(self) -> List[str]:
        return sorted(self.pools)


class Episode(BaseModel):
    """
    n-way k-shot bundle: per way, k positive and k negative support
    segments plus q positive queries.
    """

    n_way: int = Field(gt=0)
    k_shot: int = Field(gt=0)
    q_queries: int = Field(gt=0)
    classes: List[str]
    support_pos: List[List[Segment]]
    support_neg: List[List[Segment]]
    queries: List[List[Segment]]

    @model_validator(mode="after")
    def _consistent(self) -> "Episode":
        if len(set(self.classes)) != len(self.classes) or len(self.classes) != self.n_way:
            raise ValueError(f"episode needs {self.n_way} distinct classes, got {self.classes}")
        for name, groups, size in (
            ("support_pos", self.support_pos, self.k_shot),
            ("support_neg", self.support_neg, self.k_shot),
            ("queries", self.queries, self.q_queries),
        ):
            if len(groups) != self.n_way or any(len(group) != size for group in groups):
                raise ValueError(f"{name} must hold {self.n_way} groups of {size}")
        support = {segment.key for group in self.support_pos for segment in group}
        if any(segment.key in support for group in self.queries for segment in group):
            raise ValueError("a segment appears in both support and query")
        return self

    def support_segments(self) -> List[Segment]:
        """Interleaved per way: k positives then k negatives"""
        ordered: List[Segment] = []
        for positives, negatives in zip(self.support_pos, self.support_neg):
            ordered.extend(positives)
            ordered.extend(negatives)
        return ordered

    def query_segments(self) -> List[Segment]:
        return [segment for group in self.queries for segment in group]

    def query_targets(self) -> List[int]:
        """Way index of every query, in query_segments order"""
        return [way for way, group in enumerate(self.queries) for _ in group]


class TrainState(BaseModel):
    """Epoch bookkeeping for the learning-rate schedule and early stopping"""

    epoch: int = 0
    step: int = 0
    base_lr: float = 0.001
    lr_decay: float = 0.65
    lr_step: int = 10
    patience: int = 10
    best_val_acc: Optional[float] = None
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    seed: int = 0

    @property
    def lr(self) -> float:
        return self.lr_at(self.epoch)

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.lr_decay ** (epoch // self.lr_step)

    def observe(self, val_acc: float) -> bool:
        """
        Record the current epoch's validation accuracy and move to the next epoch.

        Returns:
            True once `patience` consecutive epochs failed to improve the best accuracy
        """
        if self.best_val_acc is None or val_acc > self.best_val_acc:
            self.best_val_acc = val_acc
            self.best_epoch = self.epoch
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1
        self.epoch += 1
        return self.epochs_since_improvement >= self.patience
