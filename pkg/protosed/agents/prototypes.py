from typing import Sequence, Tuple

import numpy as np

from protosed.core.errors import DimensionError
from protosed.tensor import Tensor, cross_entropy


class PrototypeAgent:
    """Agent for prototypes, query distances and the episode loss"""

    @classmethod
    def averaging_matrix(cls, n_groups: int, group_size: int, dtype=np.float32) -> np.ndarray:
        """[n_groups, n_groups*group_size] with 1/group_size over each consecutive block"""
        matrix = np.zeros((n_groups, n_groups * group_size), dtype=dtype)
        for group in range(n_groups):
            matrix[group, group * group_size:(group + 1) * group_size] = 1.0 / group_size
        return matrix

    @classmethod
    def compute_prototypes(cls, support: Tensor, n_way: int, k_shot: int) -> Tensor:
        """
        Mean embedding per (way, polarity).

        Args:
            support: [2*n_way*k_shot, dim] embeddings ordered way by way,
                k positives then k negatives
            n_way: ways in the episode
            k_shot: shots per polarity

        Returns:
            [2*n_way, dim] prototypes ordered pos_0, neg_0, pos_1, neg_1, ...
        """
        if support.ndim != 2 or support.shape[0] != 2 * n_way * k_shot:
            raise DimensionError(f"expected [{2 * n_way * k_shot}, dim] support embeddings, got {support.shape}")
        return Tensor(cls.averaging_matrix(2 * n_way, k_shot, support.dtype)) @ support

    @classmethod
    def pairwise_dist(cls, queries: Tensor, prototypes: Tensor, squared: bool = False) -> Tensor:
        """Euclidean distance of every query to every prototype, [Q, P]"""
        if queries.ndim == 1:
            queries = queries.reshape(1, -1)
        if queries.shape[1] != prototypes.shape[1]:
            raise DimensionError(f"query dim {queries.shape[1]} != prototype dim {prototypes.shape[1]}")
        q, p = queries.shape[0], prototypes.shape[0]
        diff = queries.reshape(q, 1, -1) - prototypes.reshape(1, p, -1)
        sq = (diff * diff).sum(axis=2)
        return sq if squared else sq.sqrt()

    @classmethod
    def positive_targets(cls, ways: Sequence[int]) -> np.ndarray:
        return 2 * np.asarray(ways, dtype=np.int64)

    @classmethod
    def episode_loss(cls, distances: Tensor, ways: Sequence[int]) -> Tuple[Tensor, float]:
        """
        Cross-entropy of softmax(-d) against each query's positive prototype.

        Returns:
            (scalar loss, fraction of queries whose nearest prototype is their positive one)
        """
        targets = cls.positive_targets(ways)
        loss = cross_entropy(-distances, targets)
        accuracy = float(np.mean(np.argmin(distances.data, axis=1) == targets)) if len(targets) else 0.0
        return loss, accuracy
