import numpy as np
import pytest
from scipy.special import log_softmax

from protosed.agents import PrototypeAgent
from protosed.core.errors import DimensionError
from protosed.tensor import Tensor


class TestPrototypes:
    def test_single_shot_is_identity(self, rng):
        support = rng.standard_normal((6, 4))
        prototypes = PrototypeAgent.compute_prototypes(Tensor(support), n_way=3, k_shot=1)
        np.testing.assert_allclose(prototypes.data, support)

    def test_mean_of_shots(self):
        support = Tensor(np.array([[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [7.0, 7.0]]))
        prototypes = PrototypeAgent.compute_prototypes(support, n_way=1, k_shot=2)
        np.testing.assert_allclose(prototypes.data, [[1.0, 1.0], [6.0, 6.0]])

    def test_interleaved_ordering(self):
        # way 0: pos 1,1 / neg 2,2; way 1: pos 3,3 / neg 4,4
        support = Tensor(np.repeat([1.0, 2.0, 3.0, 4.0], 2)[:, None] * np.ones((1, 3)))
        prototypes = PrototypeAgent.compute_prototypes(support, n_way=2, k_shot=2)
        np.testing.assert_allclose(prototypes.data[:, 0], [1.0, 2.0, 3.0, 4.0])

    def test_wrong_support_size(self, rng):
        with pytest.raises(DimensionError):
            PrototypeAgent.compute_prototypes(Tensor(rng.standard_normal((5, 4))), n_way=1, k_shot=2)


class TestDistances:
    def test_three_four_five(self):
        d = PrototypeAgent.pairwise_dist(Tensor(np.array([[3.0, 4.0]])), Tensor(np.array([[0.0, 0.0], [3.0, 4.0]])))
        np.testing.assert_allclose(d.data, [[5.0, 0.0]])

    def test_squared_option(self):
        d = PrototypeAgent.pairwise_dist(Tensor(np.array([[3.0, 4.0]])), Tensor(np.zeros((1, 2))), squared=True)
        assert d.item() == pytest.approx(25.0)

    def test_single_query_vector(self, rng):
        prototypes = rng.standard_normal((4, 3))
        d = PrototypeAgent.pairwise_dist(Tensor(prototypes[2]), Tensor(prototypes))
        assert d.shape == (1, 4)
        assert d.data[0, 2] == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            PrototypeAgent.pairwise_dist(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))

    def test_gradient_at_zero_distance_is_finite(self):
        queries = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        prototypes = Tensor(np.array([[1.0, 2.0], [0.0, 0.0]]), requires_grad=True)
        loss, _ = PrototypeAgent.episode_loss(PrototypeAgent.pairwise_dist(queries, prototypes), [0])
        loss.backward()
        assert np.all(np.isfinite(queries.grad))
        assert np.all(np.isfinite(prototypes.grad))


class TestEpisodeLoss:
    def test_equal_distances_give_log_two(self):
        loss, _ = PrototypeAgent.episode_loss(Tensor(np.ones((3, 2))), [0, 0, 0])
        assert loss.item() == pytest.approx(np.log(2))

    def test_confident_queries(self):
        distances = Tensor(np.array([[0.0, 50.0, 50.0, 50.0], [50.0, 50.0, 0.0, 50.0]]))
        loss, accuracy = PrototypeAgent.episode_loss(distances, [0, 1])
        assert loss.item() == pytest.approx(0.0, abs=1e-12)
        assert accuracy == 1.0

    def test_matches_manual_softmax(self):
        distances = np.array([[0.0, 10.0, 10.0, 10.0], [1.0, 2.0, 0.5, 3.0]])
        loss, accuracy = PrototypeAgent.episode_loss(Tensor(distances), [0, 1])
        expected = -(log_softmax(-distances[0])[0] + log_softmax(-distances[1])[2]) / 2
        assert loss.item() == pytest.approx(expected)
        assert accuracy == 1.0

    def test_negative_prototype_nearest_counts_as_miss(self):
        _, accuracy = PrototypeAgent.episode_loss(Tensor(np.array([[2.0, 1.0]])), [0])
        assert accuracy == 0.0

    def test_positive_targets(self):
        np.testing.assert_array_equal(PrototypeAgent.positive_targets([0, 1, 2]), [0, 2, 4])
