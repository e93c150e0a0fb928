import math

import numpy as np
import pytest

from mlgcn.errors import ConfigurationError
from mlgcn.synthetic import SyntheticConfig, generate_synthetic, train_test_split


def conditional(Y, i, j):
    return Y[Y[:, i] == 1, j].mean()


class TestGenerator:
    def test_strength_one_pair(self):
        data = generate_synthetic(SyntheticConfig(num_labels=4, feature_dim=8, num_samples=10_000, strength=1.0))
        Y = data.dataset.label_matrix()
        assert conditional(Y, 0, 1) > 0.9

    def test_noise_free_features_depend_only_on_labels(self):
        data = generate_synthetic(SyntheticConfig(num_labels=4, feature_dim=8, num_samples=400, noise=0.0))
        seen = {}
        for s, x in zip(data.dataset.samples, data.dataset.features):
            if s.labels in seen:
                np.testing.assert_array_equal(seen[s.labels], x)
            else:
                seen[s.labels] = x

    def test_seeded(self):
        cfg = SyntheticConfig(num_samples=300, seed=11)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        assert a.dataset.samples == b.dataset.samples
        assert a.dataset.features.tobytes() == b.dataset.features.tobytes()
        assert a.word_vectors.vectors.keys() == b.word_vectors.vectors.keys()
        c = generate_synthetic(SyntheticConfig(num_samples=300, seed=12))
        assert c.dataset.features.tobytes() != a.dataset.features.tobytes()

    def test_signatures_orthonormal(self):
        sig = generate_synthetic(SyntheticConfig(num_samples=10)).signatures
        np.testing.assert_allclose(sig @ sig.T, np.eye(10), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("leader, follower", [(0, 1), (2, 3), (1, 0), (0, 2)])
    def test_empirical_conditional_within_three_standard_errors(self, leader, follower):
        cfg = SyntheticConfig(num_labels=6, feature_dim=12, num_samples=20_000, seed=3)
        Y = generate_synthetic(cfg).dataset.label_matrix()
        n = int(Y[:, leader].sum())
        if (leader, follower) in cfg.planted_pairs():
            expected = cfg.planted_conditional(leader, follower)
        elif (follower, leader) in cfg.planted_pairs():
            # Bayes on the reverse direction of a planted pair
            q = cfg.planted_conditional(follower, leader)
            r = cfg.base_rate
            expected = r * q / (r + (1 - r) * r * cfg.strength)
        else:
            expected = cfg.base_rate
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(conditional(Y, leader, follower) - expected) < 3 * se

    @pytest.mark.parametrize("overrides", [
        {"num_labels": 1},
        {"feature_dim": 5, "num_labels": 10},
        {"strength": 1.5},
        {"noise": -1.0},
        {"pairs": ((0, 0),)},
    ])
    def test_bad_config(self, overrides):
        with pytest.raises(ConfigurationError):
            generate_synthetic(SyntheticConfig(**overrides))


class TestSplit:
    def test_sizes(self):
        data = generate_synthetic(SyntheticConfig(num_samples=50)).dataset
        train, test = train_test_split(data, 40)
        assert (len(train), len(test)) == (40, 10)
        assert train.ids[0] == "s000000" and test.ids[0] == "s000040"

    @pytest.mark.parametrize("n", [0, 50])
    def test_bounds(self, n):
        data = generate_synthetic(SyntheticConfig(num_samples=50)).dataset
        with pytest.raises(ConfigurationError):
            train_test_split(data, n)
