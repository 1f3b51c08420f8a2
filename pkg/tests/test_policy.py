import numpy as np
import pytest

from rlmarket.policy import (apply_reward_update, max_row_deviation, penalize,
                             reinforce, sample_action, uniform_policy)


def test_uniform_policy_rows_normalised():
    pol = uniform_policy(27, 27)
    assert pol.shape == (27, 27)
    assert max_row_deviation(pol) < 1e-12


class TestSampleAction:
    def test_deterministic_row(self):
        pol = np.zeros((3, 5))
        pol[:, 3] = 1.0
        rng = np.random.default_rng(0)
        assert all(sample_action(pol, 1, rng) == 3 for _ in range(50))

    def test_uniform_frequencies(self):
        pol = uniform_policy(1, 27)
        rng = np.random.default_rng(42)
        draws = np.array([sample_action(pol, 0, rng) for _ in range(100_000)])
        freqs = np.bincount(draws, minlength=27) / len(draws)
        assert np.all(np.abs(freqs - 1 / 27) < 0.005)

    def test_restricted_support(self):
        pol = np.zeros((1, 10))
        pol[0, 0] = 0.5
        pol[0, 1] = 0.5
        rng = np.random.default_rng(3)
        assert set(sample_action(pol, 0, rng) for _ in range(200)) == {0, 1}


class TestReinforce:
    def test_uniform_row_arithmetic(self):
        pol = uniform_policy(27, 27)
        reinforce(pol, 5, 7, rate=0.1)
        assert pol[5, 7] == pytest.approx(1 / 27 + 0.1 * (26 / 27))
        assert pol[5, 0] == pytest.approx((1 / 27) * 0.9)
        assert pol[5].sum() == pytest.approx(1.0, abs=1e-12)

    def test_zero_rate_no_change(self):
        pol = uniform_policy(4, 6)
        before = pol.copy()
        reinforce(pol, 0, 0, rate=0.0)
        assert np.array_equal(pol, before)

    def test_repeated_reinforcement_approaches_one(self):
        pol = uniform_policy(1, 27)
        for _ in range(500):
            reinforce(pol, 0, 4, rate=0.1)
        assert pol[0, 4] == pytest.approx(1.0, abs=1e-9)
        assert pol[0, 4] <= 1.0
        assert max_row_deviation(pol) < 1e-9


class TestPenalize:
    def test_reduces_and_renormalises(self):
        pol = uniform_policy(2, 4)
        penalize(pol, 1, 2, rate=0.5)
        assert pol[1, 2] < 1 / 4
        assert pol[1].sum() == pytest.approx(1.0, abs=1e-12)
        assert pol[1, 0] > 1 / 4

    def test_untouched_rows_stay(self):
        pol = uniform_policy(2, 4)
        penalize(pol, 1, 2, rate=0.5)
        np.testing.assert_allclose(pol[0], 1 / 4)


class TestApplyRewardUpdate:
    def test_positive_reward_reinforces_best(self):
        pol = uniform_policy(1, 9)
        apply_reward_update(pol, 0, taken=2, best=5, reward=4, learn_rate=0.1)
        assert pol[0, 5] == pytest.approx(1 / 9 + 0.1 * (8 / 9))
        assert pol[0, 2] == pytest.approx((1 / 9) * 0.9)

    def test_reward_magnitude_scales_step(self):
        pol = uniform_policy(1, 9)
        apply_reward_update(pol, 0, taken=2, best=5, reward=2, learn_rate=0.1)
        assert pol[0, 5] == pytest.approx(1 / 9 + 0.05 * (8 / 9))

    def test_negative_reward_penalises_taken(self):
        pol = uniform_policy(1, 9)
        apply_reward_update(pol, 0, taken=2, best=5, reward=-4, learn_rate=0.1)
        assert pol[0, 2] < 1 / 9
        assert pol[0].sum() == pytest.approx(1.0, abs=1e-12)
        # best action only benefits through renormalisation
        assert pol[0, 5] == pytest.approx(pol[0, 0])

    def test_rows_stay_normalised_under_mixed_updates(self):
        rng = np.random.default_rng(12)
        pol = uniform_policy(10, 9)
        for _ in range(5000):
            s = int(rng.integers(10))
            apply_reward_update(pol, s, int(rng.integers(9)), int(rng.integers(9)),
                                int(rng.choice([-4, -2, -1, 1, 2, 4])), 0.2)
        assert max_row_deviation(pol) < 1e-9
        assert pol.min() >= 0.0
