"""Tabular stochastic policies shared by the forecasting and trading learners.

A policy is a (n_states, n_actions) row-stochastic numpy array.  Learning is
direct policy search: the row of the visited state is pulled toward the
hindsight-best action (positive reward) or pushed away from the taken action
(negative reward), with the step size scaled by the reward magnitude.
"""

from __future__ import annotations

import numpy as np


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def sample_action(policy: np.ndarray, state: int, rng: np.random.Generator) -> int:
    """Draw one action from the categorical distribution of the state's row."""
    row = policy[state]
    u = rng.random()
    return int(min(np.searchsorted(np.cumsum(row), u, side="right"), len(row) - 1))


def reinforce(policy: np.ndarray, state: int, action: int, rate: float) -> None:
    """Shift probability mass of one row toward ``action``.

    p(s,a*) += rate * (1 - p(s,a*)); every other entry shrinks by (1 - rate),
    which keeps the row normalised exactly.
    """
    row = policy[state]
    target = row[action]
    row *= 1.0 - rate
    row[action] = target + rate * (1.0 - target)


def penalize(policy: np.ndarray, state: int, action: int, rate: float) -> None:
    """Scale down the taken action's probability and renormalise the row."""
    row = policy[state]
    row[action] *= 1.0 - rate
    row /= row.sum()


def apply_reward_update(policy: np.ndarray, state: int, taken: int, best: int,
                        reward: int, learn_rate: float) -> None:
    """One learning step after a resolved decision.

    Positive rewards reinforce the hindsight-best action; negative rewards
    penalise the action actually taken.  The effective step is
    learn_rate * |reward| / 4 so the sextile reward scale modulates learning.
    """
    rate = learn_rate * abs(reward) / 4.0
    if reward > 0:
        reinforce(policy, state, best, rate)
    else:
        penalize(policy, state, taken, rate)


def max_row_deviation(policy: np.ndarray) -> float:
    """Largest |row sum - 1| over the table (normalisation audit)."""
    return float(np.abs(policy.sum(axis=1) - 1.0).max())
