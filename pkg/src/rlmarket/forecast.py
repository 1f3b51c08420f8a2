"""Price-forecasting learner: market state binning, econometric tools, rewards.

Each agent maps a 27-state market summary (long volatility, short volatility,
fundamental gap, three terciles each) to one of 27 forecasting actions: which
econometric tool to apply (mean-reverting, averaging, trend-following), over
which historical lag, and how much weight to put on its private fundamental
estimate.  When a forecast comes due, an off-policy pass replays every action
against the realised price and the policy row is updated toward the hindsight
winner, scaled by a percentile reward on the forecast error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policy import apply_reward_update

N_STATES = 27
N_ACTIONS = 27

TOOL_MEAN_REVERT = 0
TOOL_AVERAGE = 1
TOOL_TREND = 2

REWARD_LEVELS = (4, 2, 1, -1, -2, -4)


def encode_state(s0: int, s1: int, s2: int) -> int:
    return s0 * 9 + s1 * 3 + s2


def decode_state(index: int) -> tuple[int, int, int]:
    s0, rem = divmod(index, 9)
    return (s0,) + divmod(rem, 3)


def encode_action(a0: int, a1: int, a2: int) -> int:
    return a0 * 9 + a1 * 3 + a2


def decode_action(index: int) -> tuple[int, int, int]:
    a0, rem = divmod(index, 9)
    return (a0,) + divmod(rem, 3)


def tercile_rank(x: float, window: np.ndarray) -> int:
    """Rank ``x`` against its own trailing distribution: 0 low, 1 mid, 2 high.

    Cut points sit at the empirical 1/3 and 2/3 quantiles; ties take midrank,
    so a degenerate (all-equal) distribution maps to the middle bin.
    """
    n = window.size
    if n == 0:
        return 1
    less = int(np.count_nonzero(window < x))
    greater = int(np.count_nonzero(window > x))
    num = 2 * less + (n - less - greater)   # 2n times the midrank fraction
    if 3 * num < 2 * n:
        return 0
    if 3 * num < 4 * n:
        return 1
    return 2


def forecast_state(vol_long: float, vol_long_window: np.ndarray,
                   vol_short: float, vol_short_window: np.ndarray,
                   gap: float, gap_window: np.ndarray) -> int:
    """Encode the three market statistics into the 27-way forecast state."""
    return encode_state(tercile_rank(vol_long, vol_long_window),
                        tercile_rank(vol_short, vol_short_window),
                        tercile_rank(gap, gap_window))


def technical_forecast(tool: int, lag_days: int, prices, tau: int) -> float:
    """Forecast at horizon ``tau`` from the trailing ``lag_days`` prices.

    Averaging returns the window mean; mean-reverting moves the current price
    toward that mean by min(1, tau/lag); trend-following extrapolates the
    least-squares slope ``tau`` steps ahead.  The result is floored at 0.01.
    """
    prices = np.asarray(prices, dtype=float)
    n = min(int(lag_days), prices.size)
    if n < 1:
        raise ValueError("technical forecast needs at least one price")
    window = prices[prices.size - n:]
    current = float(prices[-1])
    mean = float(window.mean())
    if tool == TOOL_AVERAGE:
        est = mean
    elif tool == TOOL_MEAN_REVERT:
        est = current + (mean - current) * min(1.0, tau / n)
    elif tool == TOOL_TREND:
        est = current + tau * _ls_slope(window)
    else:
        raise ValueError(f"unknown forecasting tool {tool}")
    return max(est, 0.01)


def _ls_slope(window: np.ndarray) -> float:
    n = window.size
    if n < 2:
        return 0.0
    x = np.arange(n) - (n - 1) / 2.0
    return float(x @ window) / (n * (n * n - 1) / 12.0)


def technical_matrix(current: float, means, slopes, window_lens, tau: int) -> np.ndarray:
    """All nine tool/lag forecasts at once, from precomputed window stats.

    ``means``/``slopes``/``window_lens`` hold the trailing mean, least-squares
    slope and effective length for each of the three lag choices; rows follow
    the tool order (mean-revert, average, trend).
    """
    out = np.empty((3, 3))
    for k in range(3):
        m = means[k]
        n = window_lens[k]
        out[TOOL_MEAN_REVERT, k] = current + (m - current) * min(1.0, tau / n)
        out[TOOL_AVERAGE, k] = m
        out[TOOL_TREND, k] = current + tau * slopes[k]
    np.maximum(out, 0.01, out)
    return out


def blend_weight(rho: float, a2: int) -> float:
    """Weight on the fundamental estimate: rho * {0.5, 1, min(1/rho, 1.5)}[a2]."""
    if rho <= 0.0:
        return 0.0
    mult = (0.5, 1.0, min(1.0 / rho, 1.5))[a2]
    return min(max(rho * mult, 0.0), 1.0)


def blend(p_tech: float, fundamental: float, rho: float, a2: int) -> float:
    c = blend_weight(rho, a2)
    return c * fundamental + (1.0 - c) * p_tech


def reward_forecast(abs_error: float, history: np.ndarray) -> int:
    """Sextile reward from the agent's own past-error distribution.

    q = fraction of history strictly below ``abs_error``; the bins
    [0,1/6) ... [5/6,1] map to +4, +2, +1, -1, -2, -4.
    """
    n = history.size
    if n == 0:
        raise ValueError("error history must be nonempty")
    k = int(np.count_nonzero(history < abs_error))
    return REWARD_LEVELS[min((6 * k) // n, 5)]


@dataclass(slots=True)
class PendingForecast:
    issue_step: int
    state: int
    action: int
    forecast: float
    tech: np.ndarray        # (3, 3) tool-by-lag forecasts at issue time
    fundamental: float      # agent's fundamental estimate at issue time


def replay_errors(tech: np.ndarray, fundamental: float, weights: np.ndarray,
                  realized: float) -> np.ndarray:
    """Absolute forecast error of all 27 actions against the realised price."""
    w = weights[None, None, :]
    estimates = w * fundamental + (1.0 - w) * tech[:, :, None]
    return np.abs(estimates - realized).reshape(N_ACTIONS)


def hindsight_update_forecast(policy: np.ndarray, pending: PendingForecast,
                              realized: float, weights: np.ndarray,
                              learn_rate: float, history: np.ndarray):
    """Resolve a due forecast: reward it, find the hindsight-best action,
    and update the visited policy row.

    Returns (abs_error, a_star, reward).
    """
    err = abs(pending.forecast - realized)
    reward = reward_forecast(err, history)
    errors = replay_errors(pending.tech, pending.fundamental, weights, realized)
    a_star = int(np.argmin(errors))
    apply_reward_update(policy, pending.state, pending.action, a_star, reward, learn_rate)
    return err, a_star, reward
