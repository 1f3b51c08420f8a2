"""Measurement on recorded runs: policy distances, volatilities, crashes, returns.

Everything here is a pure function of recorded data; re-running analytics can
never perturb simulation output.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats as sstats

GROUP_LABELS = ("best_best", "best_rest", "best_worst", "worst_rest", "worst_worst")

# Ratio of the two policy metrics' upper bounds 2/|A|: (2/27) / (2/9).
TRADE_TO_FORECAST_SCALE = 1.0 / 3.0


def policy_distance(pol_m: np.ndarray, pol_n: np.ndarray) -> float:
    """Mean absolute probability difference between two policies.

    Bounded by 2/n_actions (each row is a probability distribution).
    """
    if pol_m.shape != pol_n.shape:
        raise ValueError(f"policy shapes differ: {pol_m.shape} vs {pol_n.shape}")
    return float(np.abs(pol_m - pol_n).mean())


def policy_distance_matrix(tables: np.ndarray) -> np.ndarray:
    """Pairwise distances for stacked policies of shape (n, states, actions)."""
    n = tables.shape[0]
    flat = tables.reshape(n, -1)
    out = np.zeros((n, n))
    for i in range(n - 1):
        d = np.abs(flat[i + 1:] - flat[i]).mean(axis=1)
        out[i, i + 1:] = d
        out[i + 1:, i] = d
    return out


def decile_indices(nav: np.ndarray, fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the best and worst NAV deciles.

    Ties break deterministically by agent index (lower index ranks better on
    the best side and worse on the worst side).
    """
    n = len(nav)
    k = max(1, int(round(fraction * n)))
    order_desc = np.lexsort((np.arange(n), -np.asarray(nav)))
    order_asc = np.lexsort((np.arange(n), np.asarray(nav)))
    return order_desc[:k], order_asc[:k]


def _within_mean(dist: np.ndarray, group: np.ndarray) -> float:
    sub = dist[np.ix_(group, group)]
    k = len(group)
    if k < 2:
        return 0.0
    return float(sub[np.triu_indices(k, 1)].mean())


def _cross_mean(dist: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        return 0.0
    return float(dist[np.ix_(a, b)].mean())


def group_distances(dist: np.ndarray, nav: np.ndarray) -> dict[str, float]:
    """The five group statistics of one distance matrix at one snapshot."""
    n = dist.shape[0]
    best, worst = decile_indices(nav)
    in_best = np.zeros(n, dtype=bool)
    in_best[best] = True
    in_worst = np.zeros(n, dtype=bool)
    in_worst[worst] = True
    rest_of_best = np.where(~in_best)[0]
    rest_of_worst = np.where(~in_worst)[0]
    return {
        "best_best": _within_mean(dist, best),
        "best_rest": _cross_mean(dist, best, rest_of_best),
        "best_worst": _cross_mean(dist, best, worst),
        "worst_rest": _cross_mean(dist, worst, rest_of_worst),
        "worst_worst": _within_mean(dist, worst),
    }


@dataclass
class GroupCurves:
    """Five heterogeneity time series per algorithm, trade curves pre-scaled."""

    steps: np.ndarray               # recorded-phase snapshot steps
    forecast: dict[str, np.ndarray]
    trade: dict[str, np.ndarray]    # multiplied by TRADE_TO_FORECAST_SCALE


def group_distance_curves(snapshots) -> GroupCurves:
    """Group heterogeneity over time from policy snapshots.

    Decile membership is recomputed at every snapshot from its NAV vector.
    """
    if not snapshots:
        raise ValueError("need at least one policy snapshot")
    steps = np.array([s.step for s in snapshots])
    f_curves = {label: np.zeros(len(snapshots)) for label in GROUP_LABELS}
    t_curves = {label: np.zeros(len(snapshots)) for label in GROUP_LABELS}
    for idx, snap in enumerate(snapshots):
        f_stats = group_distances(policy_distance_matrix(snap.forecast), snap.nav)
        t_stats = group_distances(policy_distance_matrix(snap.trade), snap.nav)
        for label in GROUP_LABELS:
            f_curves[label][idx] = f_stats[label]
            t_curves[label][idx] = t_stats[label] * TRADE_TO_FORECAST_SCALE
    return GroupCurves(steps, f_curves, t_curves)


def rolling_volatility(prices: np.ndarray, lag: int) -> tuple[np.ndarray, float]:
    """Price std over each trailing ``lag`` window divided by the current price.

    Returns the series (one value per step from the first full window) and its
    time mean.
    """
    prices = np.asarray(prices, dtype=float)
    if lag > prices.size:
        raise ValueError(f"lag {lag} exceeds series length {prices.size}")
    if lag < 2:
        raise ValueError("volatility needs a window of at least 2")
    windows = sliding_window_view(prices, lag)
    series = windows.std(axis=1, ddof=1) / prices[lag - 1:]
    return series, float(series.mean())


def count_crashes(prices: np.ndarray, month_len: int, threshold: float = 0.20) -> int:
    """Number of crash events: price below (1 - threshold) times the previous
    month's maximum, with qualifying steps within a month of an event's start
    folded into that event."""
    prices = np.asarray(prices, dtype=float)
    if prices.size <= month_len:
        return 0
    prev_max = sliding_window_view(prices[:-1], month_len).max(axis=1)
    qualifying = np.where(prices[month_len:] < (1.0 - threshold) * prev_max)[0]
    count = 0
    last_start = None
    for t in qualifying:
        if last_start is None or t - last_start > month_len:
            count += 1
            last_start = t
    return count


def log_returns(prices: np.ndarray) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if prices.size < 2:
        raise ValueError("need at least two prices for returns")
    return np.diff(np.log(prices))


def return_histogram(prices: np.ndarray, bins: int = 50):
    """Histogram and moments of the log-return distribution.

    Returns (counts, bin_edges, moments) where moments holds mean, std,
    skewness and excess kurtosis.
    """
    returns = log_returns(prices)
    counts, edges = np.histogram(returns, bins=bins)
    std = float(returns.std(ddof=1)) if returns.size > 1 else 0.0
    if std > 0:
        skew = float(sstats.skew(returns))
        kurt = float(sstats.kurtosis(returns))
    else:
        skew = kurt = 0.0
    moments = {"mean": float(returns.mean()), "std": std,
               "skewness": skew, "excess_kurtosis": kurt}
    return counts, edges, moments


def run_lengths(prices: np.ndarray) -> Counter:
    """Distribution of maximal strictly-rising (+k) and dropping (-k) streaks.

    Steps with zero price change terminate streaks and are not counted.
    """
    moves = np.sign(np.diff(np.asarray(prices, dtype=float)))
    lengths: Counter = Counter()
    direction = 0
    length = 0
    for m in moves:
        if m != 0 and m == direction:
            length += 1
            continue
        if direction != 0 and length > 0:
            lengths[int(direction * length)] += 1
        direction = int(m)
        length = 1 if m != 0 else 0
    if direction != 0 and length > 0:
        lengths[int(direction * length)] += 1
    return lengths


def decile_param_distribution(values: np.ndarray, nav: np.ndarray,
                              support: tuple[float, float], bins: int = 20):
    """Histograms of one agent parameter over the best and worst NAV deciles.

    Bankrupt agents stay eligible (their frozen NAV ranks them).  Returns
    (best_counts, worst_counts, bin_edges).
    """
    values = np.asarray(values, dtype=float)
    best, worst = decile_indices(nav)
    best_counts, edges = np.histogram(values[best], bins=bins, range=support)
    worst_counts, _ = np.histogram(values[worst], bins=bins, range=support)
    return best_counts, worst_counts, edges


def bankruptcy_rate(bankrupt_counts: np.ndarray, n_agents: int) -> float:
    """Mean percentage of bankrupt agents per step."""
    counts = np.asarray(bankrupt_counts, dtype=float)
    return float(counts.mean()) / n_agents * 100.0


def spread_percent(spreads: np.ndarray, prices: np.ndarray) -> float:
    """Mean bid-ask spread as a percentage of price, over steps where defined."""
    spreads = np.asarray(spreads, dtype=float)
    prices = np.asarray(prices, dtype=float)
    mask = ~np.isnan(spreads)
    if not mask.any():
        return float("nan")
    return float((spreads[mask] / prices[mask]).mean()) * 100.0


def run_summary(record, config) -> dict:
    """Scalar metrics of one recorded run, averaged over stocks."""
    lags = {"week": config.week_len, "month": config.month_len,
            "six_month": 6 * config.month_len}
    out = {}
    J = record.prices.shape[0]
    for name, lag in lags.items():
        vols = [rolling_volatility(record.prices[j], lag)[1] for j in range(J)]
        out[f"vol_{name}"] = float(np.mean(vols))
    out["crashes"] = float(np.mean([
        count_crashes(record.prices[j], config.month_len, config.crash_threshold)
        for j in range(J)]))
    out["mean_volume"] = float(record.volumes.mean())
    out["spread_pct"] = float(np.mean([
        spread_percent(record.spreads[j], record.prices[j]) for j in range(J)]))
    out["bankruptcy_pct"] = bankruptcy_rate(record.bankrupt_counts, config.n_agents)
    return out
