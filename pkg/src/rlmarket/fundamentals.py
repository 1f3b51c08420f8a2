"""Hidden fundamental value series and per-agent cointegrated approximations.

The fundamental value of each stock follows a geometric random walk with rare
jumps.  Agents never see it directly: each agent observes a proprietary,
cointegrated transform -- a lagged, biased copy wrapped in stationary AR(1)
noise -- so the log spread between approximation and truth stays bounded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter


@dataclass(frozen=True)
class FundamentalSeries:
    """True (hidden) fundamental values of one stock over the whole run."""

    stock_id: int
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CointegrationRule:
    """One agent's private transform of a fundamental series.

    ``bias`` shifts the level, ``lag`` delays the information, and ``noise``
    is a precomputed AR(1) log-disturbance path (persistence ``phi``, innovation
    scale ``sigma``), so the transform is deterministic given the rule.
    """

    bias: float
    lag: int
    phi: float
    sigma: float
    noise: np.ndarray


def generate_fundamental(length: int, init_price: float, vol: float,
                         jump_prob: float, jump_scale: float,
                         rng: np.random.Generator, stock_id: int = 0) -> FundamentalSeries:
    """Geometric random walk of `length` values starting at ``init_price``.

    Log increments are i.i.d. Normal(0, vol^2); with probability ``jump_prob``
    a step additionally jumps by +/- ``jump_scale`` in log space.
    """
    if length < 1:
        raise ValueError("fundamental series needs at least one value")
    increments = rng.normal(0.0, vol, size=length - 1) if vol > 0 else np.zeros(length - 1)
    if jump_prob > 0:
        jumps = rng.random(length - 1) < jump_prob
        signs = rng.integers(0, 2, size=length - 1) * 2 - 1
        increments = increments + jumps * signs * jump_scale
    logs = np.concatenate(([np.log(init_price)], np.log(init_price) + np.cumsum(increments)))
    return FundamentalSeries(stock_id, np.exp(logs))


def draw_rule(length: int, bias_range: float, max_lag: int, phi: float,
              sigma: float, rng: np.random.Generator) -> CointegrationRule:
    """Draw one agent's cointegration rule, including its AR(1) noise path."""
    bias = rng.uniform(-bias_range, bias_range)
    lag = int(rng.integers(0, max_lag + 1))
    eps = rng.normal(0.0, sigma, size=length) if sigma > 0 else np.zeros(length)
    noise = lfilter([1.0], [1.0, -phi], eps)
    return CointegrationRule(bias, lag, phi, sigma, noise)


def cointegrate(series: FundamentalSeries, rule: CointegrationRule, t: int) -> float:
    """The agent's fundamental estimate at step ``t``.

    B(t) = T(t - lag) * (1 + bias) * exp(noise(t)); indices before the series
    start clamp to the first value.
    """
    src = series.values[max(t - rule.lag, 0)]
    return src * (1.0 + rule.bias) * np.exp(rule.noise[t])


def cointegrated_path(series: FundamentalSeries, rule: CointegrationRule) -> np.ndarray:
    """Vectorised :func:`cointegrate` over the whole series."""
    n = len(series.values)
    idx = np.maximum(np.arange(n) - rule.lag, 0)
    return series.values[idx] * (1.0 + rule.bias) * np.exp(rule.noise[:n])


def export_csv(series: FundamentalSeries, path: str | Path) -> None:
    """Write the series as ``step,value`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "value"])
        for step, value in enumerate(series.values):
            writer.writerow([step, repr(float(value))])
