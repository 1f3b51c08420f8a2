"""Order-placement learner: portfolio state binning, limit orders, cashflow rewards.

The trading policy maps a 108-way state (forecast direction, volatility, cash
and inventory levels, previous volume) to one of nine actions: hold, buy or
sell, each at a passive, neutral or aggressive limit relative to the agent's
own valuation.  When a decision comes due, the realised price path is replayed
to score the trade against its counterfactual, a percentile reward is drawn
from the agent's past cashflow differences, and the policy row moves toward
the hindsight-best direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forecast import REWARD_LEVELS, tercile_rank
from .orderbook import Order, Side
from .policy import apply_reward_update

N_STATES = 108
N_ACTIONS = 9

HOLD = 0
BUY = 1
SELL = 2


def encode_state(s0: int, s1: int, s2: int, s3: int, s4: int) -> int:
    return s0 * 36 + s1 * 12 + s2 * 6 + s3 * 3 + s4


def decode_state(index: int) -> tuple[int, int, int, int, int]:
    s0, rem = divmod(index, 36)
    s1, rem = divmod(rem, 12)
    s2, rem = divmod(rem, 6)
    return (s0, s1, s2) + divmod(rem, 3)


def trade_direction(forecast: float, price: float, flat_threshold: float) -> int:
    """0 down / 1 flat / 2 up, with a dead zone of +/- flat_threshold."""
    if forecast < price * (1.0 - flat_threshold):
        return 0
    if forecast > price * (1.0 + flat_threshold):
        return 2
    return 1


def at_least_median(x: float, window: np.ndarray) -> bool:
    """True iff x >= median(window); False for an empty window."""
    n = window.size
    if n == 0:
        return False
    le = n - int(np.count_nonzero(window > x))
    if 2 * le > n:
        return True
    if 2 * le < n or n % 2 == 1:
        return False
    # Even n with x between the two middle values: compare against the midpoint.
    return x >= float(np.median(window))


def trade_state(forecast: float, price: float, flat_threshold: float,
                vol_tercile: int, bonds: float, bonds_window: np.ndarray,
                hold_value: float, hold_window: np.ndarray,
                prev_volume: float, volume_window: np.ndarray) -> int:
    s0 = trade_direction(forecast, price, flat_threshold)
    s2 = 1 if at_least_median(bonds, bonds_window) else 0
    s3 = 1 if at_least_median(hold_value, hold_window) else 0
    s4 = tercile_rank(prev_volume, volume_window)
    return encode_state(s0, vol_tercile, s2, s3, s4)


def build_order(agent_id: int, stock_id: int, a0: int, a1: int, forecast: float,
                gesture: float, rel_spread: float, bonds: float, holdings: int,
                trade_fraction: float) -> Order | None:
    """Turn a trade action into a limit order, or None for hold / empty sizes.

    The limit anchors at the agent's own valuation, tilted by its gesture
    times the relative spread; buys above / sells below for the aggressive
    choice and the reverse for the passive one.  Quantities commit
    ``trade_fraction`` of cash (buys) or inventory (sells).
    """
    if a0 == HOLD:
        return None
    tilt = gesture * (a1 - 1) * rel_spread
    if a0 == BUY:
        limit = max(forecast * (1.0 + tilt), 0.01)
        qty = int(trade_fraction * bonds / limit)
        if qty < 1:
            return None
        return Order(agent_id, stock_id, Side.BID, limit, qty)
    limit = max(forecast * (1.0 - tilt), 0.01)
    qty = int(trade_fraction * holdings)
    if qty < 1:
        return None
    return Order(agent_id, stock_id, Side.ASK, limit, qty)


@dataclass(slots=True)
class PendingTrade:
    issue_step: int
    state: int
    action: int
    forecast: float
    bonds_at_issue: float
    holdings_at_issue: int
    order_qty: int = 0          # quantity submitted (0 when no order went out)
    filled_qty: int = 0
    fill_value: float = 0.0     # sum of price * quantity over fills


def executed_diff(is_buy: bool, fill_value: float, qty: int,
                  resolved_price: float, fee_rate: float) -> float:
    """NAV difference, trade versus no trade, marked at the resolved price."""
    if is_buy:
        return qty * resolved_price - fill_value - fee_rate * fill_value
    return fill_value - qty * resolved_price - fee_rate * fill_value


def replay_candidates(forecast: float, clear_price: float, bonds: float,
                      holdings: int, resolved_price: float, fee_rate: float,
                      trade_fraction: float):
    """(executed, diff) for hold, buy and sell replayed at the neutral limit.

    A replayed order executes at its limit (the forecast itself) when the
    issue step's clearing price crossed it; otherwise it lapses with no
    cashflow.
    """
    qb = int(trade_fraction * bonds / forecast) if forecast > 0 else 0
    buy_ok = qb >= 1 and clear_price <= forecast
    buy = (buy_ok,
           executed_diff(True, qb * forecast, qb, resolved_price, fee_rate) if buy_ok else 0.0)
    qs = int(trade_fraction * holdings)
    sell_ok = qs >= 1 and clear_price >= forecast
    sell = (sell_ok,
            executed_diff(False, qs * forecast, qs, resolved_price, fee_rate) if sell_ok else 0.0)
    return (True, 0.0), buy, sell


def best_direction(candidates) -> int:
    """Hindsight-optimal direction among the executed replays; ties hold."""
    best, best_diff = HOLD, 0.0
    for a0 in (BUY, SELL):
        ok, diff = candidates[a0]
        if ok and diff > best_diff:
            best, best_diff = a0, diff
    return best


def counterfactual_diff(pending: PendingTrade, resolved_price: float,
                        clear_price: float, fee_rate: float,
                        trade_fraction: float) -> float:
    """Cashflow difference of the decision versus its hindsight alternative.

    Executed trades compare against not having traded.  Holds and lapsed
    orders compare against the best alternative that would have executed
    (zero when nothing would have).
    """
    if pending.filled_qty > 0:
        is_buy = pending.action // 3 == BUY
        return executed_diff(is_buy, pending.fill_value, pending.filled_qty,
                             resolved_price, fee_rate)
    cands = replay_candidates(pending.forecast, clear_price, pending.bonds_at_issue,
                              pending.holdings_at_issue, resolved_price, fee_rate,
                              trade_fraction)
    alts = [diff for ok, diff in cands[1:] if ok]
    return -max(alts) if alts else 0.0


def reward_trade(diff: float, history: np.ndarray) -> int:
    """Sextile reward on the past cashflow-difference distribution.

    q = fraction of history strictly above ``diff`` (larger is better); the
    bins mirror the forecast reward with right-closed edges, so sitting
    exactly on the median resolves to +1.
    """
    n = history.size
    if n == 0:
        raise ValueError("cashflow history must be nonempty")
    k = int(np.count_nonzero(history > diff))
    idx = max((6 * k + n - 1) // n - 1, 0)
    return REWARD_LEVELS[idx]


def hindsight_update_trade(policy: np.ndarray, pending: PendingTrade,
                           resolved_price: float, clear_price: float,
                           fee_rate: float, trade_fraction: float,
                           learn_rate: float, history: np.ndarray):
    """Resolve a due trade decision and update the visited policy row.

    Returns (cashflow_diff, a_star, reward).
    """
    diff = counterfactual_diff(pending, resolved_price, clear_price, fee_rate,
                               trade_fraction)
    reward = reward_trade(diff, history)
    cands = replay_candidates(pending.forecast, clear_price, pending.bonds_at_issue,
                              pending.holdings_at_issue, resolved_price, fee_rate,
                              trade_fraction)
    a0_star = best_direction(cands)
    taken0, taken1 = divmod(pending.action, 3)
    a_star = a0_star * 3 + (taken1 if a0_star == taken0 else 1)
    apply_reward_update(policy, pending.state, pending.action, a_star, reward, learn_rate)
    return diff, a_star, reward
