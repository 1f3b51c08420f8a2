"""Per-step orchestration of the market: decisions, clearing, settlement, learning.

Each step runs in fixed phases: accrue interest and dividends, let every
solvent agent decide against the start-of-step snapshot (behavioural overrides
replace the trading decision for herding and noise roles), submit and clear
per-stock order books, settle cash, stock and fees, resolve decisions that
have reached their horizon (policy updates), check bankruptcies, and refresh
the herd memory.  Agents draw randomness from their own streams only, so the
decision loop may be evaluated in any order without changing the outcome.

A run executes ``learning_phase`` warm-up steps, resets portfolios (keeping
the learned policies), then records ``n_steps`` steps of market data.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .agents import (AgentRole, AgentState, accrue, apply_fee, check_bankruptcy,
                     init_agents, net_asset_value)
from .config import RngDomain, ScenarioKind, SimConfig, rng_stream, validate
from .fundamentals import FundamentalSeries, cointegrated_path, generate_fundamental
from .orderbook import Order, OrderBook, Side
from . import forecast as fc
from . import trading as tr
from .policy import sample_action


@dataclass
class MarketRecord:
    """Per-step market data of the recorded phase (learning steps excluded)."""

    prices: np.ndarray          # (n_stocks, T) price after each step's clearing
    volumes: np.ndarray         # (n_stocks, T)
    spreads: np.ndarray         # (n_stocks, T), NaN when one side was empty
    bankrupt_counts: np.ndarray  # (T,)
    navs: np.ndarray            # (T, n_agents) end-of-step net asset values


@dataclass
class PolicySnapshot:
    step: int                   # recorded-phase step index
    forecast: np.ndarray        # (n_agents, 27, 27)
    trade: np.ndarray           # (n_agents, 108, 9)
    nav: np.ndarray             # (n_agents,)
    bankrupt: np.ndarray        # (n_agents,) bool


@dataclass
class ConservationLog:
    """Per-step cash/stock accounting, covering learning and recorded phases."""

    bonds_start: np.ndarray     # total cash at step start (after any reset)
    bonds_settled: np.ndarray   # total cash after settlement
    interest: np.ndarray
    dividends: np.ndarray
    fees: np.ndarray            # fees actually collected
    shares: np.ndarray          # (total_steps, n_stocks) share totals after settlement


@dataclass
class PolicyAudit:
    max_row_dev: float = 0.0    # worst |row sum - 1| right after an update
    min_entry: float = 0.0      # most negative probability seen (>= 0 expected)
    n_updates: int = 0


@dataclass(slots=True)
class ForecastUpdateSample:
    tech: np.ndarray
    fundamental: float
    weights: np.ndarray
    realized: float
    a_star: int


@dataclass(slots=True)
class TradeUpdateSample:
    forecast: float
    clear_price: float
    bonds: float
    holdings: int
    resolved: float
    fee_rate: float
    trade_fraction: float
    a0_star: int


@dataclass
class RunResult:
    config: SimConfig
    run_index: int
    seed: int
    record: MarketRecord
    agents: list[AgentState]
    snapshots: list[PolicySnapshot]
    fundamentals: list[FundamentalSeries]
    conservation: ConservationLog
    audit: PolicyAudit
    update_samples: list = field(default_factory=list)
    order_log: list | None = None
    wall_time: float = 0.0


def override_noise(agent_id: int, stock_id: int, price: float,
                   rng: np.random.Generator, band: float, trade_fraction: float,
                   bonds: float, holdings: int) -> Order | None:
    """Random decision of a noise trader: uniform direction, price near market.

    Draws the direction first, then the price offset, so the stream layout is
    fixed; sizes follow the same proportional rule as learned trades.
    """
    a0 = int(rng.integers(0, 3))
    u = rng.uniform(-band, band)
    if a0 == tr.HOLD:
        return None
    limit = max(price * (1.0 + u), 0.01)
    if a0 == tr.BUY:
        qty = int(trade_fraction * bonds / limit)
        side = Side.BID
    else:
        qty = int(trade_fraction * holdings)
        side = Side.ASK
    if qty < 1:
        return None
    return Order(agent_id, stock_id, side, limit, qty)


def override_herd(agent_id: int, remembered: Order | None, bonds: float,
                  holdings: int) -> Order | None:
    """Copy the remembered order, capped by what the copier can afford."""
    if remembered is None:
        return None
    if remembered.side is Side.BID:
        qty = min(remembered.quantity, int(bonds / remembered.price))
    else:
        qty = min(remembered.quantity, int(holdings))
    if qty < 1:
        return None
    return Order(agent_id, remembered.stock_id, remembered.side,
                 remembered.price, qty)


class MarketEngine:
    """One simulation run; see :func:`simulate` for the common entry point."""

    def __init__(self, config: SimConfig, run_index: int = 0,
                 keep_order_log: bool = False, audit_policies: bool = False,
                 sample_updates: int = 0, agent_order=None):
        validate(config)
        self.run_index = run_index
        self.seed = config.master_seed + run_index
        cfg = dataclasses.replace(config, master_seed=self.seed)
        self.config = cfg
        self.total = cfg.total_steps
        self.lags = (cfg.week_len, cfg.month_len, 3 * cfg.month_len)
        self.long_window = 6 * cfg.month_len
        self.r_step = cfg.riskfree_step
        self.d_step = cfg.dividend_step
        self.agent_order = list(agent_order) if agent_order is not None else list(range(cfg.n_agents))
        self.keep_order_log = keep_order_log
        self.audit_policies = audit_policies
        self.sample_updates = sample_updates

        I, J, total = cfg.n_agents, cfg.n_stocks, self.total
        self.fundamentals = [
            generate_fundamental(total + 1, cfg.init_price, cfg.fundamental_vol,
                                 cfg.fundamental_jump_prob, cfg.fundamental_jump_scale,
                                 rng_stream(self.seed, RngDomain.FUNDAMENTAL, j), j)
            for j in range(J)
        ]
        self.agents = init_agents(cfg, total + 1)
        # Per-agent view of the fundamentals; agent code only ever reads this.
        self.B = np.empty((I, J, total + 1))
        for i, agent in enumerate(self.agents):
            for j in range(J):
                self.B[i, j] = cointegrated_path(self.fundamentals[j], agent.coint_rules[j])

        self.prices = np.empty((J, total + 1))
        self.prices[:, 0] = cfg.init_price
        self.volumes = np.zeros((J, total))
        self.spreads = np.full((J, total), np.nan)
        # Rolling statistics; vol_short uses running sums for speed.
        self.vol_long = np.zeros((J, total))
        self.vol_short = np.zeros((I, J, total))
        self.gap = np.zeros((I, J, total))
        self.bonds_hist = np.zeros((I, total))
        self.holdval_hist = np.zeros((I, J, total))
        self._s1 = np.zeros((J, total + 1))
        self._s2 = np.zeros((J, total + 1))
        self._w_arr = np.array([a.params.trading_window for a in self.agents])
        self._slope_w = [self._slope_weights(L) for L in self.lags]
        # Resolved-decision histories feeding the percentile rewards.
        self.err_vals = np.zeros((I, J, total + 1))
        self.err_n = np.zeros((I, J), dtype=np.int64)
        self.diff_vals = np.zeros((I, J, total + 1))
        self.diff_n = np.zeros((I, J), dtype=np.int64)

        T = cfg.n_steps
        self.record = MarketRecord(np.zeros((J, T)), np.zeros((J, T)),
                                   np.full((J, T), np.nan), np.zeros(T, dtype=np.int64),
                                   np.zeros((T, I)))
        self.conservation = ConservationLog(np.zeros(total), np.zeros(total),
                                            np.zeros(total), np.zeros(total),
                                            np.zeros(total),
                                            np.zeros((total, J), dtype=np.int64))
        self.audit = PolicyAudit()
        self.snapshots: list[PolicySnapshot] = []
        self.update_samples: list = []
        self.order_log: list | None = [] if keep_order_log else None
        self.herd_best: list[Order | None] = [None] * J
        self.herd_worst: list[Order | None] = [None] * J
        self._herding = cfg.scenario.kind in (ScenarioKind.HERD_BEST, ScenarioKind.HERD_WORST)
        self._means = np.zeros((J, 3))
        self._slopes = np.zeros((J, 3))
        self._wlens = np.zeros((J, 3), dtype=np.int64)

    @staticmethod
    def _slope_weights(n: int) -> np.ndarray:
        x = np.arange(n) - (n - 1) / 2.0
        return x / (n * (n * n - 1) / 12.0)

    # -- statistics ---------------------------------------------------------

    def _update_stats(self, t: int) -> None:
        """Record snapshot-time statistics for step t (prices[.., t] is known)."""
        cfg = self.config
        for j in range(cfg.n_stocks):
            p = self.prices[j, t]
            self._s1[j, t + 1] = self._s1[j, t] + p
            self._s2[j, t + 1] = self._s2[j, t] + p * p
            n = min(self.long_window, t + 1)
            if n >= 2:
                window = self.prices[j, t + 1 - n:t + 1]
                self.vol_long[j, t] = float(window.std(ddof=1)) / p
            for k, lag in enumerate(self.lags):
                n = min(lag, t + 1)
                window = self.prices[j, t + 1 - n:t + 1]
                self._wlens[j, k] = n
                self._means[j, k] = window.mean()
                if n == lag:
                    self._slopes[j, k] = self._slope_w[k] @ window
                elif n >= 2:
                    self._slopes[j, k] = self._slope_weights(n) @ window
                else:
                    self._slopes[j, k] = 0.0
            # Short-horizon volatility for every agent at once via running sums.
            nw = np.minimum(self._w_arr, t + 1)
            start = t + 1 - nw
            s1d = self._s1[j, t + 1] - self._s1[j, start]
            s2d = self._s2[j, t + 1] - self._s2[j, start]
            with np.errstate(invalid="ignore", divide="ignore"):
                var = (s2d - s1d * s1d / nw) / (nw - 1)
            vol = np.sqrt(np.maximum(var, 0.0)) / p
            # Sub-1e-9 relative volatility is cumulative-sum noise, not signal.
            vol[(nw < 2) | (vol < 1e-9)] = 0.0
            self.vol_short[:, j, t] = vol
            self.gap[:, j, t] = (self.B[:, j, t] - p) / p
            for i, agent in enumerate(self.agents):
                self.holdval_hist[i, j, t] = agent.portfolio.holdings[j] * p
        for i, agent in enumerate(self.agents):
            self.bonds_hist[i, t] = agent.portfolio.bonds

    # -- decision phase -----------------------------------------------------

    def _decide(self, t: int) -> list[list[Order]]:
        cfg = self.config
        orders: list[list[Order]] = [[] for _ in range(cfg.n_agents)]
        if t < cfg.week_len:
            return orders
        for i in self.agent_order:
            agent = self.agents[i]
            if agent.portfolio.bankrupt:
                continue
            committed = 0.0
            params = agent.params
            h = params.memory
            lo = max(0, t - h)
            for j in range(cfg.n_stocks):
                p = self.prices[j, t]
                s1_tercile = fc.tercile_rank(self.vol_short[i, j, t],
                                             self.vol_short[i, j, lo:t])
                state_f = fc.encode_state(
                    fc.tercile_rank(self.vol_long[j, t], self.vol_long[j, max(1, t - h):t]),
                    s1_tercile,
                    fc.tercile_rank(self.gap[i, j, t], self.gap[i, j, lo:t]))
                action_f = sample_action(agent.forecast_policy, state_f, agent.rng)
                a0, rem = divmod(action_f, 9)
                a1, a2 = divmod(rem, 3)
                tech = fc.technical_matrix(p, self._means[j], self._slopes[j],
                                           self._wlens[j], params.horizon)
                c = agent.blend_weights[a2]
                b_val = self.B[i, j, t]
                phat = c * b_val + (1.0 - c) * tech[a0, a1]
                agent.pending_forecasts[j].append(
                    fc.PendingForecast(t, state_f, action_f, phat, tech, b_val))

                avail = agent.portfolio.bonds - committed
                holdings_j = int(agent.portfolio.holdings[j])
                order = None
                if agent.role is AgentRole.PROPRIETARY:
                    prev_spread = self.spreads[j, t - 1] if t >= 1 else np.nan
                    if prev_spread == prev_spread:
                        rel_spread = min(abs(prev_spread) / p, cfg.spread_tilt_cap)
                    else:
                        rel_spread = 0.01
                    state_t = tr.trade_state(
                        phat, p, cfg.flat_threshold, s1_tercile,
                        agent.portfolio.bonds, self.bonds_hist[i, lo:t],
                        self.holdval_hist[i, j, t], self.holdval_hist[i, j, lo:t],
                        self.volumes[j, t - 1] if t >= 1 else 0.0,
                        self.volumes[j, max(0, t - h):t])
                    action_t = sample_action(agent.trade_policy, state_t, agent.rng)
                    ta0, ta1 = divmod(action_t, 3)
                    order = tr.build_order(i, j, ta0, ta1, phat, params.gesture,
                                           rel_spread, avail, holdings_j,
                                           cfg.trade_fraction)
                    agent.pending_trades[j].append(tr.PendingTrade(
                        t, state_t, action_t, phat, avail, holdings_j,
                        order_qty=order.quantity if order else 0))
                elif agent.role is AgentRole.NOISE:
                    order = override_noise(i, j, p, agent.rng, cfg.noise_price_band,
                                           cfg.trade_fraction, avail, holdings_j)
                elif agent.role is AgentRole.HERD_BEST:
                    order = override_herd(i, self.herd_best[j], avail, holdings_j)
                else:
                    order = override_herd(i, self.herd_worst[j], avail, holdings_j)
                if order is not None:
                    orders[i].append(order)
                    if order.side is Side.BID:
                        committed += order.price * order.quantity
        return orders

    # -- settlement and learning --------------------------------------------

    def _settle(self, t: int, books: list[OrderBook]) -> float:
        cfg = self.config
        fees = 0.0
        self._step_fills = {}
        for j, book in enumerate(books):
            result = book.clear(self.prices[j, t], t)
            self.prices[j, t + 1] = result.new_price
            self.volumes[j, t] = result.volume
            for trade in result.trades:
                value = trade.price * trade.quantity
                buyer = self.agents[trade.buyer_id]
                seller = self.agents[trade.seller_id]
                buyer.portfolio.bonds -= value
                buyer.portfolio.holdings[j] += trade.quantity
                seller.portfolio.bonds += value
                seller.portfolio.holdings[j] -= trade.quantity
                fees += apply_fee(buyer, value, cfg.broker_fee)
                fees += apply_fee(seller, value, cfg.broker_fee)
                self._register_fill(trade.buyer_id, j, t, trade.quantity, value)
                self._register_fill(trade.seller_id, j, t, trade.quantity, value)
                if self.order_log is not None:
                    for party in (trade.buyer_id, trade.seller_id):
                        key = (party, j)
                        self._step_fills[key] = self._step_fills.get(key, 0) + trade.quantity
        return fees

    def _register_fill(self, agent_id: int, stock: int, t: int, qty: int,
                       value: float) -> None:
        queue = self.agents[agent_id].pending_trades[stock]
        if queue and queue[-1].issue_step == t and queue[-1].order_qty > 0:
            queue[-1].filled_qty += qty
            queue[-1].fill_value += value

    def _resolve(self, t: int) -> None:
        cfg = self.config
        fee = cfg.broker_fee
        chi = cfg.trade_fraction
        for i, agent in enumerate(self.agents):
            tau = agent.params.horizon
            h = agent.params.memory
            lr = agent.params.learn_rate
            for j in range(cfg.n_stocks):
                realized = self.prices[j, t]
                queue = agent.pending_forecasts[j]
                if queue and queue[0].issue_step + tau == t:
                    pending = queue.pop(0)
                    n = self.err_n[i, j]
                    if n > 0:
                        history = self.err_vals[i, j, max(0, n - h):n]
                        err, a_star, _ = fc.hindsight_update_forecast(
                            agent.forecast_policy, pending, realized,
                            agent.blend_weights, lr, history)
                        self._after_update(agent.forecast_policy, pending.state)
                        if self.sample_updates and self.audit.n_updates % self.sample_updates == 0:
                            self.update_samples.append(ForecastUpdateSample(
                                pending.tech, pending.fundamental,
                                agent.blend_weights, realized, a_star))
                    else:
                        err = abs(pending.forecast - realized)
                    self.err_vals[i, j, n] = err
                    self.err_n[i, j] = n + 1
                queue = agent.pending_trades[j]
                if queue and queue[0].issue_step + tau == t:
                    pending = queue.pop(0)
                    clear_price = self.prices[j, pending.issue_step + 1]
                    n = self.diff_n[i, j]
                    if n > 0:
                        history = self.diff_vals[i, j, max(0, n - h):n]
                        diff, a_star, _ = tr.hindsight_update_trade(
                            agent.trade_policy, pending, realized, clear_price,
                            fee, chi, lr, history)
                        self._after_update(agent.trade_policy, pending.state)
                        if self.sample_updates and self.audit.n_updates % self.sample_updates == 0:
                            self.update_samples.append(TradeUpdateSample(
                                pending.forecast, clear_price, pending.bonds_at_issue,
                                pending.holdings_at_issue, realized, fee, chi,
                                a_star // 3))
                    else:
                        diff = tr.counterfactual_diff(pending, realized, clear_price,
                                                      fee, chi)
                    self.diff_vals[i, j, n] = diff
                    self.diff_n[i, j] = n + 1

    def _after_update(self, policy: np.ndarray, state: int) -> None:
        self.audit.n_updates += 1
        if self.audit_policies:
            row = policy[state]
            self.audit.max_row_dev = max(self.audit.max_row_dev,
                                         abs(float(row.sum()) - 1.0))
            self.audit.min_entry = min(self.audit.min_entry, float(row.min()))

    def _refresh_herd_memory(self, t: int, orders: list[list[Order]]) -> None:
        if not self._herding:
            return
        p_next = self.prices[:, t + 1]
        best_nav, worst_nav = -np.inf, np.inf
        best_i = worst_i = None
        for i, agent in enumerate(self.agents):
            if agent.portfolio.bankrupt:
                continue
            nav = net_asset_value(agent, p_next)
            if nav > best_nav:
                best_nav, best_i = nav, i
            if nav < worst_nav:
                worst_nav, worst_i = nav, i
        J = self.config.n_stocks
        self.herd_best = [None] * J
        self.herd_worst = [None] * J
        for source, memory in ((best_i, self.herd_best), (worst_i, self.herd_worst)):
            if source is None:
                continue
            for order in orders[source]:
                memory[order.stock_id] = order

    # -- main loop ----------------------------------------------------------

    def _step(self, t: int) -> None:
        cfg = self.config
        cons = self.conservation
        cons.bonds_start[t] = sum(a.portfolio.bonds for a in self.agents)
        p_now = self.prices[:, t]
        interest_sum = dividend_sum = 0.0
        for agent in self.agents:
            interest, dividend = accrue(agent, p_now, self.r_step, self.d_step)
            interest_sum += interest
            dividend_sum += dividend
        self._update_stats(t)

        orders = self._decide(t)
        books = [OrderBook(j) for j in range(cfg.n_stocks)]
        for i in range(cfg.n_agents):
            for order in orders[i]:
                books[order.stock_id].submit(order)
        for j, book in enumerate(books):
            spread = book.spread()
            self.spreads[j, t] = spread if spread is not None else np.nan

        fees = self._settle(t, books)
        cons.interest[t] = interest_sum
        cons.dividends[t] = dividend_sum
        cons.fees[t] = fees
        cons.bonds_settled[t] = sum(a.portfolio.bonds for a in self.agents)
        for j in range(cfg.n_stocks):
            cons.shares[t, j] = sum(int(a.portfolio.holdings[j]) for a in self.agents)

        self._resolve(t)

        p_next = self.prices[:, t + 1]
        n_bankrupt = 0
        for agent in self.agents:
            if check_bankruptcy(agent, p_next, t, cfg.year_len):
                n_bankrupt += 1
        self._refresh_herd_memory(t, orders)

        if self.order_log is not None:
            self._log_orders(t, orders, self._step_fills)

        if t >= cfg.learning_phase:
            k = t - cfg.learning_phase
            rec = self.record
            rec.prices[:, k] = p_next
            rec.volumes[:, k] = self.volumes[:, t]
            rec.spreads[:, k] = self.spreads[:, t]
            rec.bankrupt_counts[k] = n_bankrupt
            for i, agent in enumerate(self.agents):
                rec.navs[k, i] = net_asset_value(agent, p_next)
            interval = cfg.snapshot_interval
            if (interval > 0 and k % interval == 0) or k == cfg.n_steps - 1:
                self._snapshot(k)

    def _log_orders(self, t, orders, filled) -> None:
        for i in range(self.config.n_agents):
            for order in orders[i]:
                self.order_log.append((t, i, order.stock_id, order.side.value,
                                       order.price, order.quantity,
                                       filled.get((i, order.stock_id), 0)))

    def _snapshot(self, k: int) -> None:
        I = self.config.n_agents
        self.snapshots.append(PolicySnapshot(
            step=k,
            forecast=np.stack([a.forecast_policy.copy() for a in self.agents]),
            trade=np.stack([a.trade_policy.copy() for a in self.agents]),
            nav=self.record.navs[k].copy(),
            bankrupt=np.array([a.portfolio.bankrupt for a in self.agents]),
        ))

    def _reset_portfolios(self) -> None:
        cfg = self.config
        nav0 = cfg.init_bonds + cfg.init_shares * cfg.init_price * cfg.n_stocks
        for agent in self.agents:
            p = agent.portfolio
            p.bonds = cfg.init_bonds
            p.holdings[:] = cfg.init_shares
            p.ytd_peak_nav = nav0
            p.bankrupt = False
            p.bankrupt_step = -1
            p.fee_shortfall = 0.0
            agent.pending_forecasts = [[] for _ in range(cfg.n_stocks)]
            agent.pending_trades = [[] for _ in range(cfg.n_stocks)]
        self.herd_best = [None] * cfg.n_stocks
        self.herd_worst = [None] * cfg.n_stocks

    def run(self) -> RunResult:
        started = time.perf_counter()
        for t in range(self.total):
            if t == self.config.learning_phase and t > 0:
                self._reset_portfolios()
            self._step(t)
        return RunResult(
            config=self.config,
            run_index=self.run_index,
            seed=self.seed,
            record=self.record,
            agents=self.agents,
            snapshots=self.snapshots,
            fundamentals=self.fundamentals,
            conservation=self.conservation,
            audit=self.audit,
            update_samples=self.update_samples,
            order_log=self.order_log,
            wall_time=time.perf_counter() - started,
        )


def simulate(config: SimConfig, run_index: int = 0, **engine_kwargs) -> RunResult:
    """Run one replication; ``run_index`` offsets the master seed."""
    return MarketEngine(config, run_index, **engine_kwargs).run()


def simulate_all(config: SimConfig, **engine_kwargs) -> list[RunResult]:
    """Run all ``n_runs`` replications serially."""
    return [simulate(config, r, **engine_kwargs) for r in range(config.n_runs)]
