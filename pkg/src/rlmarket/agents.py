"""Agent initialisation, portfolio accounting, and bankruptcy rules.

Each agent draws its behavioural parameters once from its own random stream,
holds a cash ("bonds") account plus integer stock positions, and is declared
bankrupt when its net asset value falls below a fraction of its year-to-date
peak.  Bankrupt agents stop trading; their assets are frozen but keep accruing
interest.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .config import RngDomain, Scenario, ScenarioKind, SimConfig, rng_stream
from .fundamentals import CointegrationRule, draw_rule
from .policy import uniform_policy

N_FORECAST_STATES = 27
N_FORECAST_ACTIONS = 27
N_TRADE_STATES = 108
N_TRADE_ACTIONS = 9


class AgentRole(enum.Enum):
    PROPRIETARY = "proprietary"
    HERD_BEST = "herd-best"
    HERD_WORST = "herd-worst"
    NOISE = "noise"


@dataclass(frozen=True)
class AgentParams:
    """Immutable per-agent draws.

    drawdown_limit ~ U(0.50, 0.60); reflexivity ~ U(0, 1);
    horizon ~ U{week, 6 months}; trading_window ~ U{week, horizon};
    memory ~ U{week, T - horizon - 2 weeks}; gesture ~ U(0.2, 0.8);
    learn_rate ~ U(0.05, 0.20) times the scenario multiplier if selected.
    """

    drawdown_limit: float
    reflexivity: float
    horizon: int
    trading_window: int
    memory: int
    gesture: float
    learn_rate: float


@dataclass
class Portfolio:
    bonds: float
    holdings: np.ndarray            # integer share counts, one per stock
    ytd_peak_nav: float
    bankrupt: bool = False
    bankrupt_step: int = -1
    fee_shortfall: float = 0.0      # fees owed but not payable; counts against NAV


@dataclass
class AgentState:
    agent_id: int
    params: AgentParams
    role: AgentRole
    portfolio: Portfolio
    forecast_policy: np.ndarray
    trade_policy: np.ndarray
    coint_rules: list[CointegrationRule]
    rng: np.random.Generator
    # Pending decisions keyed by stock, resolved `horizon` steps after issue.
    pending_forecasts: list[list] = field(default_factory=list)
    pending_trades: list[list] = field(default_factory=list)
    # Weight on the fundamental estimate per a2 level (precomputed from rho).
    blend_weights: np.ndarray | None = None


def draw_params(config: SimConfig, rng: np.random.Generator) -> AgentParams:
    l = rng.uniform(0.50, 0.60)
    rho = rng.uniform(0.0, 1.0)
    tau = int(rng.integers(config.week_len, config.horizon_max + 1))
    w = int(rng.integers(config.week_len, tau + 1))
    h_hi = config.n_steps - tau - 2 * config.week_len
    h = int(rng.integers(config.week_len, h_hi + 1))
    g = rng.uniform(0.2, 0.8)
    alpha = rng.uniform(0.05, 0.20)
    return AgentParams(l, rho, tau, w, h, g, alpha)


def _blend_weights(rho: float) -> np.ndarray:
    """Fundamental weight c per a2 level: rho * {0.5, 1, min(1/rho, 1.5)}, clipped."""
    if rho <= 0.0:
        return np.zeros(3)
    mult = np.array([0.5, 1.0, min(1.0 / rho, 1.5)])
    return np.clip(rho * mult, 0.0, 1.0)


def init_agents(config: SimConfig, series_length: int) -> list[AgentState]:
    """Create the agent population for one run.

    Parameter draws use stream (seed, AGENT_INIT, agent_id) so the population
    is identical whatever order agents are built in.  Scenario role selection
    and learning-rate scaling use the dedicated stream (seed, AGENT_INIT,
    n_agents), leaving per-agent draws untouched -- a scenario with p = 0 is
    therefore indistinguishable from the baseline.
    """
    agents = []
    for i in range(config.n_agents):
        init_rng = rng_stream(config.master_seed, RngDomain.AGENT_INIT, i)
        params = draw_params(config, init_rng)
        rules = [draw_rule(series_length, config.coint_bias_range, config.week_len,
                           config.coint_phi, config.coint_sigma, init_rng)
                 for _ in range(config.n_stocks)]
        portfolio = Portfolio(
            bonds=config.init_bonds,
            holdings=np.full(config.n_stocks, config.init_shares, dtype=np.int64),
            ytd_peak_nav=config.init_bonds + config.init_shares * config.init_price * config.n_stocks,
        )
        agents.append(AgentState(
            agent_id=i,
            params=params,
            role=AgentRole.PROPRIETARY,
            portfolio=portfolio,
            forecast_policy=uniform_policy(N_FORECAST_STATES, N_FORECAST_ACTIONS),
            trade_policy=uniform_policy(N_TRADE_STATES, N_TRADE_ACTIONS),
            coint_rules=rules,
            rng=rng_stream(config.master_seed, RngDomain.AGENT_DECISION, i),
            pending_forecasts=[[] for _ in range(config.n_stocks)],
            pending_trades=[[] for _ in range(config.n_stocks)],
            blend_weights=_blend_weights(params.reflexivity),
        ))
    _apply_scenario(config, agents)
    return agents


def _apply_scenario(config: SimConfig, agents: list[AgentState]) -> None:
    scen = config.scenario
    if scen.kind is ScenarioKind.BASELINE:
        return
    if scen.kind is ScenarioKind.LEARN_RATE_GLOBAL:
        for a in agents:
            a.params = _scale_learn_rate(a.params, scen.zeta)
        return
    k = int(round(scen.p * len(agents)))
    if k == 0:
        return
    picker = rng_stream(config.master_seed, RngDomain.AGENT_INIT, len(agents))
    chosen = picker.choice(len(agents), size=k, replace=False)
    role = {
        ScenarioKind.HERD_BEST: AgentRole.HERD_BEST,
        ScenarioKind.HERD_WORST: AgentRole.HERD_WORST,
        ScenarioKind.NOISE_TRADERS: AgentRole.NOISE,
    }.get(scen.kind)
    for i in chosen:
        if scen.kind is ScenarioKind.LEARN_RATE_FRACTION:
            agents[i].params = _scale_learn_rate(agents[i].params, scen.zeta)
        else:
            agents[i].role = role


def _scale_learn_rate(params: AgentParams, zeta: float) -> AgentParams:
    return AgentParams(params.drawdown_limit, params.reflexivity, params.horizon,
                       params.trading_window, params.memory, params.gesture,
                       params.learn_rate * zeta)


def net_asset_value(agent: AgentState, prices: np.ndarray) -> float:
    """Cash plus mark-to-market equity, net of any unpaid fee shortfall."""
    p = agent.portfolio
    return p.bonds + float(p.holdings @ prices) - p.fee_shortfall


def accrue(agent: AgentState, prices: np.ndarray, riskfree_step: float,
           dividend_step: float) -> tuple[float, float]:
    """Apply one step of interest on cash and dividends on equity.

    Returns the (interest, dividend) amounts credited, both paid into cash.
    """
    p = agent.portfolio
    interest = p.bonds * riskfree_step
    dividend = dividend_step * float(p.holdings @ prices)
    p.bonds += interest + dividend
    return interest, dividend


def apply_fee(agent: AgentState, trade_value: float, fee_rate: float) -> float:
    """Charge the proportional broker fee; returns the amount actually paid.

    If cash cannot cover the fee it floors at zero and the shortfall is
    remembered so it still counts against the drawdown.
    """
    p = agent.portfolio
    fee = fee_rate * trade_value
    paid = min(fee, p.bonds)
    p.bonds -= paid
    p.fee_shortfall += fee - paid
    return paid


def check_bankruptcy(agent: AgentState, prices: np.ndarray, step: int,
                     year_len: int) -> bool:
    """Update the year-to-date peak and flag bankruptcy when breached.

    The peak is the running-max NAV since the last year boundary (it resets
    to the current NAV whenever ``step`` is a multiple of ``year_len``).  The
    flag is absorbing.  Returns the current bankrupt state.
    """
    p = agent.portfolio
    if p.bankrupt:
        return True
    nav = net_asset_value(agent, prices)
    if step % year_len == 0:
        p.ytd_peak_nav = nav
    else:
        p.ytd_peak_nav = max(p.ytd_peak_nav, nav)
    if nav < (1.0 - agent.params.drawdown_limit) * p.ytd_peak_nav:
        p.bankrupt = True
        p.bankrupt_step = step
    return p.bankrupt
