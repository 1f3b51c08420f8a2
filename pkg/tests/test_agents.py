import numpy as np
import pytest

from rlmarket.agents import (AgentRole, accrue, apply_fee, check_bankruptcy,
                             init_agents, net_asset_value)
from rlmarket.config import Scenario, ScenarioKind, SimConfig


def desk_config(**overrides):
    base = dict(n_agents=100, n_steps=500, n_runs=1, learning_phase=300, master_seed=3)
    base.update(overrides)
    return SimConfig(**base)


@pytest.fixture(scope="module")
def population():
    cfg = desk_config()
    return cfg, init_agents(cfg, cfg.total_steps + 1)


class TestInitAgents:
    def test_parameter_ranges(self, population):
        cfg, agents = population
        for a in agents:
            p = a.params
            assert 0.50 <= p.drawdown_limit <= 0.60
            assert 0.0 <= p.reflexivity <= 1.0
            assert cfg.week_len <= p.horizon <= 6 * cfg.month_len
            assert cfg.week_len <= p.trading_window <= p.horizon
            assert cfg.week_len <= p.memory <= cfg.n_steps - p.horizon - 2 * cfg.week_len
            assert 0.2 <= p.gesture <= 0.8
            assert 0.05 <= p.learn_rate <= 0.20

    def test_initial_portfolio_and_policies(self, population):
        cfg, agents = population
        for a in agents[:5]:
            assert a.portfolio.bonds == cfg.init_bonds
            assert np.all(a.portfolio.holdings == cfg.init_shares)
            assert a.forecast_policy.shape == (27, 27)
            assert a.trade_policy.shape == (108, 9)
            np.testing.assert_allclose(a.forecast_policy, 1 / 27)
            np.testing.assert_allclose(a.trade_policy, 1 / 9)

    def test_population_independent_of_build_order(self):
        cfg = desk_config()
        a = init_agents(cfg, cfg.total_steps + 1)
        b = init_agents(cfg, cfg.total_steps + 1)
        for x, y in zip(a, b):
            assert x.params == y.params

    def test_learn_rate_fraction_scenario_counts(self):
        cfg = desk_config(n_agents=500,
                          scenario=Scenario(ScenarioKind.LEARN_RATE_FRACTION, 0.2, 2.0))
        agents = init_agents(cfg, cfg.total_steps + 1)
        scaled = [a for a in agents if a.params.learn_rate > 0.20]
        baseline = [a for a in agents if a.params.learn_rate <= 0.20]
        assert len(scaled) + len(baseline) == 500
        # exactly round(p*I) agents scaled; scaled rates live in (0.10, 0.40)
        assert len(scaled) == 100
        assert all(0.10 < a.params.learn_rate <= 0.40 for a in scaled)
        assert all(0.05 <= a.params.learn_rate <= 0.20 for a in baseline)
        assert all(a.role is AgentRole.PROPRIETARY for a in agents)

    def test_role_scenario_counts(self):
        cfg = desk_config(scenario=Scenario(ScenarioKind.NOISE_TRADERS, 0.4, 1.0))
        agents = init_agents(cfg, cfg.total_steps + 1)
        assert sum(a.role is AgentRole.NOISE for a in agents) == 40

    def test_p_zero_scenario_is_baseline_population(self):
        base = init_agents(desk_config(), desk_config().total_steps + 1)
        herd = init_agents(desk_config(scenario=Scenario(ScenarioKind.HERD_WORST, 0.0, 1.0)),
                           desk_config().total_steps + 1)
        for x, y in zip(base, herd):
            assert x.params == y.params
            assert y.role is AgentRole.PROPRIETARY


class TestAccounting:
    def test_net_asset_value(self, population):
        _, agents = population
        a = agents[0]
        a.portfolio.bonds = 1000.0
        a.portfolio.holdings[0] = 5
        assert net_asset_value(a, np.array([100.0])) == pytest.approx(1500.0)
        a.portfolio.holdings[0] = 0
        assert net_asset_value(a, np.array([100.0])) == pytest.approx(1000.0)
        a.portfolio.bonds = 0.0
        a.portfolio.holdings[0] = 10
        assert net_asset_value(a, np.array([79.0])) == pytest.approx(790.0)

    def test_accrue_rates_and_compounding(self, population):
        cfg, agents = population
        a = agents[1]
        a.portfolio.bonds = 1000.0
        a.portfolio.holdings[0] = 0
        for _ in range(cfg.year_len):
            accrue(a, np.array([100.0]), cfg.riskfree_step, cfg.dividend_step)
        assert a.portfolio.bonds == pytest.approx(1010.0, abs=1e-6)

    def test_accrue_zero_portfolio(self, population):
        cfg, agents = population
        a = agents[2]
        a.portfolio.bonds = 0.0
        a.portfolio.holdings[0] = 0
        interest, dividend = accrue(a, np.array([100.0]), cfg.riskfree_step, cfg.dividend_step)
        assert interest == 0.0 and dividend == 0.0
        assert a.portfolio.bonds == 0.0

    def test_dividends_paid_in_cash(self, population):
        cfg, agents = population
        a = agents[3]
        a.portfolio.bonds = 0.0
        a.portfolio.holdings[0] = 100
        _, dividend = accrue(a, np.array([100.0]), cfg.riskfree_step, cfg.dividend_step)
        assert dividend == pytest.approx(10_000 * cfg.dividend_step)
        assert a.portfolio.bonds == pytest.approx(dividend)

    def test_apply_fee(self, population):
        _, agents = population
        a = agents[4]
        a.portfolio.bonds = 100.0
        a.portfolio.fee_shortfall = 0.0
        paid = apply_fee(a, 1000.0, 0.001)
        assert paid == pytest.approx(1.0)
        assert a.portfolio.bonds == pytest.approx(99.0)
        assert apply_fee(a, 0.0, 0.001) == 0.0

    def test_fee_floors_at_zero_and_counts_shortfall(self, population):
        _, agents = population
        a = agents[5]
        a.portfolio.bonds = 0.3
        a.portfolio.fee_shortfall = 0.0
        paid = apply_fee(a, 1000.0, 0.001)
        assert paid == pytest.approx(0.3)
        assert a.portfolio.bonds == 0.0
        assert a.portfolio.fee_shortfall == pytest.approx(0.7)
        a.portfolio.holdings[:] = 0
        assert net_asset_value(a, np.array([100.0])) == pytest.approx(-0.7)

    def test_fee_on_midpoint_trade(self, population):
        # both sides of a 100.5 x 5 trade pay 0.5025
        _, agents = population
        a = agents[6]
        a.portfolio.bonds = 1000.0
        paid = apply_fee(a, 100.5 * 5, 0.001)
        assert paid == pytest.approx(0.5025)


class TestBankruptcy:
    def test_threshold(self, population):
        cfg, agents = population
        a = agents[8]
        a.portfolio.bankrupt = False
        a.portfolio.fee_shortfall = 0.0
        a.portfolio.holdings[0] = 0
        a.portfolio.ytd_peak_nav = 1000.0
        limit = a.params.drawdown_limit
        # place NAV just below / above the agent's own threshold
        a.portfolio.bonds = (1 - limit) * 1000.0 - 1.0
        assert check_bankruptcy(a, np.array([100.0]), step=1, year_len=286)
        a.portfolio.bankrupt = False
        a.portfolio.bonds = (1 - limit) * 1000.0 + 1.0
        a.portfolio.ytd_peak_nav = 1000.0
        assert not check_bankruptcy(a, np.array([100.0]), step=1, year_len=286)

    def test_running_peak_updates(self, population):
        cfg, agents = population
        a = agents[9]
        a.portfolio.bankrupt = False
        a.portfolio.fee_shortfall = 0.0
        a.portfolio.holdings[0] = 0
        a.portfolio.bonds = 1000.0
        a.portfolio.ytd_peak_nav = 1000.0
        a.portfolio.bonds = 1200.0
        check_bankruptcy(a, np.array([100.0]), step=5, year_len=286)
        assert a.portfolio.ytd_peak_nav == pytest.approx(1200.0)

    def test_peak_resets_on_year_boundary(self, population):
        cfg, agents = population
        a = agents[10]
        a.portfolio.bankrupt = False
        a.portfolio.fee_shortfall = 0.0
        a.portfolio.holdings[0] = 0
        a.portfolio.bonds = 800.0
        a.portfolio.ytd_peak_nav = 2000.0
        check_bankruptcy(a, np.array([100.0]), step=286, year_len=286)
        assert a.portfolio.ytd_peak_nav == pytest.approx(800.0)
        assert not a.portfolio.bankrupt

    def test_flag_absorbing(self, population):
        _, agents = population
        a = agents[11]
        a.portfolio.bankrupt = False
        a.portfolio.fee_shortfall = 0.0
        a.portfolio.holdings[0] = 0
        a.portfolio.bonds = 1.0
        a.portfolio.ytd_peak_nav = 1000.0
        assert check_bankruptcy(a, np.array([100.0]), step=3, year_len=286)
        step_flagged = a.portfolio.bankrupt_step
        a.portfolio.bonds = 10_000.0
        assert check_bankruptcy(a, np.array([100.0]), step=4, year_len=286)
        assert a.portfolio.bankrupt_step == step_flagged
