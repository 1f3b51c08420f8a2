import numpy as np
import pytest

from rlmarket.config import (ConfigError, RngDomain, Scenario, ScenarioKind,
                             SimConfig, config_from_mapping, config_to_mapping,
                             load_config, rng_stream, save_config, validate)


def test_paper_scale_config_accepted():
    cfg = SimConfig(n_agents=500, n_stocks=1, n_steps=2875, n_runs=20)
    assert validate(cfg) is cfg


def test_single_agent_rejected():
    with pytest.raises(ConfigError, match="counterpart"):
        validate(SimConfig(n_agents=1))


def test_too_short_horizon_rejected():
    # 100 < 6*21 + 3*5: the memory-interval draw would be empty.
    with pytest.raises(ConfigError, match="n_steps"):
        validate(SimConfig(n_steps=100))


def test_rate_bounds_checked():
    with pytest.raises(ConfigError, match="broker_fee"):
        validate(SimConfig(broker_fee=1.5))


def test_scenario_bounds_checked():
    bad = SimConfig(scenario=Scenario(ScenarioKind.NOISE_TRADERS, p=1.5))
    with pytest.raises(ConfigError, match="scenario p"):
        validate(bad)


def test_step_rates():
    cfg = SimConfig()
    assert cfg.riskfree_step == pytest.approx(3.479e-5, rel=1e-3)
    assert (1 + cfg.riskfree_step) ** cfg.year_len == pytest.approx(1.01, abs=1e-9)
    assert (1 + cfg.dividend_step) ** cfg.year_len == pytest.approx(1.02, abs=1e-9)


class TestRngStream:
    def test_same_triple_identical(self):
        a = rng_stream(42, RngDomain.AGENT_DECISION, 7).random(64)
        b = rng_stream(42, RngDomain.AGENT_DECISION, 7).random(64)
        assert np.array_equal(a, b)

    def test_different_index_differs(self):
        a = rng_stream(42, RngDomain.AGENT_DECISION, 7).random(64)
        b = rng_stream(42, RngDomain.AGENT_DECISION, 8).random(64)
        assert not np.array_equal(a, b)

    def test_different_seed_differs(self):
        a = rng_stream(42, RngDomain.FUNDAMENTAL, 0).random(64)
        b = rng_stream(43, RngDomain.FUNDAMENTAL, 0).random(64)
        assert not np.array_equal(a, b)

    def test_different_domain_differs(self):
        a = rng_stream(42, RngDomain.FUNDAMENTAL, 0).random(64)
        b = rng_stream(42, RngDomain.AGENT_INIT, 0).random(64)
        assert not np.array_equal(a, b)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = SimConfig(n_agents=50, n_steps=200, master_seed=9,
                        scenario=Scenario(ScenarioKind.HERD_BEST, 0.4, 1.0))
        path = tmp_path / "sim.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_comments_and_overrides(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("n_agents = 40  # population\nn_steps = 150\n# full line comment\n")
        cfg = load_config(path, overrides={"n_steps": "160"})
        assert cfg.n_agents == 40
        assert cfg.n_steps == 160

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("not_a_key = 3\n")
        with pytest.raises(ConfigError, match="not_a_key"):
            load_config(path)

    def test_bad_syntax_rejected(self, tmp_path):
        path = tmp_path / "sim.cfg"
        path.write_text("n_agents 40\n")
        with pytest.raises(ConfigError, match="key = value"):
            load_config(path)

    def test_mapping_round_trip(self):
        cfg = SimConfig(scenario=Scenario(ScenarioKind.NOISE_TRADERS, 0.2, 1.0))
        assert config_from_mapping(config_to_mapping(cfg)) == cfg
