import numpy as np
import pytest

from rlmarket.config import RngDomain, rng_stream
from rlmarket.fundamentals import (CointegrationRule, cointegrate, cointegrated_path,
                                   draw_rule, export_csv, generate_fundamental)


def make_rng(seed=1, idx=0):
    return rng_stream(seed, RngDomain.FUNDAMENTAL, idx)


class TestGenerateFundamental:
    def test_degenerate_parameters_give_constant_series(self):
        series = generate_fundamental(500, 100.0, vol=0.0, jump_prob=0.0,
                                      jump_scale=0.05, rng=make_rng())
        assert np.all(series.values == 100.0)

    def test_same_seed_identical(self):
        a = generate_fundamental(300, 100.0, 0.005, 0.01, 0.05, make_rng(5))
        b = generate_fundamental(300, 100.0, 0.005, 0.01, 0.05, make_rng(5))
        assert np.array_equal(a.values, b.values)

    def test_increment_scale_matches_parameter(self):
        series = generate_fundamental(2876, 100.0, 0.005, 0.0, 0.05, make_rng(7))
        increments = np.diff(np.log(series.values))
        assert np.std(increments) == pytest.approx(0.005, rel=0.10)

    def test_starts_at_init_price_and_positive(self):
        series = generate_fundamental(1000, 100.0, 0.01, 0.05, 0.10, make_rng(3))
        assert series.values[0] == pytest.approx(100.0)
        assert np.all(series.values > 0)

    def test_jumps_widen_the_tails(self):
        calm = generate_fundamental(4000, 100.0, 0.005, 0.0, 0.05, make_rng(11))
        jumpy = generate_fundamental(4000, 100.0, 0.005, 0.05, 0.05, make_rng(11))
        calm_inc = np.abs(np.diff(np.log(calm.values)))
        jumpy_inc = np.abs(np.diff(np.log(jumpy.values)))
        assert (jumpy_inc > 0.03).sum() > (calm_inc > 0.03).sum()


def identity_rule(length):
    return CointegrationRule(bias=0.0, lag=0, phi=0.9, sigma=0.0,
                             noise=np.zeros(length))


class TestCointegrate:
    def test_identity_parameters_reproduce_series(self):
        series = generate_fundamental(200, 100.0, 0.01, 0.0, 0.0, make_rng())
        rule = identity_rule(200)
        for t in (0, 50, 199):
            assert cointegrate(series, rule, t) == pytest.approx(series.values[t])

    def test_bias_shifts_level(self):
        series = generate_fundamental(10, 100.0, 0.0, 0.0, 0.0, make_rng())
        rule = CointegrationRule(0.05, 0, 0.9, 0.0, np.zeros(10))
        assert cointegrate(series, rule, 3) == pytest.approx(105.0)

    def test_lag_delays_information(self):
        series = generate_fundamental(50, 100.0, 0.01, 0.0, 0.0, make_rng(2))
        rule = CointegrationRule(0.0, 5, 0.9, 0.0, np.zeros(50))
        assert cointegrate(series, rule, 20) == pytest.approx(series.values[15])

    def test_long_run_mean_of_log_spread(self):
        length = 4000
        series = generate_fundamental(length, 100.0, 0.005, 0.0, 0.0, make_rng(4))
        rule = draw_rule(length, 0.05, 5, 0.9, 0.01, make_rng(13, idx=1))
        path = cointegrated_path(series, rule)
        lagged = series.values[np.maximum(np.arange(length) - rule.lag, 0)]
        spread = np.log(path) - np.log(lagged)
        # AR(1) noise is zero-mean: the spread mean is log(1 + bias).  The
        # standard error of an AR(1) mean carries a (1+phi)/(1-phi) factor.
        se = spread.std(ddof=1) * np.sqrt((1 + rule.phi) / (1 - rule.phi) / length)
        assert abs(spread.mean() - np.log(1 + rule.bias)) < 3 * se

    def test_spread_variance_matches_ar1(self):
        length = 4000
        series = generate_fundamental(length, 100.0, 0.005, 0.0, 0.0, make_rng(6))
        rule = draw_rule(length, 0.05, 5, 0.9, 0.01, make_rng(21, idx=1))
        path = cointegrated_path(series, rule)
        lagged = series.values[np.maximum(np.arange(length) - rule.lag, 0)]
        spread = np.log(path) - np.log(lagged)
        expected_var = rule.sigma ** 2 / (1 - rule.phi ** 2)
        assert spread.var() == pytest.approx(expected_var, rel=0.25)

    def test_path_positive(self):
        length = 2000
        series = generate_fundamental(length, 100.0, 0.01, 0.02, 0.05, make_rng(8))
        rule = draw_rule(length, 0.05, 5, 0.9, 0.01, make_rng(9, idx=1))
        assert np.all(cointegrated_path(series, rule) > 0)


def test_rule_draws_within_ranges():
    rng = make_rng(17)
    for _ in range(50):
        rule = draw_rule(100, 0.05, 5, 0.9, 0.01, rng)
        assert -0.05 <= rule.bias <= 0.05
        assert 0 <= rule.lag <= 5


def test_export_csv(tmp_path):
    series = generate_fundamental(5, 100.0, 0.0, 0.0, 0.0, make_rng())
    path = tmp_path / "fund.csv"
    export_csv(series, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,value"
    assert len(lines) == 6
    assert lines[1].startswith("0,100.0")
