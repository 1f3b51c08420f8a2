"""Simulation configuration, scenario descriptors, and the deterministic RNG contract.

Every tunable constant of the simulator lives in :class:`SimConfig`.  A config
can be built in code, loaded from a flat ``key = value`` file (``#`` starts a
comment), or assembled by the CLI from a preset plus overrides.  All randomness
in a run is derived from ``master_seed`` through :func:`rng_stream`, which maps
``(master_seed, domain, index)`` triples to independent generators, so agent
loops can run in any order (or in parallel) without changing results.

Config file keys match the field names of :class:`SimConfig` (see
``FIELD_DOCS`` below); scenario settings use ``scenario``, ``scenario_p`` and
``scenario_zeta``.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates an invariant."""


class ScenarioKind(enum.Enum):
    BASELINE = "baseline"
    LEARN_RATE_FRACTION = "learn-rate-fraction"
    LEARN_RATE_GLOBAL = "learn-rate-global"
    HERD_BEST = "herd-best"
    HERD_WORST = "herd-worst"
    NOISE_TRADERS = "noise-traders"


class RngDomain(enum.IntEnum):
    """Top-level namespaces for random streams; see :func:`rng_stream`."""

    FUNDAMENTAL = 0
    AGENT_INIT = 1
    AGENT_DECISION = 2
    ANALYTICS = 3


@dataclass(frozen=True)
class Scenario:
    """Which behavioural override is active, for what slice of the population.

    ``p`` is the fraction of agents affected (ignored for the global
    learning-rate scaling) and ``zeta`` the learning-rate multiplier (ignored
    for herding and noise-trader scenarios).
    """

    kind: ScenarioKind = ScenarioKind.BASELINE
    p: float = 0.0
    zeta: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    """All global constants of one simulation.

    Counts: ``n_agents`` traders, ``n_stocks`` instruments, ``n_steps``
    recorded trading days, ``n_runs`` independent replications.  The calendar
    is step-based: ``year_len``/``month_len``/``week_len`` days.  The recorded
    phase is preceded by ``learning_phase`` warm-up steps after which agent
    portfolios are reset (policies are kept).
    """

    n_agents: int = 100
    n_stocks: int = 1
    n_steps: int = 500
    n_runs: int = 1
    year_len: int = 286
    month_len: int = 21
    week_len: int = 5
    init_price: float = 100.0
    broker_fee: float = 0.001
    riskfree_annual: float = 0.01
    dividend_annual: float = 0.02
    learning_phase: int = 1000
    crash_threshold: float = 0.20
    master_seed: int = 0
    scenario: Scenario = field(default_factory=Scenario)

    # Initial endowment (the model needs both sides tradable from step one;
    # the equity-heavy split keeps drawdown risk comparable to price risk).
    init_bonds: float = 7_500.0
    init_shares: int = 175

    # Fundamental value process: geometric random walk with rare jumps.
    fundamental_vol: float = 0.005
    fundamental_jump_prob: float = 0.01
    fundamental_jump_scale: float = 0.05

    # Per-agent cointegrated approximation of the fundamental series.
    coint_bias_range: float = 0.05
    coint_phi: float = 0.9
    coint_sigma: float = 0.01

    # Trading behaviour constants.
    trade_fraction: float = 0.5
    flat_threshold: float = 0.005
    noise_price_band: float = 0.05
    # The gesture tilt scales with the previous relative spread, clamped to
    # [0, spread_tilt_cap]: a crossed book needs no concession, and an
    # unbounded one would let pathological spreads feed back into prices.
    spread_tilt_cap: float = 0.10

    # Policy snapshot cadence (steps of the recorded phase; 0 disables all
    # but the final snapshot).
    snapshot_interval: int = 50

    @property
    def total_steps(self) -> int:
        return self.learning_phase + self.n_steps

    @property
    def horizon_max(self) -> int:
        return 6 * self.month_len

    @property
    def riskfree_step(self) -> float:
        return (1.0 + self.riskfree_annual) ** (1.0 / self.year_len) - 1.0

    @property
    def dividend_step(self) -> float:
        return (1.0 + self.dividend_annual) ** (1.0 / self.year_len) - 1.0


# One-line documentation per configuration key, also used by the CLI help.
FIELD_DOCS = {
    "n_agents": "number of agents I",
    "n_stocks": "number of stocks J",
    "n_steps": "recorded simulation steps T (days)",
    "n_runs": "number of Monte Carlo runs S",
    "year_len": "trading days per year",
    "month_len": "trading days per month",
    "week_len": "trading days per week",
    "init_price": "initial market price of every stock",
    "broker_fee": "proportional fee charged to each side of a trade",
    "riskfree_annual": "annual risk-free rate accrued on cash",
    "dividend_annual": "annual dividend yield accrued on equity",
    "learning_phase": "warm-up steps before the recorded phase",
    "crash_threshold": "relative drop defining a market crash",
    "master_seed": "root seed for all random streams",
    "scenario": "behavioural scenario (see ScenarioKind values)",
    "scenario_p": "fraction of agents affected by the scenario",
    "scenario_zeta": "learning-rate multiplier for learning-rate scenarios",
    "init_bonds": "initial risk-free cash per agent",
    "init_shares": "initial share count per agent per stock",
    "fundamental_vol": "per-step log volatility of the fundamental series",
    "fundamental_jump_prob": "per-step probability of a fundamental jump",
    "fundamental_jump_scale": "log magnitude of a fundamental jump",
    "coint_bias_range": "half-width of the per-agent fundamental bias",
    "coint_phi": "AR(1) persistence of the cointegration noise",
    "coint_sigma": "innovation scale of the cointegration noise",
    "trade_fraction": "fraction of cash/holdings committed per order",
    "flat_threshold": "dead zone separating flat from up/down forecasts",
    "noise_price_band": "half-width of the noise traders' price band",
    "snapshot_interval": "steps between policy snapshots (0 = final only)",
    "spread_tilt_cap": "upper clamp on the relative spread used in limit tilts",
}

_INT_FIELDS = {
    "n_agents", "n_stocks", "n_steps", "n_runs", "year_len", "month_len",
    "week_len", "learning_phase", "master_seed", "init_shares",
    "snapshot_interval",
}


def validate(config: SimConfig) -> SimConfig:
    """Return ``config`` unchanged iff every invariant holds.

    Raises :class:`ConfigError` naming the violated invariant otherwise.
    """
    c = config
    if c.n_agents < 2:
        raise ConfigError(f"n_agents must be >= 2 (trading needs counterparties), got {c.n_agents}")
    if c.n_stocks < 1:
        raise ConfigError(f"n_stocks must be >= 1, got {c.n_stocks}")
    if min(c.week_len, c.month_len, c.year_len) < 1:
        raise ConfigError("calendar lengths must be positive")
    if c.week_len > c.month_len or c.month_len > c.year_len:
        raise ConfigError("calendar must satisfy week_len <= month_len <= year_len")
    # Memory intervals are drawn from U{week_len, T - tau - 2*week_len}; the
    # longest legal horizon tau = 6*month_len must leave that range nonempty.
    t_min = 6 * c.month_len + 3 * c.week_len
    if c.n_steps < t_min:
        raise ConfigError(
            f"n_steps={c.n_steps} too short: memory-interval draw needs "
            f"n_steps >= 6*month_len + 3*week_len = {t_min}")
    if c.n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {c.n_runs}")
    if c.learning_phase < 0:
        raise ConfigError("learning_phase must be >= 0")
    if c.init_price <= 0:
        raise ConfigError(f"init_price must be positive, got {c.init_price}")
    for name in ("broker_fee", "riskfree_annual", "dividend_annual", "crash_threshold"):
        v = getattr(c, name)
        if not 0.0 <= v < 1.0:
            raise ConfigError(f"{name} must lie in [0, 1), got {v}")
    if c.master_seed < 0:
        raise ConfigError("master_seed must be non-negative")
    if c.init_bonds < 0 or c.init_shares < 0:
        raise ConfigError("initial endowment must be non-negative")
    if not 0.0 < c.trade_fraction <= 1.0:
        raise ConfigError(f"trade_fraction must lie in (0, 1], got {c.trade_fraction}")
    if c.flat_threshold < 0:
        raise ConfigError("flat_threshold must be >= 0")
    if c.spread_tilt_cap < 0:
        raise ConfigError("spread_tilt_cap must be >= 0")
    if c.fundamental_vol < 0 or c.coint_sigma < 0:
        raise ConfigError("volatility parameters must be >= 0")
    if not 0.0 <= c.fundamental_jump_prob < 1.0:
        raise ConfigError("fundamental_jump_prob must lie in [0, 1)")
    if not 0.0 <= c.coint_phi < 1.0:
        raise ConfigError(f"coint_phi must lie in [0, 1) for a stationary spread, got {c.coint_phi}")
    if not 0.0 <= c.scenario.p <= 1.0:
        raise ConfigError(f"scenario p must lie in [0, 1], got {c.scenario.p}")
    if c.scenario.zeta <= 0:
        raise ConfigError(f"scenario zeta must be positive, got {c.scenario.zeta}")
    if c.snapshot_interval < 0:
        raise ConfigError("snapshot_interval must be >= 0")
    return config


def rng_stream(master_seed: int, domain: RngDomain, index: int) -> np.random.Generator:
    """Independent generator for the ``(master_seed, domain, index)`` triple.

    The same triple always yields an identical stream; distinct triples yield
    statistically independent streams (PCG64 seeded through SeedSequence
    spawn keys).
    """
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(domain), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


# --------------------------------------------------------------------------
# Flat key = value config files
# --------------------------------------------------------------------------

def _parse_scalar(name: str, raw: str):
    raw = raw.strip()
    if name == "scenario":
        try:
            return ScenarioKind(raw)
        except ValueError:
            valid = ", ".join(k.value for k in ScenarioKind)
            raise ConfigError(f"unknown scenario {raw!r}; expected one of: {valid}")
    if name in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {name!r} expects an integer, got {raw!r}")
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {name!r} expects a number, got {raw!r}")


def config_from_mapping(pairs: dict) -> SimConfig:
    """Build a validated :class:`SimConfig` from string key/value pairs."""
    known = {f.name for f in dataclasses.fields(SimConfig)} - {"scenario"}
    kwargs = {}
    scen = {"kind": ScenarioKind.BASELINE, "p": 0.0, "zeta": 1.0}
    for name, raw in pairs.items():
        value = _parse_scalar(name, str(raw)) if isinstance(raw, str) else raw
        if name == "scenario":
            scen["kind"] = value if isinstance(value, ScenarioKind) else ScenarioKind(value)
        elif name == "scenario_p":
            scen["p"] = float(value)
        elif name == "scenario_zeta":
            scen["zeta"] = float(value)
        elif name in known:
            kwargs[name] = int(value) if name in _INT_FIELDS else value
        else:
            raise ConfigError(f"unknown configuration key {name!r}")
    kwargs["scenario"] = Scenario(**scen)
    return validate(SimConfig(**kwargs))


def load_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    """Load a flat ``key = value`` config file, applying ``overrides`` on top."""
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        name, raw = line.split("=", 1)
        pairs[name.strip()] = raw.strip()
    if overrides:
        pairs.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(pairs)


def config_to_mapping(config: SimConfig) -> dict:
    """Flatten a config to the key/value form used by files and run_meta."""
    out = {}
    for f in dataclasses.fields(SimConfig):
        if f.name == "scenario":
            out["scenario"] = config.scenario.kind.value
            out["scenario_p"] = config.scenario.p
            out["scenario_zeta"] = config.scenario.zeta
        else:
            out[f.name] = getattr(config, f.name)
    return out


def save_config(config: SimConfig, path: str | Path) -> None:
    lines = [f"{k} = {v}" for k, v in config_to_mapping(config).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
