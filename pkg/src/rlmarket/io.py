"""Run artifacts on disk: prices/agents/fundamentals CSV, policy snapshots, figures.

Float fields are written with ``repr`` so identical simulations produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import analytics
from .config import SimConfig, config_to_mapping
from .simulator import PolicySnapshot, RunResult

PRICES_FILE = "prices.csv"
AGENTS_FILE = "agents.csv"
FUNDAMENTALS_FILE = "fundamentals.csv"
ORDERFLOW_FILE = "orderflow.csv"
META_FILE = "run_meta.json"
POLICY_DIR = "policies"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_outputs(out_dir: str | Path, results: list[RunResult]) -> None:
    """Write all artifacts of a multi-run simulation into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_prices(out / PRICES_FILE, results)
    _write_agents(out / AGENTS_FILE, results)
    _write_fundamentals(out / FUNDAMENTALS_FILE, results)
    _write_policies(out / POLICY_DIR, results)
    if any(r.order_log is not None for r in results):
        _write_orderflow(out / ORDERFLOW_FILE, results)
    _write_meta(out / META_FILE, results)


def _write_prices(path: Path, results: list[RunResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "step", "stock", "price", "volume", "spread", "bankrupt_count"])
        for r in results:
            rec = r.record
            J, T = rec.prices.shape
            for step in range(T):
                for j in range(J):
                    spread = rec.spreads[j, step]
                    w.writerow([r.run_index, step, j, repr(float(rec.prices[j, step])),
                                int(rec.volumes[j, step]),
                                "" if np.isnan(spread) else repr(float(spread)),
                                int(rec.bankrupt_counts[step])])


def _write_agents(path: Path, results: list[RunResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "agent_id", "role", "drawdown_limit", "reflexivity",
                    "horizon", "trading_window", "memory", "gesture", "learn_rate",
                    "final_nav", "bankrupt", "bankrupt_step"])
        for r in results:
            final_nav = r.record.navs[-1]
            for agent in r.agents:
                p = agent.params
                w.writerow([r.run_index, agent.agent_id, agent.role.value,
                            repr(p.drawdown_limit), repr(p.reflexivity), p.horizon,
                            p.trading_window, p.memory, repr(p.gesture),
                            repr(p.learn_rate), repr(float(final_nav[agent.agent_id])),
                            int(agent.portfolio.bankrupt), agent.portfolio.bankrupt_step])


def _write_fundamentals(path: Path, results: list[RunResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "stock", "step", "value"])
        for r in results:
            for series in r.fundamentals:
                for step, value in enumerate(series.values):
                    w.writerow([r.run_index, series.stock_id, step, repr(float(value))])


def _write_orderflow(path: Path, results: list[RunResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "step", "agent_id", "stock_id", "side", "price",
                    "quantity", "filled_quantity"])
        for r in results:
            if r.order_log is None:
                continue
            for step, agent_id, stock_id, side, price, qty, filled in r.order_log:
                w.writerow([r.run_index, step, agent_id, stock_id, side,
                            repr(float(price)), qty, filled])


def _write_policies(dir_path: Path, results: list[RunResult]) -> None:
    dir_path.mkdir(parents=True, exist_ok=True)
    for r in results:
        for snap in r.snapshots:
            np.savez(dir_path / f"run{r.run_index:02d}_step{snap.step:06d}.npz",
                     step=snap.step, forecast=snap.forecast, trade=snap.trade,
                     nav=snap.nav, bankrupt=snap.bankrupt)


def _write_meta(path: Path, results: list[RunResult]) -> None:
    first = results[0]
    meta = {
        "config": config_to_mapping(first.config) | {"master_seed": first.config.master_seed - first.run_index},
        "runs": [{"run": r.run_index, "seed": r.seed, "wall_time_s": round(r.wall_time, 3)}
                 for r in results],
        "trade_to_forecast_scale": analytics.TRADE_TO_FORECAST_SCALE,
        "scale_note": "trade-policy distances are scaled by the ratio of the "
                      "metric upper bounds (2/27)/(2/9) = 1/3",
    }
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Loaders used by `analyze`
# --------------------------------------------------------------------------

def load_prices(run_dir: str | Path) -> dict[int, dict[str, np.ndarray]]:
    """Read prices.csv back into per-run arrays keyed by run index."""
    rows: dict[int, list] = {}
    with open(Path(run_dir) / PRICES_FILE, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["run"]), []).append(row)
    out = {}
    for run, items in rows.items():
        n_stocks = max(int(r["stock"]) for r in items) + 1
        n_steps = max(int(r["step"]) for r in items) + 1
        prices = np.zeros((n_stocks, n_steps))
        volumes = np.zeros((n_stocks, n_steps))
        spreads = np.full((n_stocks, n_steps), np.nan)
        bankrupt = np.zeros(n_steps, dtype=np.int64)
        for r in items:
            j, t = int(r["stock"]), int(r["step"])
            prices[j, t] = float(r["price"])
            volumes[j, t] = float(r["volume"])
            if r["spread"]:
                spreads[j, t] = float(r["spread"])
            bankrupt[t] = int(r["bankrupt_count"])
        out[run] = {"prices": prices, "volumes": volumes, "spreads": spreads,
                    "bankrupt_counts": bankrupt}
    return out


def load_agents(run_dir: str | Path) -> dict[int, dict[str, np.ndarray]]:
    rows: dict[int, list] = {}
    with open(Path(run_dir) / AGENTS_FILE, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["run"]), []).append(row)
    out = {}
    for run, items in rows.items():
        items.sort(key=lambda r: int(r["agent_id"]))
        out[run] = {
            "reflexivity": np.array([float(r["reflexivity"]) for r in items]),
            "gesture": np.array([float(r["gesture"]) for r in items]),
            "final_nav": np.array([float(r["final_nav"]) for r in items]),
            "bankrupt": np.array([bool(int(r["bankrupt"])) for r in items]),
        }
    return out


def load_snapshots(run_dir: str | Path) -> dict[int, list[PolicySnapshot]]:
    out: dict[int, list[PolicySnapshot]] = {}
    policy_dir = Path(run_dir) / POLICY_DIR
    if not policy_dir.is_dir():
        return out
    for path in sorted(policy_dir.glob("run*_step*.npz")):
        run = int(path.stem.split("_")[0][3:])
        with np.load(path) as data:
            snap = PolicySnapshot(int(data["step"]), data["forecast"], data["trade"],
                                  data["nav"], data["bankrupt"])
        out.setdefault(run, []).append(snap)
    for snaps in out.values():
        snaps.sort(key=lambda s: s.step)
    return out


def load_meta(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / META_FILE).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# Plot-ready figure CSVs
# --------------------------------------------------------------------------

def write_columns_csv(path: str | Path, header: list[str], columns: list) -> None:
    rows = zip(*columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_group_curves_csv(path: str | Path, curves: analytics.GroupCurves,
                           year_len: int) -> None:
    header = ["step", "time_years"]
    columns = [curves.steps.tolist(),
               [s / year_len for s in curves.steps]]
    for prefix, series in (("f", curves.forecast), ("t", curves.trade)):
        for label in analytics.GROUP_LABELS:
            header.append(f"{prefix}_{label}")
            columns.append([float(v) for v in series[label]])
    write_columns_csv(path, header, columns)


def write_decile_hist_csv(path: str | Path, best: np.ndarray, worst: np.ndarray,
                          edges: np.ndarray) -> None:
    write_columns_csv(path, ["bin_left", "bin_right", "best_count", "worst_count"],
                      [[float(e) for e in edges[:-1]], [float(e) for e in edges[1:]],
                       [int(c) for c in best], [int(c) for c in worst]])


def write_return_hist_csv(path: str | Path, counts: np.ndarray, edges: np.ndarray) -> None:
    write_columns_csv(path, ["bin_left", "bin_right", "count"],
                      [[float(e) for e in edges[:-1]], [float(e) for e in edges[1:]],
                       [int(c) for c in counts]])


def write_run_length_csv(path: str | Path, lengths) -> None:
    keys = sorted(lengths)
    write_columns_csv(path, ["run_length", "count"],
                      [keys, [int(lengths[k]) for k in keys]])
