"""Command-line entry point: run simulations, sweep scenario grids, regenerate figures.

Subcommands:

* ``run``      -- execute one configuration (all its runs) and write artifacts
* ``sweep``    -- execute a scenario grid and write per-point artifacts + summary
* ``analyze``  -- regenerate figure CSVs and summaries from stored artifacts

Configuration precedence: preset < config file < explicit flags.
"""

from __future__ import annotations

import argparse
import sys
import types
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analytics, io
from .config import (ConfigError, ScenarioKind, SimConfig, config_from_mapping,
                     config_to_mapping, load_config)
from .simulator import simulate

P_GRID = (0.0, 0.2, 0.4, 0.6, 0.8)
ZETA_GRID = (0.5, 1.0, 1.5, 2.0, 2.5)

SCALES = {
    "desk": {"n_agents": 100, "n_stocks": 1, "n_steps": 500, "n_runs": 5,
             "learning_phase": 300, "snapshot_interval": 50},
    "paper": {"n_agents": 500, "n_stocks": 1, "n_steps": 2875, "n_runs": 20,
              "learning_phase": 1000, "snapshot_interval": 250},
}

PRESETS = {
    "baseline": {"scenario": "baseline"},
    "lr-frac": {"scenario": "learn-rate-fraction", "scenario_p": 0.2, "scenario_zeta": 2.0},
    "lr-global": {"scenario": "learn-rate-global", "scenario_zeta": 2.0},
    "herd-best": {"scenario": "herd-best", "scenario_p": 0.2},
    "herd-worst": {"scenario": "herd-worst", "scenario_p": 0.2},
    "noise": {"scenario": "noise-traders", "scenario_p": 0.2},
}


def _build_config(args) -> SimConfig:
    pairs: dict = {}
    pairs.update(SCALES[args.scale])
    if args.preset:
        pairs.update(PRESETS[args.preset])
    if args.config:
        file_cfg = load_config(args.config)
        pairs.update(config_to_mapping(file_cfg))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    if args.seed is not None:
        pairs["master_seed"] = args.seed
    return config_from_mapping({k: str(v) for k, v in pairs.items()})


def _run_task(payload):
    config, run_index, kwargs = payload
    return run_index, simulate(config, run_index, **kwargs)


def _execute_runs(config: SimConfig, jobs: int, **engine_kwargs):
    tasks = [(config, r, engine_kwargs) for r in range(config.n_runs)]
    if jobs <= 1:
        done = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_task, tasks))
    return [result for _, result in sorted(done, key=lambda item: item[0])]


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        config = _build_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    results = _execute_runs(config, args.jobs, keep_order_log=args.order_log)
    out = Path(args.out)
    io.write_run_outputs(out, results)
    _analyze_run_dir(out)
    print(f"wrote {config.n_runs} run(s) to {out}")
    return 0


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

def _sweep_points(kind: ScenarioKind, custom: str | None):
    if custom:
        points = []
        for token in custom.split(","):
            p_str, _, z_str = token.partition(":")
            points.append((float(p_str), float(z_str) if z_str else 1.0))
        return points
    if kind is ScenarioKind.LEARN_RATE_GLOBAL:
        return [(0.0, z) for z in ZETA_GRID]
    if kind is ScenarioKind.LEARN_RATE_FRACTION:
        return [(p, 2.0) for p in P_GRID]
    if kind is ScenarioKind.BASELINE:
        return [(0.0, 1.0)]
    return [(p, 1.0) for p in P_GRID]


def _point_dir(out: Path, idx: int, p: float, zeta: float) -> Path:
    return out / f"point{idx:02d}_p{p:g}_z{zeta:g}"


def cmd_sweep(args) -> int:
    try:
        base = _build_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    points = _sweep_points(base.scenario.kind, args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    for idx, (p, zeta) in enumerate(points):
        mapping = config_to_mapping(base)
        mapping["scenario_p"] = p
        mapping["scenario_zeta"] = zeta
        config = config_from_mapping(mapping)
        point_dir = _point_dir(out, idx, p, zeta)
        try:
            results = _execute_runs(config, args.jobs)
            io.write_run_outputs(point_dir, results)
            _analyze_run_dir(point_dir)
        except Exception as exc:  # keep completed points
            failures.append((point_dir.name, exc))
            print(f"point {point_dir.name} failed: {exc}", file=sys.stderr)
            continue
        print(f"finished {point_dir.name}")
    _summarize_sweep(out)
    if failures:
        return 1
    return 0


def _summarize_sweep(out: Path) -> list[dict]:
    rows = []
    for point_dir in sorted(out.glob("point*_p*_z*")):
        meta = io.load_meta(point_dir)
        config = config_from_mapping(meta["config"])
        per_run = _point_summaries(point_dir, config)
        if not per_run:
            continue
        row = {"point": point_dir.name, "scenario": config.scenario.kind.value,
               "p": config.scenario.p, "zeta": config.scenario.zeta}
        for key in per_run[0]:
            row[key] = float(np.mean([s[key] for s in per_run]))
        rows.append(row)
    if rows:
        header = list(rows[0].keys())
        io.write_columns_csv(out / "summary.csv", header,
                             [[row[k] for row in rows] for k in header])
        _write_sweep_figures(out, rows)
    return rows


def _point_summaries(point_dir: Path, config: SimConfig) -> list[dict]:
    summaries = []
    for run, arrays in sorted(io.load_prices(point_dir).items()):
        record = types.SimpleNamespace(**arrays)
        summaries.append(analytics.run_summary(record, config))
    return summaries


def _write_sweep_figures(out: Path, rows: list[dict]) -> None:
    kind = ScenarioKind(rows[0]["scenario"])
    if kind in (ScenarioKind.LEARN_RATE_GLOBAL,):
        x_name, x = "zeta", [r["zeta"] for r in rows]
    else:
        x_name, x = "p", [r["p"] for r in rows]
    vols = [[r["vol_week"] for r in rows], [r["vol_month"] for r in rows],
            [r["vol_six_month"] for r in rows]]
    vol_header = [x_name, "vol_week", "vol_month", "vol_six_month"]
    if kind in (ScenarioKind.LEARN_RATE_FRACTION, ScenarioKind.LEARN_RATE_GLOBAL):
        io.write_columns_csv(out / "fig_N1.csv", vol_header, [x] + vols)
        io.write_columns_csv(out / "fig_N2.csv", [x_name, "crashes"],
                             [x, [r["crashes"] for r in rows]])
        io.write_columns_csv(out / "fig_N3.csv", [x_name, "bankruptcy_pct"],
                             [x, [r["bankruptcy_pct"] for r in rows]])
        return
    if kind is ScenarioKind.NOISE_TRADERS:
        io.write_columns_csv(out / "fig_K5.csv", vol_header, [x] + vols)
    io.write_columns_csv(out / "fig_L2.csv", [x_name, "mean_volume"],
                         [x, [r["mean_volume"] for r in rows]])
    io.write_columns_csv(out / "fig_L3.csv", [x_name, "crashes"],
                         [x, [r["crashes"] for r in rows]])
    io.write_columns_csv(out / "fig_L4.csv", [x_name, "spread_pct"],
                         [x, [r["spread_pct"] for r in rows]])


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------

def _analyze_run_dir(run_dir: Path) -> int:
    """Regenerate per-run figure CSVs; returns the number produced."""
    produced = 0
    try:
        meta = io.load_meta(run_dir)
        config = config_from_mapping(meta["config"])
    except OSError:
        print(f"{run_dir}: missing {io.META_FILE}; all figures skipped", file=sys.stderr)
        return 0

    try:
        per_run = io.load_prices(run_dir)
    except OSError:
        per_run = {}
        print(f"{run_dir}: missing {io.PRICES_FILE}; fig_L1/fig_K10 skipped", file=sys.stderr)
    if per_run:
        pooled = np.concatenate([
            analytics.log_returns(arrays["prices"][j])
            for arrays in per_run.values() for j in range(arrays["prices"].shape[0])])
        counts, edges = np.histogram(pooled, bins=50)
        io.write_return_hist_csv(run_dir / "fig_L1.csv", counts, edges)
        lengths = analytics.run_lengths(np.array([]))
        for arrays in per_run.values():
            for j in range(arrays["prices"].shape[0]):
                lengths.update(analytics.run_lengths(arrays["prices"][j]))
        io.write_run_length_csv(run_dir / "fig_K10.csv", lengths)
        produced += 2

    try:
        agents = io.load_agents(run_dir)
    except OSError:
        agents = {}
        print(f"{run_dir}: missing {io.AGENTS_FILE}; fig_I1/fig_I2 skipped", file=sys.stderr)
    if agents:
        for name, support, fig in (("reflexivity", (0.0, 1.0), "fig_I1.csv"),
                                   ("gesture", (0.2, 0.8), "fig_I2.csv")):
            best_total = worst_total = None
            edges = None
            for data in agents.values():
                best, worst, edges = analytics.decile_param_distribution(
                    data[name], data["final_nav"], support)
                best_total = best if best_total is None else best_total + best
                worst_total = worst if worst_total is None else worst_total + worst
            io.write_decile_hist_csv(run_dir / fig, best_total, worst_total, edges)
            produced += 1

    snapshots = io.load_snapshots(run_dir)
    if snapshots:
        curve_sets = [analytics.group_distance_curves(snaps)
                      for snaps in snapshots.values()]
        steps = curve_sets[0].steps
        mean_curves = analytics.GroupCurves(
            steps,
            {label: np.mean([c.forecast[label] for c in curve_sets], axis=0)
             for label in analytics.GROUP_LABELS},
            {label: np.mean([c.trade[label] for c in curve_sets], axis=0)
             for label in analytics.GROUP_LABELS})
        io.write_group_curves_csv(run_dir / "fig_K1.csv", mean_curves, config.year_len)
        produced += 1
    else:
        print(f"{run_dir}: no policy snapshots; fig_K1 skipped", file=sys.stderr)
    return produced


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        print(f"error: {run_dir} is not a directory", file=sys.stderr)
        return 2
    point_dirs = sorted(run_dir.glob("point*_p*_z*"))
    produced = 0
    if point_dirs:
        for point in point_dirs:
            produced += _analyze_run_dir(point)
        produced += len(_summarize_sweep(run_dir))
    else:
        produced = _analyze_run_dir(run_dir)
    if produced == 0:
        print("error: nothing to analyze", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlmarket",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="scenario preset (default baseline)")
        p.add_argument("--scale", choices=sorted(SCALES), default="desk",
                       help="population/horizon preset (default desk)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any configuration key")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes (default 1)")

    p_run = sub.add_parser("run", help="execute one configuration")
    common(p_run)
    p_run.add_argument("--order-log", action="store_true",
                       help="also write the per-step order-flow CSV")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a scenario grid")
    common(p_sweep)
    p_sweep.add_argument("--points", help="custom grid as p:zeta,p:zeta,...")
    p_sweep.set_defaults(func=cmd_sweep)

    p_an = sub.add_parser("analyze", help="regenerate figures from artifacts")
    p_an.add_argument("run_dir", help="run or sweep output directory")
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
