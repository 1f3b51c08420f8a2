"""Scratch calibration probe (not part of the package)."""
import sys
import numpy as np
from rlmarket.config import SimConfig, Scenario, ScenarioKind
from rlmarket.simulator import simulate
from rlmarket import analytics

CAP = float(sys.argv[1]) if len(sys.argv) > 1 else 0.4
SEEDS = tuple(int(s) for s in sys.argv[2].split(",")) if len(sys.argv) > 2 else (11, 12)

def probe(kind, p, zeta):
    rows = []
    for seed in SEEDS:
        cfg = SimConfig(n_agents=100, n_steps=500, n_runs=1, learning_phase=300,
                        master_seed=seed, snapshot_interval=0, spread_tilt_cap=CAP,
                        scenario=Scenario(kind, p, zeta))
        rec = simulate(cfg).record
        rows.append(analytics.run_summary(rec, cfg))
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}

def fmt(s):
    return (f"volW={s['vol_week']:.4f} vol6M={s['vol_six_month']:.4f} crash={s['crashes']:5.1f} "
            f"volu={s['mean_volume']:5.0f} bank%={s['bankruptcy_pct']:5.1f}")

print(f"--- cap={CAP} seeds={SEEDS}")
print("baseline      ", fmt(probe(ScenarioKind.BASELINE, 0.0, 1.0)))
for p in (0.4, 0.8):
    print(f"noise p={p}   ", fmt(probe(ScenarioKind.NOISE_TRADERS, p, 1.0)))
for p in (0.4, 0.8):
    print(f"herd-best {p} ", fmt(probe(ScenarioKind.HERD_BEST, p, 1.0)))
for p in (0.4, 0.8):
    print(f"herd-wrst {p} ", fmt(probe(ScenarioKind.HERD_WORST, p, 1.0)))
for z in (0.5, 1.5, 2.5):
    print(f"lr z={z}     ", fmt(probe(ScenarioKind.LEARN_RATE_GLOBAL, 0.0, z)))
