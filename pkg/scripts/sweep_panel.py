"""Full 6-variant panel on delay scenario 2 with software-in-the-loop
iterations and the uncompensated baseline variants."""
import dataclasses
import sys
import time

sys.path.insert(0, "/root/pkg/src")

from rccs import scenarios as sc
from rccs import sim

KUS = [float(a) for a in sys.argv[1:]] or [1.5]
SEEDS = [0, 1, 2, 3, 4]
DUR = 120.0

_ideal_cache = {}


def run(cfg):
    key = (cfg.seed, cfg.k_u)
    if key not in _ideal_cache:
        _ideal_cache[key] = sim.run_ideal(cfg)
    res = sim.run_scenario(cfg, reference=_ideal_cache[key])
    m = res.tenants[0].metrics
    return (m.clre_final, m.miss_ratio, m.median_frequency,
            m.recovery_fraction, res.tenants[0].trace.failed_at)


t0 = time.time()
for ku in KUS:
    print(f"=== ku={ku} solver-iterations sc2 ===", flush=True)
    for seed in SEEDS:
        print(f" seed {seed} ({time.time()-t0:.0f}s)", flush=True)
        for variant in ("mpc", "a-mpc", "oa-mpc", "r-ccs"):
            cfg = dataclasses.replace(sc.effectiveness(variant, seed=seed),
                                      duration=DUR, k_u=ku)
            clre, miss, f, rec, fail = run(cfg)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
        for variant in ("22hz", "17hz"):
            cfg = dataclasses.replace(
                sc.validation(2, variant, seed=seed, duration=DUR), k_u=ku)
            clre, miss, f, rec, fail = run(cfg)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
