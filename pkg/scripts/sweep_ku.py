"""Sweep plant gain k_u x iteration range: looking for a regime where plain
mpc falls, oa-mpc survives, and the rate orderings hold."""
import dataclasses
import sys
import time

sys.path.insert(0, "/root/pkg/src")

from rccs import scenarios as sc
from rccs import sim

KUS = [1.0, 1.2]
RANGES = [(12, 18), (12, 22)]
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
    for lo, hi in RANGES:
        print(f"=== k_u={ku} i~U[{lo},{hi}] ===", flush=True)
        for seed in SEEDS:
            print(f" seed {seed} ({time.time()-t0:.0f}s)", flush=True)
            for variant in ("mpc", "a-mpc", "oa-mpc", "r-ccs"):
                cfg = sc.effectiveness(variant, seed=seed)
                cfg = dataclasses.replace(cfg, iterations_min=lo,
                                          iterations_max=hi, duration=DUR,
                                          k_u=ku)
                clre, miss, f, rec, fail = run(cfg)
                print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                      f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
            for variant in ("22hz", "17hz"):
                cfg = sc.validation(2, variant, seed=seed, duration=DUR)
                cfg = dataclasses.replace(cfg, iterations_min=lo,
                                          iterations_max=hi, k_u=ku)
                clre, miss, f, rec, fail = run(cfg)
                print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                      f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
