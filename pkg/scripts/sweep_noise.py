"""Sweep actuation noise sigma: plain mpc's fall is driven by time
misalignment (excited by setpoint steps), oa-mpc's only by noise drift, so a
lower sigma should keep mpc falling while oa-mpc survives."""
import dataclasses
import sys
import time

sys.path.insert(0, "/root/pkg/src")

from rccs import scenarios as sc
from rccs import sim

SIGMAS = [2.5, 2.0, 1.5]
KU = 1.5
RANGE = (12, 22)
SEEDS = [0, 1, 2, 3, 4]
DUR = 120.0

_ideal_cache = {}


def run(cfg):
    key = (cfg.seed, cfg.k_u, cfg.noise_sigma)
    if key not in _ideal_cache:
        _ideal_cache[key] = sim.run_ideal(cfg)
    res = sim.run_scenario(cfg, reference=_ideal_cache[key])
    m = res.tenants[0].metrics
    return (m.clre_final, m.miss_ratio, m.median_frequency,
            m.recovery_fraction, res.tenants[0].trace.failed_at)


t0 = time.time()
lo, hi = RANGE
for sig in SIGMAS:
    print(f"=== sigma={sig} k_u={KU} i~U[{lo},{hi}] ===", flush=True)
    for seed in SEEDS:
        print(f" seed {seed} ({time.time()-t0:.0f}s)", flush=True)
        for variant in ("mpc", "a-mpc", "oa-mpc", "r-ccs"):
            cfg = sc.effectiveness(variant, seed=seed)
            cfg = dataclasses.replace(cfg, iterations_min=lo,
                                      iterations_max=hi, duration=DUR,
                                      k_u=KU, noise_sigma=sig)
            clre, miss, f, rec, fail = run(cfg)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
        for variant in ("22hz", "17hz"):
            cfg = sc.validation(2, variant, seed=seed, duration=DUR)
            cfg = dataclasses.replace(cfg, iterations_min=lo,
                                      iterations_max=hi, k_u=KU,
                                      noise_sigma=sig)
            clre, miss, f, rec, fail = run(cfg)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
