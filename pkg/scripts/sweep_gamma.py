"""Sweep the MPC input weight gamma_u: slower closed-loop poles keep the
stale plan-indexed corrections (oa-mpc) effective at 3-4 periods of staleness
while plain delayed full-state feedback (mpc) still loses phase margin."""
import dataclasses
import sys
import time

sys.path.insert(0, "/root/pkg/src")

from rccs import scenarios as sc
from rccs import sim

GAMMAS = [0.3, 1.0, 3.0]
KU = 1.5
SIGMA = 3.0
RANGE = (12, 22)
SEEDS = [0, 1, 2, 3, 4]
DUR = 120.0

_ideal_cache = {}


def patch(cfg, gu):
    mpc = dataclasses.replace(cfg.mpc, gamma_u=gu)
    return dataclasses.replace(cfg, mpc=mpc, k_u=KU, noise_sigma=SIGMA,
                               iterations_min=RANGE[0],
                               iterations_max=RANGE[1])


def run(cfg, gu):
    key = (cfg.seed, gu)
    if key not in _ideal_cache:
        _ideal_cache[key] = sim.run_ideal(cfg)
    res = sim.run_scenario(cfg, reference=_ideal_cache[key])
    m = res.tenants[0].metrics
    return (m.clre_final, m.miss_ratio, m.median_frequency,
            m.recovery_fraction, res.tenants[0].trace.failed_at)


t0 = time.time()
for gu in GAMMAS:
    print(f"=== gamma_u={gu} sigma={SIGMA} k_u={KU} i~U{RANGE} ===",
          flush=True)
    for seed in SEEDS:
        print(f" seed {seed} ({time.time()-t0:.0f}s)", flush=True)
        for variant in ("mpc", "a-mpc", "oa-mpc", "r-ccs"):
            cfg = patch(dataclasses.replace(
                sc.effectiveness(variant, seed=seed), duration=DUR), gu)
            clre, miss, f, rec, fail = run(cfg, gu)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
        for variant in ("22hz", "17hz"):
            cfg = patch(sc.validation(2, variant, seed=seed, duration=DUR),
                        gu)
            clre, miss, f, rec, fail = run(cfg, gu)
            print(f"   {variant}: clre={clre:7.2f} miss={miss:.2f} "
                  f"f={f:.1f} rec={rec:.2f} fail={fail}", flush=True)
