"""Deterministic base-rate simulation engine.

Composes the plant, the client agent, the stochastic delay models, and a
virtual controller service into a single-threaded tick loop. Every random
draw comes from a seeded stream tree, so a config plus a seed fully
determines the traces; plant noise and disturbances use per-tenant streams
that do not depend on the controller variant, making cross-variant
comparisons paired.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .adapter import AdapterState
from .agent import Agent, AgentConfig, recovery_gain
from .delays import (ChaosOverlay, FLIGHT_DISTS, PROC_DISTS, WorkerQueue,
                     flight_chain, processing_chain, rtt_profile, sample)
from .mpc import mpc_step
from .plant import (PlantState, ball_and_beam, discretize,
                    gen_disturbances, setpoint, step_plant)
from .scenarios import ScenarioConfig, TenantSpec

# exported CSV column order (one row per base tick)
TRACE_COLUMNS = ("t", "position", "setpoint", "u", "source", "h_d",
                 "miss", "rho", "rtt", "iterations", "tau_c")

SOURCE_IDLE = "idle"


@dataclass
class TenantTrace:
    """Per-tenant, per-tick record arrays (equal length)."""

    h_q: float
    t: np.ndarray
    position: np.ndarray
    setpoint: np.ndarray
    u: np.ndarray
    source: list
    h_d: np.ndarray
    miss: np.ndarray
    rho: np.ndarray
    rtt: np.ndarray
    iterations: np.ndarray
    tau_c: np.ndarray
    # diagnostics beyond the exported columns
    velocity: np.ndarray = None
    angle: np.ndarray = None
    failed_at: float | None = None

    def __len__(self):
        return len(self.t)


@dataclass
class MetricsSummary:
    clre_final: float
    miss_ratio: float
    mean_frequency: float
    median_frequency: float
    recovery_fraction: float
    failed: bool
    solve_time: float            # accumulated simulated processing time


@dataclass
class TenantResult:
    name: str
    variant: str
    trace: TenantTrace
    metrics: MetricsSummary


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    tenants: list


def clre(trace: TenantTrace, reference: TenantTrace) -> np.ndarray:
    """Running closed-loop response error: cumulative sum of the squared
    position deviation from the reference, scaled by the base period."""
    if len(trace) != len(reference):
        raise ValueError(
            f"trace length {len(trace)} != reference length {len(reference)}")
    if abs(trace.h_q - reference.h_q) > 1e-12:
        raise ValueError("trace and reference use different base periods")
    d = trace.position - reference.position
    return np.cumsum(d * d) * trace.h_q


@dataclass
class _Tenant:
    spec: TenantSpec
    agent: Agent
    plant: PlantState
    noise: np.ndarray
    w: np.ndarray                  # disturbance amplitude per tick
    service_rng: np.random.Generator
    admission_tick: int
    inbox: list = field(default_factory=list)   # heap of (arrival, seq, resp)
    solve_time: float = 0.0


def _make_agent(cfg: ScenarioConfig, ts: TenantSpec) -> Agent:
    targets = tuple(sorted({cfg.cloud} | {c for _, c in cfg.switch_schedule})) \
        if cfg.delay_mode == "rtt" else ()
    acfg = AgentConfig(h_q=cfg.h_q, variant=ts.variant,
                       fixed_period=ts.fixed_period, sigma_max=cfg.sigma_max,
                       u_sat=cfg.u_sat, max_outstanding=cfg.max_outstanding,
                       targets=targets)
    adapter = None
    if ts.variant == "r-ccs":
        a = cfg.adapter
        adapter = AdapterState(K=a.K, T_i=a.T_i, T_d=a.T_d, alpha=a.alpha,
                               rho_r=a.rho_r, h_f=a.h_f, h_q=cfg.h_q,
                               h_min=a.h_min, h_max=a.h_max,
                               h_c=ts.initial_h_c)
    model_c = ball_and_beam(cfg.k_v, cfg.k_u)
    agent = Agent(acfg, recovery_gain(model_c, cfg.h_q), adapter=adapter)
    if cfg.delay_mode == "rtt":
        agent.switch_target(cfg.cloud)
    return agent


def run_scenario(cfg: ScenarioConfig,
                 reference: "ScenarioResult | None" = None) -> ScenarioResult:
    """Advance the world tick by tick at h_q until cfg.duration.

    reference: result of run_ideal for the same config; computed on demand
    when omitted (pass it explicitly when sweeping variants to avoid
    recomputing the identical ideal run).
    """
    cfg.validate()
    if reference is None and not _is_ideal(cfg):
        reference = run_ideal(cfg)

    h_q = cfg.h_q
    n = int(round(cfg.duration / h_q))
    model_c = ball_and_beam(cfg.k_v, cfg.k_u)
    base = discretize(model_c, h_q)

    root = np.random.SeedSequence(cfg.seed)
    children = root.spawn(1 + len(cfg.tenants))
    g_markov, g_chaos = (np.random.default_rng(s) for s in children[0].spawn(2))

    if cfg.delay_mode == "markov":
        proc_states = processing_chain(cfg.delay_scenario).simulate(n, g_markov)
        flight_states = flight_chain().simulate(n, g_markov)
    else:
        proc_states = flight_states = None
    overlay = ChaosOverlay(g_chaos) if cfg.chaos else None
    queue = WorkerQueue(cfg.queue_capacity) if cfg.queue_capacity else None
    jobs: dict = {}          # job id -> (tenant index, response, downlink)
    cap_events = sorted(cfg.capacity_schedule)
    switch_events = sorted(cfg.switch_schedule)
    cloud = cfg.cloud
    seq = 0

    tenants = []
    for i, ts in enumerate(cfg.tenants):
        noise_s, dist_s, service_s = children[1 + i].spawn(3)
        noise = np.random.default_rng(noise_s).normal(0.0, cfg.noise_sigma, n)
        sched = gen_disturbances(np.random.default_rng(dist_s), cfg.duration,
                                 h_q, gap_mean=cfg.disturbance_gap_mean,
                                 gap_var=cfg.disturbance_gap_var,
                                 amp_var=cfg.disturbance_amp_var)
        tenants.append(_Tenant(
            spec=ts, agent=_make_agent(cfg, ts),
            plant=PlantState(x=np.zeros(3)), noise=noise,
            w=sched.as_array(n),
            service_rng=np.random.default_rng(service_s),
            admission_tick=int(round(ts.admission_time / h_q))))

    traces = [_alloc_trace(h_q, n) for _ in tenants]
    t_axis = np.arange(n) * h_q
    sp_axis = np.where(np.floor((t_axis + 5.0) / 10.0).astype(np.int64) % 2 == 0,
                       -0.5, 0.5)

    for k in range(n):
        t = k * h_q
        while cap_events and cap_events[0][0] <= t:
            _, cap = cap_events.pop(0)
            if queue is not None:
                queue.set_capacity(t, cap)
        while switch_events and switch_events[0][0] <= t:
            _, cloud = switch_events.pop(0)
            for tn in tenants:
                if tn.agent.cfg.targets:
                    tn.agent.switch_target(cloud)
        if queue is not None:
            for job_id, completion in queue.poll(t):
                ti, resp, downlink = jobs.pop(job_id)
                seq += 1
                heapq.heappush(tenants[ti].inbox,
                               (completion + downlink, seq, resp))

        for ti, tn in enumerate(tenants):
            tr = traces[ti]
            if k < tn.admission_tick:
                _record_idle(tr, k, t, sp_axis[k], tn.agent.h_d)
                continue
            while tn.inbox and tn.inbox[0][0] <= t:
                arrival, _, resp = heapq.heappop(tn.inbox)
                tn.agent.on_response(resp, arrival)

            res = tn.agent.on_tick(k, tn.plant.x, sp_axis[k], base)
            if res.request is not None:
                resp = mpc_step(res.request.x, res.request.pending_inputs,
                                res.request.h_d, res.request.x_s, cfg.mpc,
                                model_c, h_q, k=res.request.k)
                tau_c, flight = _draw_delays(cfg, tn, resp, k, t, cloud,
                                             proc_states, flight_states,
                                             overlay)
                resp.tau_c = tau_c
                tn.solve_time += tau_c
                if queue is not None:
                    job = queue.submit(t + flight / 2.0, tau_c)
                    jobs[job] = (ti, resp, flight / 2.0)
                else:
                    seq += 1
                    heapq.heappush(tn.inbox, (t + flight + tau_c, seq, resp))

            u = min(max(res.u + tn.noise[k], -cfg.u_sat), cfg.u_sat)
            _record(tr, k, t, tn.plant.x, sp_axis[k], u, res,
                    tn.agent.h_d, tn.agent.last_rho)
            tn.plant = step_plant(tn.plant, u, tn.w[k], base,
                                  beam_half_length=cfg.beam_half_length)
            if tn.plant.failed and tr.failed_at is None:
                tr.failed_at = t

    results = []
    for ti, tn in enumerate(tenants):
        tr = traces[ti]
        ref_tr = reference.tenants[ti].trace if reference is not None else tr
        results.append(TenantResult(
            name=tn.spec.name, variant=tn.spec.variant, trace=tr,
            metrics=_metrics(tr, ref_tr, tn)))
    return ScenarioResult(config=cfg, tenants=results)


def _is_ideal(cfg: ScenarioConfig) -> bool:
    return (cfg.delay_mode == "zero" and not cfg.chaos
            and cfg.queue_capacity is None)


def ideal_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """The zero-delay counterpart of cfg: same seed and plant realization,
    nominal controller fixed at the shortest period."""
    tenants = tuple(replace(ts, variant="oa-mpc",
                            fixed_period=cfg.adapter.h_min)
                    for ts in cfg.tenants)
    return replace(cfg, name=cfg.name + "-ideal", delay_mode="zero",
                   chaos=False, queue_capacity=None, capacity_schedule=(),
                   switch_schedule=(), tenants=tenants)


def run_ideal(cfg: ScenarioConfig) -> ScenarioResult:
    """Reference run: zero delays, nominal MPC at the shortest period, same
    noise and disturbance realization as run_scenario(cfg)."""
    return run_scenario(ideal_config(cfg))


def _draw_delays(cfg, tn, resp, k, t, cloud, proc_states, flight_states,
                 overlay):
    """Service processing time and total flight time for one request."""
    rng = tn.service_rng
    if cfg.delay_mode == "zero":
        return 0.0, 0.0
    if cfg.iterations_mode == "solver":
        i = resp.iterations        # software-in-the-loop: real solver count
    else:
        i = int(rng.integers(cfg.iterations_min, cfg.iterations_max + 1))
    if cfg.delay_mode == "markov":
        x = sample(PROC_DISTS[proc_states[k]], rng)
        tau_c = i * resp.N * x
        flight = sample(FLIGHT_DISTS[flight_states[k]], rng)
    else:  # rtt: the measured distribution covers the full round trip
        tau_c = 0.0
        flight = sample(rtt_profile(cloud), rng)
    if overlay is not None:
        flight += overlay.extra_delay(t)
    return tau_c, flight


def _alloc_trace(h_q: float, n: int) -> TenantTrace:
    return TenantTrace(
        h_q=h_q, t=np.empty(n), position=np.empty(n), setpoint=np.empty(n),
        u=np.empty(n), source=[""] * n, h_d=np.empty(n),
        miss=np.zeros(n, dtype=np.uint8), rho=np.empty(n),
        rtt=np.full(n, np.nan), iterations=np.zeros(n, dtype=np.int64),
        tau_c=np.zeros(n), velocity=np.empty(n), angle=np.empty(n))


def _record_idle(tr, k, t, sp, h_d):
    tr.t[k] = t
    tr.position[k] = 0.0
    tr.velocity[k] = 0.0
    tr.angle[k] = 0.0
    tr.setpoint[k] = sp
    tr.u[k] = 0.0
    tr.source[k] = SOURCE_IDLE
    tr.h_d[k] = h_d
    tr.rho[k] = 0.0


def _record(tr, k, t, x, sp, u, res, h_d, rho):
    tr.t[k] = t
    tr.position[k] = x[0]
    tr.velocity[k] = x[1]
    tr.angle[k] = x[2]
    tr.setpoint[k] = sp
    tr.u[k] = u
    tr.source[k] = res.source
    tr.h_d[k] = h_d
    tr.miss[k] = 1 if res.miss else 0
    tr.rho[k] = rho
    gov = res.governing
    if gov is not None:
        tr.rtt[k] = gov.rtt
        tr.iterations[k] = gov.iterations
        tr.tau_c[k] = gov.tau_c


def _metrics(tr: TenantTrace, ref: TenantTrace, tn: _Tenant) -> MetricsSummary:
    a = tn.admission_tick
    active = slice(a, None)
    freqs = 1.0 / tr.h_d[active]
    src = np.array(tr.source[a:])
    return MetricsSummary(
        clre_final=float(clre(tr, ref)[-1]),
        miss_ratio=float(tr.miss[active].mean()),
        mean_frequency=float(freqs.mean()),
        median_frequency=float(np.median(freqs)),
        recovery_fraction=float((src == "recovery").mean()),
        failed=tr.failed_at is not None,
        solve_time=tn.solve_time)


# ---------------------------------------------------------------------------
# Trace and summary I/O

def _fmt(x: float) -> str:
    return repr(float(x))


def export(trace: TenantTrace, path: str):
    """One CSV row per base tick; columns and order per TRACE_COLUMNS."""
    try:
        with open(path, "w") as f:
            f.write(",".join(TRACE_COLUMNS) + "\n")
            for k in range(len(trace)):
                row = (_fmt(trace.t[k]), _fmt(trace.position[k]),
                       _fmt(trace.setpoint[k]), _fmt(trace.u[k]),
                       trace.source[k], _fmt(trace.h_d[k]),
                       str(int(trace.miss[k])), _fmt(trace.rho[k]),
                       _fmt(trace.rtt[k]), str(int(trace.iterations[k])),
                       _fmt(trace.tau_c[k]))
                f.write(",".join(row) + "\n")
    except OSError as e:
        raise OSError(f"cannot write trace to {path!r}: {e}") from e


def read_trace(path: str) -> TenantTrace:
    """Inverse of export (diagnostic columns are absent from files)."""
    try:
        with open(path) as f:
            header = f.readline().strip().split(",")
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected columns in {path!r}: {header}")
            rows = [line.rstrip("\n").split(",") for line in f]
    except OSError as e:
        raise OSError(f"cannot read trace from {path!r}: {e}") from e
    n = len(rows)
    tr = _alloc_trace(h_q=0.0, n=n)
    for k, r in enumerate(rows):
        (tr.t[k], tr.position[k], tr.setpoint[k], tr.u[k]) = map(float, r[:4])
        tr.source[k] = r[4]
        tr.h_d[k] = float(r[5])
        tr.miss[k] = int(r[6])
        tr.rho[k] = float(r[7])
        tr.rtt[k] = float(r[8])
        tr.iterations[k] = int(r[9])
        tr.tau_c[k] = float(r[10])
    tr.velocity = tr.angle = None
    if n > 1:
        tr.h_q = float(tr.t[1] - tr.t[0])
    return tr


def summarize(results) -> list:
    """Flat summary rows (one per tenant per scenario result)."""
    rows = []
    for res in results:
        for tr in res.tenants:
            m = tr.metrics
            rows.append({
                "scenario": res.config.name,
                "seed": res.config.seed,
                "tenant": tr.name,
                "variant": tr.variant,
                "clre": m.clre_final,
                "miss_ratio": m.miss_ratio,
                "mean_frequency": m.mean_frequency,
                "median_frequency": m.median_frequency,
                "recovery_fraction": m.recovery_fraction,
                "failed": m.failed,
                "solve_time": m.solve_time,
            })
    return rows
