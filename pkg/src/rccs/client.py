"""Wall-clock client: plant simulated in real time, agent logic per tick,
control offloaded to one or more HTTP controller endpoints.

One timer-driven tick loop owns all control state; request I/O runs on a
small thread pool whose results are handed back through a single-consumer
queue, so the loop never blocks on the network. An unreachable endpoint is
not an error: the agent degrades to recovery by design and the run
completes.
"""

from __future__ import annotations

import logging
import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import httpx
import numpy as np

from .agent import ControlRequest
from .delays import ChaosOverlay
from .mpc import ControlResponse
from .plant import PlantState, ball_and_beam, discretize, gen_disturbances, \
    setpoint, step_plant
from .scenarios import ScenarioConfig
from .service import PROTOCOL_VERSION
from .sim import SOURCE_IDLE, TenantTrace, _alloc_trace, _make_agent, \
    _record, export

log = logging.getLogger("rccs.client")


@dataclass
class LiveStats:
    ticks: int = 0
    overruns: int = 0           # ticks that started > h_q late
    requests: int = 0
    responses: int = 0
    transport_errors: int = 0
    http_errors: int = 0
    rtts: list = field(default_factory=list)

    @property
    def overrun_ratio(self) -> float:
        return self.overruns / self.ticks if self.ticks else 0.0

    @property
    def median_rtt(self) -> float:
        return float(np.median(self.rtts)) if self.rtts else float("nan")


class DelayShim:
    """Client-side delay injection: sleeps added around the HTTP exchange,
    reproducing the chaos experiment without touching the network stack."""

    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.overlay = ChaosOverlay(np.random.default_rng(seed)) \
            if cfg.chaos else None

    def extra(self, t: float) -> float:
        return self.overlay.extra_delay(t) if self.overlay else 0.0


def _resolve_endpoints(endpoints) -> dict:
    """['url'] or ['name=url', ...] -> {name: url}; '' keys the default."""
    table = {}
    for e in endpoints:
        if "=" in e and not e.split("=", 1)[0].startswith("http"):
            name, url = e.split("=", 1)
            table[name] = url
        else:
            table[""] = e
    if not table:
        raise ValueError("at least one endpoint required")
    if "" not in table:
        table[""] = next(iter(table.values()))
    return table


def client_run(cfg: ScenarioConfig, endpoints, out_path: str | None = None,
               tick_scale: float = 1.0):
    """Run the first tenant of cfg live against HTTP endpoint(s).

    tick_scale stretches the wall-clock tick (2.0 = half real time) for
    hosts that cannot hold a 5 ms loop; simulated time is unaffected.
    Returns (TenantTrace, LiveStats).
    """
    cfg.validate()
    ts = cfg.tenants[0]
    table = _resolve_endpoints(endpoints)
    h_q = cfg.h_q
    n = int(round(cfg.duration / h_q))
    model_c = ball_and_beam(cfg.k_v, cfg.k_u)
    base = discretize(model_c, h_q)

    agent = _make_agent(cfg, ts)
    switches = sorted(cfg.switch_schedule)

    rng_children = np.random.SeedSequence(cfg.seed).spawn(2)
    noise = np.random.default_rng(rng_children[0]).normal(
        0.0, cfg.noise_sigma, n)
    w = gen_disturbances(np.random.default_rng(rng_children[1]), cfg.duration,
                         h_q, gap_mean=cfg.disturbance_gap_mean,
                         gap_var=cfg.disturbance_gap_var,
                         amp_var=cfg.disturbance_amp_var).as_array(n)
    shim = DelayShim(cfg, cfg.seed + 1)

    plant = PlantState(x=np.zeros(3))
    trace = _alloc_trace(h_q, n)
    stats = LiveStats()
    inbox: queue.Queue = queue.Queue()
    start = time.perf_counter()

    def post(req: ControlRequest, url: str):
        body = {"version": PROTOCOL_VERSION, "k": req.k,
                "x": [float(v) for v in req.x],
                "setpoint": float(req.x_s[0]), "h_d": req.h_d,
                "pending_inputs": [float(v) for v in req.pending_inputs]}
        try:
            pre = shim.extra(time.perf_counter() - start)
            if pre > 0:
                time.sleep(pre)
            r = http.post(url + "/solve", json=body)
            if r.status_code != 200:
                stats.http_errors += 1
                log.warning("solve returned %d: %s", r.status_code,
                            r.text[:200])
                return
            d = r.json()
            resp = ControlResponse(
                k=d["k"], h_d=d["h_d"], u_seq=np.asarray(d["u_seq"]),
                x_pred=np.asarray(d["x_pred"]), iterations=d["iterations"],
                tau_c=d["tau_c"], degraded=d["degraded"], status=d["status"])
            inbox.put((time.perf_counter() - start, resp))
        except httpx.HTTPError as e:
            stats.transport_errors += 1
            log.debug("request for k=%d failed: %s", req.k, e)

    with httpx.Client(timeout=cfg.sigma_max * 4) as http, \
            ThreadPoolExecutor(max_workers=4) as pool:
        for k in range(n):
            t = k * h_q
            target = start + t * tick_scale
            now = time.perf_counter()
            if now < target:
                time.sleep(target - now)
            elif now - target > h_q * tick_scale:
                stats.overruns += 1
            stats.ticks += 1

            while switches and t >= switches[0][0]:
                _, cloud = switches.pop(0)
                agent.switch_target(cloud)
            while True:
                try:
                    arrival, resp = inbox.get_nowait()
                except queue.Empty:
                    break
                # arrivals are scaled back to simulated seconds
                if agent.on_response(resp, arrival / tick_scale):
                    stats.responses += 1
                    stats.rtts.append(resp.rtt)

            sp = setpoint(t)
            res = agent.on_tick(k, plant.x, sp, base)
            if res.request is not None:
                stats.requests += 1
                url = table.get(agent.target, table[""])
                pool.submit(post, res.request, url)

            u = min(max(res.u + noise[k], -cfg.u_sat), cfg.u_sat)
            _record(trace, k, t, plant.x, sp, u, res, agent.h_d,
                    agent.last_rho)
            if not plant.failed:
                plant = step_plant(plant, u, w[k], base,
                                   beam_half_length=cfg.beam_half_length)
                if plant.failed:
                    trace.failed_at = plant.t
                    log.warning("ball fell at t=%.3f", plant.t)

    if stats.overruns:
        log.info("tick overruns: %d/%d (%.1f%%)", stats.overruns, stats.ticks,
                 100.0 * stats.overrun_ratio)
    if out_path is not None:
        export(trace, out_path)
    return trace, stats
