import dataclasses
import socket
import subprocess
import sys
import time

import httpx
import numpy as np
import pytest

from rccs import scenarios as sc
from rccs import sim
from rccs.client import LiveStats, _resolve_endpoints, client_run


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def server():
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "rccs.cli", "serve", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 30
        while time.time() < deadline:
            try:
                if httpx.get(url + "/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                time.sleep(0.2)
        else:
            raise RuntimeError("service did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def _cfg(duration, seed=0, variant="r-ccs"):
    return dataclasses.replace(sc.effectiveness(variant, seed=seed),
                               duration=duration)


def test_resolve_endpoints():
    assert _resolve_endpoints(["http://a:1"]) == {"": "http://a:1"}
    table = _resolve_endpoints(["RDC=http://a:1", "K8S=http://b:2"])
    assert table["RDC"] == "http://a:1"
    assert table[""] == "http://a:1"        # first entry is the default
    mixed = _resolve_endpoints(["http://a:1", "North=http://b:2"])
    assert mixed[""] == "http://a:1" and mixed["North"] == "http://b:2"
    with pytest.raises(ValueError):
        _resolve_endpoints([])


def test_live_loopback_run(server, tmp_path):
    out = tmp_path / "live.csv"
    trace, stats = client_run(_cfg(4.0), [server], out_path=str(out),
                              tick_scale=2.0)
    assert stats.ticks == 800
    assert stats.requests > 0
    assert stats.responses > 0
    assert stats.transport_errors == 0
    assert trace.failed_at is None
    # on loopback the loop is effectively closed: recovery stays rare
    assert trace.source.count("recovery") < 0.2 * stats.ticks
    assert np.isfinite(stats.median_rtt) and stats.median_rtt > 0.0


def test_live_trace_schema_matches_simulated(server, tmp_path):
    live_path = tmp_path / "live.csv"
    client_run(_cfg(2.0), [server], out_path=str(live_path), tick_scale=2.0)
    sim_path = tmp_path / "sim.csv"
    res = sim.run_scenario(_cfg(2.0))
    sim.export(res.tenants[0].trace, str(sim_path))
    live_header = live_path.read_text().splitlines()[0]
    sim_header = sim_path.read_text().splitlines()[0]
    assert live_header == sim_header
    back = sim.read_trace(str(live_path))
    assert back.t.shape == (400,)


def test_unreachable_endpoint_degrades_to_recovery():
    trace, stats = client_run(_cfg(2.0), ["http://127.0.0.1:9"],
                              tick_scale=2.0)
    assert stats.ticks == 400
    assert stats.responses == 0
    assert stats.transport_errors > 0
    # after the first miss threshold the agent holds the ball locally
    assert trace.source.count("recovery") > 0.5 * stats.ticks
    assert trace.failed_at is None


def test_live_stats_properties():
    s = LiveStats()
    assert s.overrun_ratio == 0.0
    assert np.isnan(s.median_rtt)
    s.ticks, s.overruns, s.rtts = 10, 2, [0.2, 0.4, 0.3]
    assert s.overrun_ratio == pytest.approx(0.2)
    assert s.median_rtt == pytest.approx(0.3)
