"""Stochastic cloud delay models.

Three distribution families fitted from cloud measurements (shifted
log-normal, generalized logistic, double gamma), Markov regime switching
between them evaluated at every base tick, round-trip-time profiles for four
cloud deployments, a periodic chaos delay overlay, and a finite-capacity
FIFO worker queue.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

Z95 = 1.6448536269514722  # standard normal 95th quantile


@dataclass(frozen=True)
class DistSpec:
    family: str          # "shifted-lognormal" | "generalized-logistic" | "double-gamma"
    offset: float
    scale: float         # s for logistic/gamma, unused for lognormal
    shape: float = 0.0   # c (logistic), a (gamma)
    sigma: float = 0.0   # lognormal only
    mu: float = 0.0      # lognormal only

    def median(self) -> float:
        if self.family == "shifted-lognormal":
            return self.offset + math.exp(self.mu)
        if self.family == "generalized-logistic":
            return self.offset + self.scale * -math.log(2.0 ** (1.0 / self.shape) - 1.0)
        if self.family == "double-gamma":
            return self.offset
        raise ValueError(f"unknown family {self.family!r}")


def sample(d: DistSpec, rng: np.random.Generator) -> float:
    if d.family == "shifted-lognormal":
        if d.sigma <= 0:
            raise ValueError("lognormal sigma must be > 0")
        return d.offset + float(rng.lognormal(d.mu, d.sigma))
    if d.family == "generalized-logistic":
        if d.scale <= 0 or d.shape <= 0:
            raise ValueError("generalized-logistic scale and shape must be > 0")
        u = rng.uniform()
        while u == 0.0:
            u = rng.uniform()
        y = -math.log(u ** (-1.0 / d.shape) - 1.0) if u ** (-1.0 / d.shape) > 1.0 else math.inf
        x = d.offset + d.scale * y
        return max(x, d.offset)
    if d.family == "double-gamma":
        if d.scale <= 0 or d.shape <= 0:
            raise ValueError("double-gamma scale and shape must be > 0")
        mag = float(rng.gamma(d.shape, 1.0))
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        return d.offset + d.scale * sign * mag
    raise ValueError(f"unknown family {d.family!r}")


# measurement-fitted parameters (states s1..s5)
S1 = DistSpec("generalized-logistic", offset=1.2980603116739847e-05,
              scale=8.909250664719042e-06, shape=946.0079364124904)
S2 = DistSpec("shifted-lognormal", offset=5.5267691650919316e-05, scale=0.0,
              sigma=0.1928129897332288, mu=-8.864407134946601)
S3 = DistSpec("shifted-lognormal", offset=0.00602, scale=0.0,
              sigma=0.63186, mu=-7.143477612503207)
S4 = DistSpec("shifted-lognormal", offset=0.0055629, scale=0.0,
              sigma=0.43087, mu=-4.2013063592469)
S5 = DistSpec("double-gamma", offset=0.02809, scale=0.00034, shape=2.52199)

# per-tick transition probabilities p_ij; flight probabilities are shared by
# both scenarios, the processing pair differs
FLIGHT_P = {(0, 1): 0.00009, (0, 2): 0.00001,   # s3 -> s4, s3 -> s5
            (1, 0): 0.00025, (1, 2): 0.00025,   # s4 -> s3, s4 -> s5
            (2, 0): 0.00035, (2, 1): 0.00015}   # s5 -> s3, s5 -> s4
PROC_P = {1: {(0, 1): 0.001, (1, 0): 0.001},
          2: {(0, 1): 0.75, (1, 0): 0.25}}


@dataclass
class MarkovChain:
    """Discrete chain stepped once per simulation base tick."""

    P: np.ndarray                  # row-stochastic transition matrix
    state: int = 0

    @classmethod
    def from_pairs(cls, n: int, pairs: dict, state: int = 0) -> "MarkovChain":
        P = np.zeros((n, n))
        for (i, j), p in pairs.items():
            P[i, j] = p
        for i in range(n):
            P[i, i] = 1.0 - P[i].sum()
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition probabilities out of range")
        return cls(P=P)

    def step(self, rng: np.random.Generator) -> int:
        u = rng.uniform()
        acc = 0.0
        row = self.P[self.state]
        for j, p in enumerate(row):
            acc += p
            if u < acc:
                self.state = j
                return j
        return self.state

    def simulate(self, n_ticks: int, rng: np.random.Generator) -> np.ndarray:
        """State index per tick (state AFTER the tick's transition)."""
        us = rng.uniform(size=n_ticks)
        out = np.empty(n_ticks, dtype=np.int8)
        P = self.P
        s = self.state
        for k in range(n_ticks):
            u = us[k]
            acc = 0.0
            row = P[s]
            for j in range(row.shape[0]):
                acc += row[j]
                if u < acc:
                    s = j
                    break
            out[k] = s
        self.state = s
        return out


def markov_step(c: MarkovChain, rng: np.random.Generator) -> int:
    return c.step(rng)


def processing_chain(scenario: int) -> MarkovChain:
    if scenario not in PROC_P:
        raise ValueError(f"unknown delay scenario {scenario}")
    return MarkovChain.from_pairs(2, PROC_P[scenario])


def flight_chain() -> MarkovChain:
    return MarkovChain.from_pairs(3, FLIGHT_P)


PROC_DISTS = (S1, S2)
FLIGHT_DISTS = (S3, S4, S5)


def processing_time(N: int, i: int, rng: np.random.Generator,
                    dist: DistSpec) -> float:
    """tau_c = i * N * X with X drawn from the active processing state."""
    if N < 1 or i < 1:
        raise ValueError("horizon and iteration count must be >= 1")
    return i * N * sample(dist, rng)


def flight_time(rng: np.random.Generator, dist: DistSpec) -> float:
    return sample(dist, rng)


# measured (median, 95th quantile) round-trip times in seconds
RTT_QUANTILES = {
    "K8S": (0.01171, 0.01282),
    "RDC": (0.02424, 0.02646),
    "Central": (0.03755, 0.05262),
    "North": (0.18006, 0.21857),
}


def rtt_profile(cloud: str, offset_fraction: float = 0.8) -> DistSpec:
    """Shifted log-normal whose median and 95th quantile match the measured
    pair; the offset is pinned at a fraction of the median to close the fit."""
    if cloud not in RTT_QUANTILES:
        raise ValueError(f"unknown cloud {cloud!r}; choose from {sorted(RTT_QUANTILES)}")
    med, q95 = RTT_QUANTILES[cloud]
    offset = offset_fraction * med
    mu = math.log(med - offset)
    sigma = (math.log(q95 - offset) - mu) / Z95
    return DistSpec("shifted-lognormal", offset=offset, scale=0.0,
                    sigma=sigma, mu=mu)


class ChaosOverlay:
    """Periodic injected delay: active the first `on_time` seconds of every
    `period`; while active adds mean + AR(1) jitter, truncated at zero."""

    def __init__(self, rng: np.random.Generator, mean: float = 0.100,
                 jitter: float = 0.015, corr: float = 0.25,
                 on_time: float = 30.0, period: float = 60.0):
        self.rng = rng
        self.mean = mean
        self.jitter = jitter
        self.corr = corr
        self.on_time = on_time
        self.period = period
        self._state = float(rng.normal(0.0, jitter))

    def active(self, t: float) -> bool:
        return (t % self.period) < self.on_time

    def extra_delay(self, t: float) -> float:
        if not self.active(t):
            return 0.0
        eps = self.rng.normal(0.0, self.jitter * math.sqrt(1.0 - self.corr ** 2))
        self._state = self.corr * self._state + eps
        return max(0.0, self.mean + self._state)


class WorkerQueue:
    """FIFO queue with a fixed number of parallel servers.

    Scheduling is lazy: a job is committed to a server only once simulated
    time reaches its start, so capacity changes re-evaluate the backlog.
    """

    def __init__(self, capacity: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.server_free = [0.0] * capacity
        self.backlog: deque = deque()
        self.completed: dict = {}
        self._next_id = 0

    @property
    def capacity(self) -> int:
        return len(self.server_free)

    def submit(self, arrival: float, service: float) -> int:
        job_id = self._next_id
        self._next_id += 1
        self.backlog.append((job_id, arrival, service))
        return job_id

    def _schedule(self, t: float):
        while self.backlog:
            job_id, arrival, service = self.backlog[0]
            i = min(range(len(self.server_free)), key=self.server_free.__getitem__)
            start = max(arrival, self.server_free[i])
            if start > t:
                break
            self.server_free[i] = start + service
            self.completed[job_id] = start + service
            self.backlog.popleft()

    def poll(self, t: float):
        """Completion times of jobs finished by time t (each reported once)."""
        self._schedule(t)
        done = [(j, c) for j, c in self.completed.items() if c <= t]
        for j, _ in done:
            del self.completed[j]
        return sorted(done, key=lambda jc: (jc[1], jc[0]))

    def completion_time(self, job_id: int, horizon_t: float):
        """Completion of one job if it finishes by horizon_t, else None."""
        self._schedule(horizon_t)
        return self.completed.get(job_id)

    def set_capacity(self, t: float, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._schedule(t)
        while len(self.server_free) < capacity:
            self.server_free.append(t)
        while len(self.server_free) > capacity:
            self.server_free.remove(max(self.server_free))

    def backlog_size(self) -> int:
        return len(self.backlog)
