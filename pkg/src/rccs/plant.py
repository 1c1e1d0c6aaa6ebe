"""Ball-and-Beam plant model, ZOH discretization and experiment signal generators.

State is x = [position (m), velocity (m/s), beam angle (rad)]; the input is
the beam's angular velocity command. The linearized plant is a pure
integrator chain: pos' = vel, vel' = -k_v * angle, angle' = k_u * u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

# Lab-scale constants; the beam must leave margin around the +-0.5 setpoints.
K_V = 10.0
K_U = 4.5
BEAM_HALF_LENGTH = 0.55
U_SAT = 5.0

STATE_LABELS = ("position", "velocity", "angle")


@dataclass(frozen=True)
class ContinuousModel:
    A_c: np.ndarray
    B_c: np.ndarray
    state_labels: tuple = STATE_LABELS

    @property
    def n(self) -> int:
        return self.A_c.shape[0]

    @property
    def m(self) -> int:
        return self.B_c.shape[1]


@dataclass(frozen=True)
class DiscreteModel:
    A_d: np.ndarray
    B_d: np.ndarray
    h: float

    @property
    def n(self) -> int:
        return self.A_d.shape[0]

    @property
    def m(self) -> int:
        return self.B_d.shape[1]


@dataclass
class PlantState:
    x: np.ndarray
    t: float = 0.0
    failed: bool = False


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Pulse disturbances: list of (tick index, velocity amplitude)."""

    events: tuple

    def as_array(self, n_ticks: int) -> np.ndarray:
        """Dense per-tick amplitude vector of length n_ticks."""
        w = np.zeros(n_ticks)
        for k, amp in self.events:
            if 0 <= k < n_ticks:
                w[k] += amp
        return w


def ball_and_beam(k_v: float = K_V, k_u: float = K_U) -> ContinuousModel:
    """Linearized Ball-and-Beam integrator chain."""
    A_c = np.array([[0.0, 1.0, 0.0],
                    [0.0, 0.0, -k_v],
                    [0.0, 0.0, 0.0]])
    B_c = np.array([[0.0], [0.0], [k_u]])
    return ContinuousModel(A_c=A_c, B_c=B_c)


def discretize(model: ContinuousModel, h: float, max_terms: int = 60) -> DiscreteModel:
    """Zero-order-hold discretization via the truncated exponential series.

    Exact (up to rounding) for nilpotent A_c; for general A_c the series is
    summed until terms vanish relative to the accumulated matrices.
    """
    if not (isinstance(h, (int, float)) and math.isfinite(h)):
        raise ValueError(f"sampling period must be finite, got {h!r}")
    if h <= 0:
        raise ValueError(f"sampling period must be > 0, got {h}")
    A, B = model.A_c, model.B_c
    n = A.shape[0]
    A_d = np.eye(n)
    # S = sum_k A^k h^(k+1) / (k+1)!  so that B_d = S @ B_c
    S = np.eye(n) * h
    term = np.eye(n)
    for k in range(1, max_terms + 1):
        term = term @ A * (h / k)
        A_d = A_d + term
        S = S + term * (h / (k + 1))
        if np.max(np.abs(term)) < 1e-18 * max(1.0, np.max(np.abs(A_d))):
            break
    return DiscreteModel(A_d=A_d, B_d=S @ B, h=float(h))


def step_plant(s: PlantState, u: float, w: float, m: DiscreteModel,
               beam_half_length: float = BEAM_HALF_LENGTH) -> PlantState:
    """One base-rate step: x+ = A_d x + B_d u + [0, w, 0]; failure latches."""
    if s.failed:
        return replace(s, t=s.t + m.h)
    x = m.A_d @ s.x + m.B_d[:, 0] * u
    x[1] += w
    failed = abs(x[0]) > beam_half_length
    return PlantState(x=x, t=s.t + m.h, failed=failed)


def gen_disturbances(rng: np.random.Generator, duration: float, h_q: float,
                     gap_mean: float = 2.0, gap_var: float = 0.25,
                     amp_var: float = 0.09) -> DisturbanceSchedule:
    """Pulse schedule: inter-event gaps ~ N(gap_mean, gap_var), amplitudes
    ~ N(0, amp_var). Negative gaps are resampled."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    gap_std = math.sqrt(gap_var)
    amp_std = math.sqrt(amp_var)
    events = []
    t = 0.0
    last_k = -1
    while True:
        gap = rng.normal(gap_mean, gap_std)
        while gap <= 0:
            gap = rng.normal(gap_mean, gap_std)
        t += gap
        if t >= duration:
            break
        k = math.ceil(t / h_q)
        if k <= last_k:  # keep ticks strictly increasing
            k = last_k + 1
        last_k = k
        events.append((k, float(rng.normal(0.0, amp_std))))
    return DisturbanceSchedule(events=tuple(events))


def setpoint(t: float, amplitude: float = 0.5) -> float:
    """Square-wave position target, period 20 s, values +-amplitude.

    Starts at -amplitude; the first switch happens 5 s in, then every 10 s.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    return -amplitude if math.floor((t + 5.0) / 10.0) % 2 == 0 else amplitude


def actuator_noise(rng: np.random.Generator, sigma: float = 3.0) -> float:
    """One additive control-signal noise sample, N(0, sigma^2)."""
    return float(rng.normal(0.0, sigma))
