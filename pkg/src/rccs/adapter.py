"""Miss-ratio driven control-period adaptation.

A per-tick hit/miss record is smoothed with an EMA and fed to a PI(D)
controller in velocity form; the continuous period is then quantized to a
multiple of the base tick and limited to the configured range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class MissTracker:
    """Ring of per-base-tick hit/miss flags; exactly one record per tick."""

    def __init__(self, window: int):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._flags = [False] * window   # True = miss
        self._pos = 0
        self._count = 0
        self._misses = 0
        self._last_tick = None

    def record_tick(self, tick: int, hit: bool):
        if self._last_tick is not None and tick <= self._last_tick:
            raise ValueError(f"tick {tick} recorded twice (last {self._last_tick})")
        self._last_tick = tick
        old = self._flags[self._pos]
        miss = not hit
        if self._count == self.window and old:
            self._misses -= 1
        self._flags[self._pos] = miss
        self._pos = (self._pos + 1) % self.window
        self._count = min(self._count + 1, self.window)
        if miss:
            self._misses += 1

    def miss_ratio(self) -> float:
        if self._count == 0:
            return 0.0
        return self._misses / self._count


def quantize(h_c: float, h_q: float, h_min: float, h_max: float) -> float:
    """h_d = ceil(h_c/h_q + 0.5) * h_q, limited to [h_min, h_max] on the
    h_q grid."""
    if h_q <= 0:
        raise ValueError("h_q must be > 0")
    h_d = math.ceil(h_c / h_q + 0.5 - 1e-9) * h_q
    lo = round(h_min / h_q) * h_q
    hi = round(h_max / h_q) * h_q
    return min(max(h_d, lo), hi)


@dataclass
class AdapterState:
    """PI(D) period controller state; defaults follow the selected PI
    configuration (K=3.5, T_i=583, h_f=0.5, rho_r=0.05)."""

    K: float = 3.5
    T_i: float = 583.0
    T_d: float = 0.0
    alpha: float = 0.1
    rho_r: float = 0.05
    h_f: float = 0.5
    h_q: float = 0.005
    h_min: float = 0.03
    h_max: float = 0.1
    h_c: float = 0.1
    rho: float = field(default=None)
    e: float = 0.0
    e_prev: float = 0.0
    e_prev2: float = 0.0

    def __post_init__(self):
        if self.rho is None:
            self.rho = self.rho_r   # neutral start: zero initial error
        self.e = self.e_prev = self.e_prev2 = self.rho_r - self.rho
        # the quantizer's ceil(x + 0.5) can only reach the shortest period
        # from below it, so h_c is allowed one base tick under h_min
        self._h_c_floor = self.h_min - self.h_q
        self.h_c = min(max(self.h_c, self._h_c_floor), self.h_max)

    def update(self, l: float) -> float:
        """Consume the miss ratio over the last h_f seconds; returns h_c."""
        self.rho = self.alpha * l + (1.0 - self.alpha) * self.rho
        self.e_prev2 = self.e_prev
        self.e_prev = self.e
        self.e = self.rho_r - self.rho
        de = (self.e - self.e_prev) / self.h_f
        d2e = (self.e - 2.0 * self.e_prev + self.e_prev2) / self.h_f ** 2
        delta = -self.K * (de + self.e / self.T_i + self.T_d * d2e)
        # slew limit of one grid cell per update: the proportional term can
        # otherwise traverse the whole period range on a single smoothed-loss
        # fluctuation, which turns the quantized loop into a limit cycle
        step = min(max(self.h_f * delta, -self.h_q), self.h_q)
        self.h_c = min(max(self.h_c + step, self._h_c_floor), self.h_max)
        return self.h_c

    def period(self) -> float:
        return quantize(self.h_c, self.h_q, self.h_min, self.h_max)


def adapter_update(state: AdapterState, l: float) -> float:
    return state.update(l)
