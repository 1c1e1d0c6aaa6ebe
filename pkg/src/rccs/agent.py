"""Plant-side agent: time-slotted execution at the base rate, request
admission at the current control period, response arbitration, open-loop
application of predictions, and recovery switching.

Controller variants share this agent:

* ``mpc``    -- uncompensated baseline: requests carry no dead-time input
  plan and actions are computed for immediate application; the newest
  response's first action is applied, held until the next arrival; no
  fallback.
* ``a-mpc``  -- the uncompensated baseline plus the local recovery feedback
  whenever the first action is outside its own application window.
* ``oa-mpc`` -- open-loop indexing into the prediction sequence while the
  response lag stays under sigma_max; recovery beyond it.
* ``r-ccs``  -- oa-mpc plus miss-ratio driven period adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .adapter import AdapterState, MissTracker
from .mpc import ControlResponse
from .plant import ContinuousModel, DiscreteModel, discretize

VARIANTS = ("mpc", "a-mpc", "oa-mpc", "r-ccs")

SOURCE_CLOSED = "closed"
SOURCE_RECOVERY = "recovery"
SOURCE_NONE = "none"


def recovery_gain(model_c: ContinuousModel, h_q: float,
                  q=(1.0, 1.0, 10.0), r: float = 1.0) -> np.ndarray:
    """Low-gain go-back-home state feedback, LQR at the base rate.

    The angle weight is kept high so the inner angle loop stays stiff
    against actuation noise while the position response remains sedate."""
    dm = discretize(model_c, h_q)
    Q = np.diag(q)
    R = np.atleast_2d(r)
    P = scipy.linalg.solve_discrete_are(dm.A_d, dm.B_d, Q, R)
    K = np.linalg.solve(R + dm.B_d.T @ P @ dm.B_d, dm.B_d.T @ P @ dm.A_d)
    return K[0]


@dataclass
class ControlRequest:
    k: int
    x: np.ndarray
    x_s: np.ndarray
    h_d: float
    pending_inputs: np.ndarray
    target: str = ""
    send_t: float = 0.0


@dataclass
class AgentConfig:
    h_q: float = 0.005
    variant: str = "r-ccs"
    fixed_period: float = 0.03
    sigma_max: float = 0.2
    u_sat: float = 5.0
    max_outstanding: int = 4
    targets: tuple = ()


@dataclass
class _Held:
    resp: ControlResponse
    arrival_t: float
    w: int = 0          # period in base ticks, cached at install
    act: int = 0        # activation tick, cached at install
    n: int = 0          # len(u_seq), cached at install


@dataclass
class TickResult:
    u: float
    source: str
    governing: ControlResponse | None
    request: ControlRequest | None
    miss: bool


class Agent:
    """One tenant's client logic, advanced once per base tick."""

    def __init__(self, cfg: AgentConfig, recovery_K: np.ndarray,
                 adapter: AdapterState | None = None):
        if cfg.variant not in VARIANTS:
            raise ValueError(f"unknown variant {cfg.variant!r}")
        self.cfg = cfg
        # dead-time compensation is part of the latency-mitigation remedy;
        # the baseline variants solve for immediate application instead
        self.compensated = cfg.variant in ("oa-mpc", "r-ccs")
        self.recovery_K = np.asarray(recovery_K, dtype=float)
        self.adapter = adapter if cfg.variant == "r-ccs" else None
        if self.adapter is not None:
            self.h_d = self.adapter.period()
            self._update_every = max(1, round(self.adapter.h_f / cfg.h_q))
            self.tracker = MissTracker(self._update_every)
        else:
            self.h_d = cfg.fixed_period
            self._update_every = 0
            self.tracker = MissTracker(max(1, round(0.5 / cfg.h_q)))
        self.held: list[_Held] = []
        self.outstanding: dict[int, ControlRequest] = {}
        self.newest_sample_k: int | None = None   # newest arrived response
        self.first_activation: int | None = None  # end of the warmup phase
        self.target = cfg.targets[0] if cfg.targets else ""
        self.next_admission = 0
        self.grace_until = 0        # miss amnesty after a period change
        self.recovery_active = False
        self.dropped_responses = 0
        self.last_rho = self.adapter.rho if self.adapter else 0.0

    # -- helpers ---------------------------------------------------------

    def _w(self, h_d: float) -> int:
        return max(1, round(h_d / self.cfg.h_q))

    def _act_tick(self, r: ControlResponse) -> int:
        # with dead time d = h_d, u(0) targets the next admission instant;
        # the uncompensated variants plan from the sample instant itself
        return r.k + self._w(r.h_d) if self.compensated else r.k

    def _candidate(self, k: int):
        """Best usable held response and its open-loop index at tick k."""
        variant = self.cfg.variant
        sigma_ticks = self.cfg.sigma_max / self.cfg.h_q
        best = None
        best_i = 0
        for hr in self.held:
            r = hr.resp
            act = hr.act
            if k < act:
                continue
            i = (k - act) // hr.w
            if variant == "mpc":
                # the newest first action is applied regardless of age; the
                # true open-loop index is kept so staleness shows in the trace
                i = min(i, hr.n - 1)
            elif i >= hr.n:
                continue
            elif variant == "a-mpc":
                if i != 0:
                    continue
            else:
                if k - r.k > sigma_ticks:
                    continue
            if best is None or r.k > best.k:
                best = r
                best_i = i
        return best, best_i

    def select_action(self, k: int, x_meas: np.ndarray):
        """Returns (u, source, governing response, open-loop index)."""
        best, i = self._candidate(k)
        if best is not None:
            src = SOURCE_CLOSED if i == 0 else f"open:{i}"
            j = 0 if self.cfg.variant == "mpc" else i
            return float(best.u_seq[j]), src, best, i
        if self.cfg.variant == "mpc":
            return 0.0, SOURCE_NONE, None, -1
        if self.cfg.variant == "a-mpc":
            return self.recovery_u(x_meas), SOURCE_RECOVERY, None, -1
        # oa-mpc / r-ccs: pure sigma_max threshold (Eq-9 style)
        newest = self.newest_sample_k
        tau_ticks = k - newest if newest is not None else k
        if tau_ticks * self.cfg.h_q > self.cfg.sigma_max:
            return self.recovery_u(x_meas), SOURCE_RECOVERY, None, -1
        return 0.0, SOURCE_NONE, None, -1

    def recovery_u(self, x_meas: np.ndarray) -> float:
        u = float(-self.recovery_K @ x_meas)
        return min(max(u, -self.cfg.u_sat), self.cfg.u_sat)

    def _plan_inputs(self, k: int, x_meas: np.ndarray, w: int,
                     base: DiscreteModel) -> np.ndarray:
        """Inputs the agent expects to apply over the dead time [k, k+w),
        used by the server's state estimate. The uncompensated variants send
        none: their actions are computed for immediate application."""
        if not self.compensated:
            return np.empty(0)
        plan = np.empty(w)
        x = np.asarray(x_meas, dtype=float).copy()
        for j in range(w):
            best, i = self._candidate(k + j)
            if best is not None:
                u = float(best.u_seq[0 if self.cfg.variant == "mpc" else i])
            elif self.cfg.variant in ("a-mpc", "oa-mpc", "r-ccs") and \
                    self.recovery_active:
                u = self.recovery_u(x)
            else:
                u = 0.0
            plan[j] = u
            x = base.A_d @ x + base.B_d[:, 0] * u
        return plan

    # -- protocol --------------------------------------------------------

    def on_tick(self, k: int, x_meas: np.ndarray, sp: float,
                base: DiscreteModel) -> TickResult:
        """Advance one base tick: admit a request when due, choose the
        action to apply, account the hit/miss, and run the adapter."""
        request = None
        if k >= self.next_admission:
            w = self._w(self.h_d)
            if len(self.outstanding) >= self.cfg.max_outstanding:
                oldest = min(self.outstanding)
                del self.outstanding[oldest]
            request = ControlRequest(
                k=k, x=np.asarray(x_meas, dtype=float).copy(),
                x_s=np.array([sp, 0.0, 0.0]), h_d=self.h_d,
                pending_inputs=self._plan_inputs(k, x_meas, w, base),
                target=self.target, send_t=k * self.cfg.h_q)
            self.outstanding[k] = request
            self.next_admission = k + w

        u, source, gov, i = self.select_action(k, x_meas)
        self.recovery_active = source == SOURCE_RECOVERY
        # before any response has had a chance to activate, nothing has
        # overrun its period, so warmup ticks are not counted as misses
        warmup = self.first_activation is None or k < self.first_activation
        hit = source == SOURCE_CLOSED or (warmup and source == SOURCE_NONE) \
            or (k < self.grace_until and source != SOURCE_RECOVERY)
        self.tracker.record_tick(k, hit)

        if self.adapter is not None and (k + 1) % self._update_every == 0:
            l = self.tracker.miss_ratio()
            self.adapter.update(l)
            self.last_rho = self.adapter.rho
            new_h_d = self.adapter.period()
            if new_h_d != self.h_d:
                self.h_d = new_h_d
                # responses computed for the old period will be discarded on
                # arrival; re-admit immediately so the coverage gap does not
                # stretch to the old period's next admission slot
                self.next_admission = k + 1
                # the gap until the first response at the new period is a
                # cost of changing rate, not of the rate itself; counting it
                # as loss makes period changes self-reinforcing
                self.grace_until = k + 1 + 2 * self._w(new_h_d)
        self._prune(k)
        return TickResult(u=u, source=source, governing=gov,
                          request=request, miss=not hit)

    def on_response(self, r: ControlResponse, arrival_t: float):
        """Install an arriving response unless it is stale or dominated."""
        if r.k not in self.outstanding:
            self.dropped_responses += 1
            return False
        del self.outstanding[r.k]
        if abs(r.h_d - self.h_d) > 1e-12:
            return False   # computed for an abandoned frequency
        if any(h.resp.k == r.k for h in self.held):
            return False   # duplicate delivery
        if self.newest_sample_k is None or r.k > self.newest_sample_k:
            self.newest_sample_k = r.k
        act = self._act_tick(r)
        for h in self.held:
            if h.resp.k > r.k and self._act_tick(h.resp) <= act:
                return False   # strictly fresher response already held
        r.rtt = arrival_t - r.k * self.cfg.h_q
        if self.first_activation is None or act < self.first_activation:
            self.first_activation = act
        self.held.append(_Held(resp=r, arrival_t=arrival_t,
                               w=self._w(r.h_d), act=act, n=len(r.u_seq)))
        # drop holdings that the new response dominates
        self.held = [h for h in self.held
                     if not (h.resp.k < r.k and h.act >= act)]
        return True

    def _prune(self, k: int):
        if len(self.held) <= 1:
            return
        self.held = [h for h in self.held
                     if (k - h.act) // h.w < h.n]

    def switch_target(self, cloud: str):
        if self.cfg.targets and cloud not in self.cfg.targets:
            raise ValueError(f"unknown cloud target {cloud!r}")
        self.target = cloud
