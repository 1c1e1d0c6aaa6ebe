"""Variable-rate soft-constrained MPC.

Builds the tracking QP for the current control period, estimates the state
at the activation instant of the first action (dead-time compensation), and
returns the full predicted input sequence so the client can run open loop.

Decision variable layout: z = [x_0 .. x_N, u_0 .. u_{N-1}, phi_0 .. phi_N],
with one scalar slack per stage relaxing every soft state bound of that
stage. Stage costs are the continuous weights scaled by the period
(rectangle rule), so objectives are comparable across rates; the terminal
weight is the solution of the discrete algebraic Riccati equation at the
same period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .plant import ContinuousModel, DiscreteModel, discretize
from .qp import (QpProblem, QpSolution, ReducedProblem, solve_qp,
                 split_slack_columns, STATUS_OPTIMAL)


@dataclass(frozen=True)
class MpcSpec:
    """Continuous-time controller parameterization."""

    gamma_x: tuple = (100.0, 1.0, 1.0)          # stage state cost diagonal
    gamma_u: float = 0.1                        # stage input cost
    gamma_s: float = 1e5                        # slack penalty weight
    N_c: float = 0.9                            # horizon (s)
    u_min: float = -5.0
    u_max: float = 5.0
    # the velocity bound keeps planned transits slow enough to stop within
    # the position margin despite actuation noise
    x_min: tuple = (-0.55, -1.0, -math.pi / 4)
    x_max: tuple = (0.55, 1.0, math.pi / 4)
    # KKT tolerance of the embedded solve; 1e-8 is far below actuator noise
    # and saves ~30% of the iterations (and hence computation delay) that
    # full 1e-10 convergence would cost
    solver_tol: float = 1e-8

    def key(self):
        return (self.gamma_x, self.gamma_u, self.gamma_s, self.N_c,
                self.u_min, self.u_max, self.x_min, self.x_max)


@dataclass
class ControlResponse:
    k: int                    # sample index the request was taken at
    h_d: float                # period the sequence was computed for
    u_seq: np.ndarray         # [u(0) .. u(N-1)]
    x_pred: np.ndarray        # (N+1, n) predicted states
    iterations: int
    tau_c: float = 0.0        # service processing time, set by the server
    rtt: float = float("nan")  # round trip as measured by the client
    degraded: bool = False
    status: str = STATUS_OPTIMAL

    @property
    def N(self) -> int:
        return len(self.u_seq)


def horizon(N_c: float, h_d: float) -> int:
    """Smallest integer >= N_c / h_d (guarded against float dust)."""
    if N_c <= 0 or h_d <= 0:
        raise ValueError("N_c and h_d must be > 0")
    return math.ceil(N_c / h_d - 1e-9)


def terminal_cost(model: DiscreteModel, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    return scipy.linalg.solve_discrete_are(model.A_d, model.B_d, Q, R)


class _Structure:
    """Everything about the QP that depends only on (spec, model)."""

    def __init__(self, spec: MpcSpec, model: DiscreteModel):
        n, m = model.n, model.m
        h_d = model.h
        N = horizon(spec.N_c, h_d)
        A, B = model.A_d, model.B_d

        Qx = np.diag(spec.gamma_x) * h_d
        Ru = np.atleast_2d(spec.gamma_u) * h_d
        P = terminal_cost(model, Qx, Ru)
        soft = [c for c in range(n)
                if math.isfinite(spec.x_min[c]) or math.isfinite(spec.x_max[c])]
        ns = (N + 1) if soft else 0

        nx = n * (N + 1)
        nu = m * N
        nz = nx + nu + ns
        iu = nx           # offset of the input block
        ip = nx + nu      # offset of the slack block

        H = np.zeros((nz, nz))
        for j in range(N):
            H[j * n:(j + 1) * n, j * n:(j + 1) * n] = Qx
            H[iu + j * m:iu + (j + 1) * m, iu + j * m:iu + (j + 1) * m] = Ru
        H[N * n:(N + 1) * n, N * n:(N + 1) * n] = P
        for j in range(ns):
            H[ip + j, ip + j] = spec.gamma_s * h_d

        # maps x_s -> linear cost vector h (only x rows are nonzero)
        L = np.zeros((nz, n))
        for j in range(N):
            L[j * n:(j + 1) * n] = -2.0 * Qx
        L[N * n:(N + 1) * n] = -2.0 * P

        # equalities: x_0 pin then the dynamics chain
        T = np.zeros((nx, nz))
        T[:n, :n] = np.eye(n)
        for j in range(N):
            r = n * (j + 1)
            T[r:r + n, r:r + n] = np.eye(n)
            T[r:r + n, j * n:(j + 1) * n] = -A
            T[r:r + n, iu + j * m:iu + (j + 1) * m] = -B

        rows = []
        g = []
        if math.isfinite(spec.u_max):
            for j in range(N):
                row = np.zeros(nz)
                row[iu + j * m] = 1.0
                rows.append(row)
                g.append(spec.u_max)
        if math.isfinite(spec.u_min):
            for j in range(N):
                row = np.zeros(nz)
                row[iu + j * m] = -1.0
                rows.append(row)
                g.append(-spec.u_min)
        for c in soft:
            for j in range(N + 1):
                if math.isfinite(spec.x_max[c]):
                    row = np.zeros(nz)
                    row[j * n + c] = 1.0
                    row[ip + j] = -1.0
                    rows.append(row)
                    g.append(spec.x_max[c])
                if math.isfinite(spec.x_min[c]):
                    row = np.zeros(nz)
                    row[j * n + c] = -1.0
                    row[ip + j] = -1.0
                    rows.append(row)
                    g.append(-spec.x_min[c])
        for j in range(ns):
            row = np.zeros(nz)
            row[ip + j] = -1.0
            rows.append(row)
            g.append(0.0)
        G = np.array(rows) if rows else np.zeros((0, nz))
        g = np.array(g)

        # null-space basis from the rollout map: x_j = A^j x0 + sum A^(j-1-l) B u_l
        Phi = np.zeros((nz, n))      # maps x0 to the particular solution z_p
        Ap = np.eye(n)
        for j in range(N + 1):
            Phi[j * n:(j + 1) * n] = Ap
            Ap = A @ Ap
        Z = np.zeros((nz, nu + ns))
        for j in range(1, N + 1):
            blk = B.copy()
            for l in range(j - 1, -1, -1):
                Z[j * n:(j + 1) * n, l * m:(l + 1) * m] = blk
                blk = A @ blk
        Z[iu:iu + nu, :nu] = np.eye(nu)
        if ns:
            Z[ip:, nu:] = np.eye(ns)

        self.spec = spec
        self.model = model
        self.N, self.n, self.m, self.ns = N, n, m, ns
        self.nz, self.nu, self.iu, self.ip = nz, nu, iu, ip
        self.H, self.L, self.T, self.G, self.g = H, L, T, G, g
        self.Phi, self.Z = Phi, Z
        self.Q_r = 2.0 * (Z.T @ H @ Z)
        self.Q_r = 0.5 * (self.Q_r + self.Q_r.T)
        self.A_r = G @ Z if G.size else np.zeros((0, nu + ns))
        split = split_slack_columns(self.A_r, ns)
        self.Au_r, self.s_idx = split if split is not None else (None, None)
        self.AuT_r = np.ascontiguousarray(self.Au_r.T) \
            if self.Au_r is not None else None
        self.M_cost = 2.0 * (Z.T @ H @ Phi)   # x0 contribution to c_r
        self.M_lin = Z.T @ L                  # x_s contribution to c_r
        self.M_ineq = G @ Phi if G.size else np.zeros((0, n))

    def problem(self, x0: np.ndarray, x_s: np.ndarray) -> QpProblem:
        t = np.zeros(self.T.shape[0])
        t[:self.n] = x0
        h = self.L @ x_s
        z_p = self.Phi @ x0
        red = ReducedProblem(
            Z=self.Z, z_p=z_p, Q=self.Q_r,
            c=self.M_cost @ x0 + self.M_lin @ x_s,
            A=self.A_r, b=self.g - self.M_ineq @ x0,
            A_dense=self.Au_r, A_dense_T=self.AuT_r,
            s_idx=self.s_idx, ns=self.ns)
        return QpProblem(H=self.H, h=h, T=self.T, t=t, G=self.G, g=self.g,
                         N=self.N, n=self.n, m=self.m, n_slack=self.ns,
                         reduced=red)


_structures: dict = {}


def _structure(spec: MpcSpec, model: DiscreteModel) -> _Structure:
    key = (spec.key(), model.A_d.tobytes(), model.B_d.tobytes(),
           round(model.h, 12))
    s = _structures.get(key)
    if s is None:
        s = _Structure(spec, model)
        _structures[key] = s
    return s


def build_qp(spec: MpcSpec, model: DiscreteModel, x0: np.ndarray,
             x_s: np.ndarray) -> QpProblem:
    """Tracking QP for one MPC step. Heavy matrices are cached per
    (spec, model); only the vectors depend on (x0, x_s)."""
    x0 = np.asarray(x0, dtype=float)
    x_s = np.asarray(x_s, dtype=float)
    if x0.shape != (model.n,) or x_s.shape != (model.n,):
        raise ValueError(
            f"state vectors must have shape ({model.n},), "
            f"got x0 {x0.shape}, x_s {x_s.shape}")
    return _structure(spec, model).problem(x0, x_s)


def estimate_state(x_meas: np.ndarray, pending_inputs, model: DiscreteModel) -> np.ndarray:
    """Roll the base-rate model forward over the dead time, applying the
    inputs that are already committed for those ticks."""
    x = np.asarray(x_meas, dtype=float).copy()
    for u in pending_inputs:
        x = model.A_d @ x + model.B_d[:, 0] * u
    return x


def mpc_step(x_meas: np.ndarray, pending_inputs, h_d: float, x_s: np.ndarray,
             spec: MpcSpec, model_c: ContinuousModel, h_q: float,
             k: int = 0, prev: ControlResponse | None = None) -> ControlResponse:
    """One controller invocation: discretize at h_d, estimate the activation
    state, build and solve the QP. Solver trouble never raises; it returns
    the previous plan's shifted tail flagged degraded."""
    dm = _model_at(model_c, h_d)
    base = _model_at(model_c, h_q)
    x0 = estimate_state(x_meas, pending_inputs, base)
    prob = build_qp(spec, dm, x0, np.asarray(x_s, dtype=float))
    sol = solve_qp(prob, tol=spec.solver_tol)
    N, n, m = prob.N, prob.n, prob.m
    if sol.status == STATUS_OPTIMAL:
        iu = n * (N + 1)
        u_seq = sol.z[iu:iu + N * m].copy()
        x_pred = sol.z[:iu].reshape(N + 1, n).copy()
        return ControlResponse(k=k, h_d=h_d, u_seq=u_seq, x_pred=x_pred,
                               iterations=sol.iterations, status=sol.status)
    if prev is not None and prev.N > 1:
        u_seq = np.concatenate([prev.u_seq[1:], prev.u_seq[-1:]])
    else:
        u_seq = np.zeros(N)
    return ControlResponse(k=k, h_d=h_d, u_seq=u_seq,
                           x_pred=np.tile(x0, (N + 1, 1)),
                           iterations=sol.iterations, degraded=True,
                           status=sol.status)


_models: dict = {}


def _model_at(model_c: ContinuousModel, h: float) -> DiscreteModel:
    key = (model_c.A_c.tobytes(), model_c.B_c.tobytes(), round(h, 12))
    dm = _models.get(key)
    if dm is None:
        dm = discretize(model_c, h)
        _models[key] = dm
    return dm
