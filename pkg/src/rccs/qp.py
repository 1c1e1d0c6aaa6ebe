"""Dense convex QP in the form

    minimize    z' H z + h' z
    subject to  T z = t,  G z <= g

solved by eliminating the equalities onto a null-space basis and running a
Mehrotra predictor-corrector interior-point method on the reduced
inequality-constrained problem. The inner solver is numba-compiled when
numba is available; the same code runs in plain Python otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max-iter"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class ReducedProblem:
    """Problem restated on a basis of the equality constraints' null space:
    z = z_p + Z v, then min 1/2 v'Q v + c'v s.t. A v <= b.

    When the trailing ``ns`` columns of A are slack columns -- each row
    touching at most one of them, always with coefficient -1 -- the split
    (A_dense, s_idx) is carried along so the interior-point iteration can
    assemble its normal matrix without the dense slack block."""

    Z: np.ndarray
    z_p: np.ndarray
    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    A_dense: np.ndarray | None = None   # A[:, :nu], C-contiguous
    A_dense_T: np.ndarray | None = None  # its transpose, C-contiguous
    s_idx: np.ndarray | None = None     # per-row slack column (or -1)
    ns: int = 0


def split_slack_columns(A: np.ndarray, ns: int):
    """(A_dense, s_idx) when the last ns columns qualify as slack columns;
    None when they do not."""
    if ns <= 0 or A.size == 0:
        return None
    nu = A.shape[1] - ns
    if nu < 0:
        return None
    tail = A[:, nu:]
    s_idx = np.full(A.shape[0], -1, dtype=np.int64)
    for r in range(A.shape[0]):
        nz = np.flatnonzero(tail[r])
        if nz.size > 1:
            return None
        if nz.size == 1:
            if tail[r, nz[0]] != -1.0:
                return None
            s_idx[r] = nz[0]
    return np.ascontiguousarray(A[:, :nu]), s_idx


@dataclass
class QpProblem:
    H: np.ndarray
    h: np.ndarray
    T: np.ndarray
    t: np.ndarray
    G: np.ndarray
    g: np.ndarray
    N: int = 0
    n: int = 0
    m: int = 0
    n_slack: int = 0
    reduced: ReducedProblem | None = field(default=None, repr=False)

    @property
    def n_var(self) -> int:
        return self.H.shape[0]


@dataclass
class QpSolution:
    z: np.ndarray
    iterations: int
    status: str
    objective: float = float("nan")
    eq_residual: float = 0.0
    ineq_violation: float = 0.0
    stationarity: float = 0.0


@njit(cache=True)
def _tri_solve(L, rhs):
    # forward/back substitution for L L' x = rhs
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        acc = rhs[i]
        for j in range(i):
            acc -= L[i, j] * y[j]
        y[i] = acc / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for j in range(i + 1, n):
            acc -= L[j, i] * x[j]
        x[i] = acc / L[i, i]
    return x


@njit(cache=True)
def _step_len(q, dq):
    # largest alpha in (0, 1] keeping q + alpha*dq >= (1-0.9995)*q
    alpha = 1.0
    for i in range(q.shape[0]):
        if dq[i] < 0.0:
            a = -0.9995 * q[i] / dq[i]
            if a < alpha:
                alpha = a
    return alpha


@njit(cache=True)
def _a_mat_vec(Au, s_idx, v):
    """A @ v with A = [Au | slack columns indexed by s_idx]."""
    mi, nu = Au.shape
    out = Au @ v[:nu]
    for r in range(mi):
        sj = s_idx[r]
        if sj >= 0:
            out[r] -= v[nu + sj]
    return out


@njit(cache=True)
def _a_mat_tvec(AuT, s_idx, nv, y):
    """A.T @ y for the same split representation."""
    nu, mi = AuT.shape
    out = np.zeros(nv)
    out[:nu] = AuT @ y
    for r in range(mi):
        sj = s_idx[r]
        if sj >= 0:
            out[nu + sj] -= y[r]
    return out


@njit(cache=True)
def _normal_matrix(Q, Au, AuT, s_idx, d, reg):
    """Q + A' diag(d) A under the slack split; the dense block goes through
    one BLAS product, the slack rows contribute single columns."""
    nv = Q.shape[0]
    mi, nu = Au.shape
    ns = nv - nu
    M = Q.copy()
    Aud = Au * d.reshape(mi, 1)
    M[:nu, :nu] += AuT @ Aud
    cross = np.zeros((ns, nu))
    for r in range(mi):
        sj = s_idx[r]
        if sj >= 0:
            for j in range(nu):
                cross[sj, j] += Aud[r, j]
            M[nu + sj, nu + sj] += d[r]
    for sj in range(ns):
        col = nu + sj
        for j in range(nu):
            M[col, j] -= cross[sj, j]
            M[j, col] -= cross[sj, j]
    for j in range(nv):
        M[j, j] += reg
    return M


@njit(cache=True)
def _ipm(Q, c, Au, AuT, s_idx, b, tol, max_iter):
    """Primal-dual IPM for min 1/2 v'Qv + c'v s.t. Av <= b, with A given in
    the (dense block, slack column index) split form.

    Returns (v, lam, iterations, status) with status 0=optimal, 1=max-iter.
    """
    nv = Q.shape[0]
    mi = Au.shape[0]
    reg = 1e-13 * (1.0 + np.trace(Q) / nv)

    v = np.zeros(nv)
    s = b.copy()
    for i in range(mi):
        if s[i] < 1.0:
            s[i] = 1.0
    lam = np.ones(mi)

    c_scale = 1.0 + np.max(np.abs(c)) if nv > 0 else 1.0
    b_scale = 1.0 + np.max(np.abs(b)) if mi > 0 else 1.0

    it = 0
    for it in range(1, max_iter + 1):
        Av = _a_mat_vec(Au, s_idx, v)
        r_d = Q @ v + c + _a_mat_tvec(AuT, s_idx, nv, lam)
        r_p = Av + s - b
        mu = lam @ s / mi

        if (np.max(np.abs(r_d)) <= tol * c_scale
                and np.max(np.abs(r_p)) <= tol * b_scale
                and mu <= tol):
            return v, lam, it - 1, 0

        s_floor = 1e-14 * b_scale
        d = lam / np.maximum(s, s_floor)
        M = _normal_matrix(Q, Au, AuT, s_idx, d, reg)
        if not np.all(np.isfinite(M)):
            return v, lam, it, 1
        L = np.linalg.cholesky(M)

        # affine (predictor) direction, complementarity target 0
        r_c = s * lam
        rhs = -r_d - _a_mat_tvec(AuT, s_idx, nv, d * r_p - r_c / s)
        dv_a = _tri_solve(L, rhs)
        dlam_a = d * (_a_mat_vec(Au, s_idx, dv_a) + r_p) - r_c / s
        ds_a = -(r_c + s * dlam_a) / lam

        a_p = _step_len(s, ds_a)
        a_d = _step_len(lam, dlam_a)
        mu_aff = (lam + a_d * dlam_a) @ (s + a_p * ds_a) / mi
        sigma = (mu_aff / mu) ** 3

        # corrector
        r_c = s * lam + ds_a * dlam_a - sigma * mu
        rhs = -r_d - _a_mat_tvec(AuT, s_idx, nv, d * r_p - r_c / s)
        dv = _tri_solve(L, rhs)
        dlam = d * (_a_mat_vec(Au, s_idx, dv) + r_p) - r_c / s
        ds = -(r_c + s * dlam) / lam

        alpha = min(_step_len(s, ds), _step_len(lam, dlam))
        v = v + alpha * dv
        s = s + alpha * ds
        lam = lam + alpha * dlam

    return v, lam, it, 1


def reduce_problem(p: QpProblem, eq_tol: float = 1e-8) -> ReducedProblem | None:
    """Eliminate T z = t; returns None when the equality system is infeasible."""
    nz = p.n_var
    if p.T.size == 0:
        Z = np.eye(nz)
        z_p = np.zeros(nz)
    else:
        z_p, res, rank, _ = np.linalg.lstsq(p.T, p.t, rcond=None)
        if np.max(np.abs(p.T @ z_p - p.t)) > eq_tol * (1.0 + np.max(np.abs(p.t))):
            return None
        u, sv, vt = np.linalg.svd(p.T, full_matrices=True)
        r = int(np.sum(sv > max(p.T.shape) * np.finfo(float).eps * (sv[0] if sv.size else 1.0)))
        Z = vt[r:].T
    return _assemble_reduced(p, Z, z_p)


def _assemble_reduced(p: QpProblem, Z: np.ndarray, z_p: np.ndarray) -> ReducedProblem:
    HZ = p.H @ Z
    Q = Z.T @ HZ * 2.0
    Q = 0.5 * (Q + Q.T)
    c = Z.T @ (p.h + 2.0 * (p.H @ z_p))
    if p.G.size:
        A = p.G @ Z
        b = p.g - p.G @ z_p
    else:
        A = np.zeros((0, Z.shape[1]))
        b = np.zeros(0)
    return ReducedProblem(Z=Z, z_p=z_p, Q=Q, c=c, A=A, b=b)


def solve_qp(p: QpProblem, tol: float = 1e-10, max_iter: int = 60) -> QpSolution:
    """Solve a QpProblem; never raises on solver failure, reports status."""
    red = p.reduced if p.reduced is not None else reduce_problem(p)
    if red is None:
        return QpSolution(z=np.zeros(p.n_var), iterations=0,
                          status=STATUS_INFEASIBLE)

    nv = red.Z.shape[1]
    if nv == 0:
        return _finish(p, red, np.zeros(0), np.zeros(0), 0, STATUS_OPTIMAL)

    if red.A.shape[0] == 0:
        # unconstrained: stationary point of the reduced objective
        reg = 1e-13 * (1.0 + np.trace(red.Q) / nv)
        v = np.linalg.solve(red.Q + reg * np.eye(nv), -red.c)
        return _finish(p, red, v, np.zeros(0), 1, STATUS_OPTIMAL)

    Q = np.ascontiguousarray(red.Q, dtype=np.float64)
    c = np.ascontiguousarray(red.c, dtype=np.float64)
    A = np.ascontiguousarray(red.A, dtype=np.float64)
    b = np.ascontiguousarray(red.b, dtype=np.float64)
    if red.A_dense is not None and red.s_idx is not None:
        Au, s_idx = red.A_dense, red.s_idx
    else:
        Au, s_idx = A, np.full(A.shape[0], -1, dtype=np.int64)
    if red.A_dense_T is None:
        red.A_dense_T = np.ascontiguousarray(Au.T)
    try:
        v, lam, iters, code = _ipm(Q, c, Au, red.A_dense_T, s_idx, b,
                                   tol, max_iter)
    except np.linalg.LinAlgError:
        # numeric breakdown on a badly scaled instance
        return QpSolution(z=red.z_p.copy(), iterations=max_iter,
                          status=STATUS_MAX_ITER)
    status = STATUS_OPTIMAL if code == 0 else STATUS_MAX_ITER
    if code == 0:
        v, lam = _polish(Q, c, A, b, v, lam)
    return _finish(p, red, v, lam, max(iters, 1), status)


def _polish(Q, c, A, b, v, lam, tol=1e-9):
    """Re-solve on the active set identified by the IPM; keeps the polished
    point only when it satisfies the KKT conditions."""
    s = b - A @ v
    act = np.flatnonzero(lam > s)
    nv = Q.shape[0]
    if act.size > nv:
        act = act[np.argsort(s[act])][:nv]
    Aa = A[act]
    k = act.size
    kkt = np.zeros((nv + k, nv + k))
    kkt[:nv, :nv] = Q
    kkt[:nv, nv:] = Aa.T
    kkt[nv:, :nv] = Aa
    rhs = np.concatenate([-c, b[act]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return v, lam
    v2 = sol[:nv]
    lam2 = np.zeros(A.shape[0])
    lam2[act] = sol[nv:]
    scale = 1.0 + float(np.max(np.abs(b))) if b.size else 1.0
    if np.min(lam2[act], initial=0.0) < -tol:
        return v, lam
    if b.size and float(np.max(A @ v2 - b)) > tol * scale:
        return v, lam
    return v2, lam2


def _finish(p: QpProblem, red: ReducedProblem, v: np.ndarray,
            lam: np.ndarray, iters: int, status: str) -> QpSolution:
    z = red.z_p + red.Z @ v if v.size else red.z_p.copy()
    obj = float(z @ (p.H @ z) + p.h @ z)
    eq_res = float(np.max(np.abs(p.T @ z - p.t))) if p.T.size else 0.0
    ineq = float(np.max(p.G @ z - p.g)) if p.G.size else 0.0
    if v.size:
        grad = red.Q @ v + red.c
        if lam.size:
            grad = grad + red.A.T @ lam
        stat = float(np.max(np.abs(grad)))
    else:
        stat = 0.0
    return QpSolution(z=z, iterations=iters, status=status, objective=obj,
                      eq_residual=eq_res, ineq_violation=max(ineq, 0.0),
                      stationarity=stat)
