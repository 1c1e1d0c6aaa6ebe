import itertools

import numpy as np
import pytest

from rccs.qp import (QpProblem, STATUS_OPTIMAL, solve_qp,
                     split_slack_columns)


def _problem(H, h, T=None, t=None, G=None, g=None):
    n = H.shape[0]
    T = np.zeros((0, n)) if T is None else T
    t = np.zeros(0) if t is None else t
    G = np.zeros((0, n)) if G is None else G
    g = np.zeros(0) if g is None else g
    return QpProblem(H=np.asarray(H, float), h=np.asarray(h, float),
                     T=np.asarray(T, float), t=np.asarray(t, float),
                     G=np.asarray(G, float), g=np.asarray(g, float))


def brute_force_box(H, h, lo, hi):
    """Global optimum of min z'Hz + h'z s.t. lo <= z <= hi by enumerating
    every pattern of active bounds and checking KKT feasibility."""
    n = H.shape[0]
    best = None
    best_obj = np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        free = [i for i, p in enumerate(pattern) if p == 0]
        z = np.empty(n)
        for i, p in enumerate(pattern):
            if p == -1:
                z[i] = lo[i]
            elif p == 1:
                z[i] = hi[i]
        if free:
            # stationarity on the free block: 2H z + h = 0 restricted
            Hff = 2.0 * H[np.ix_(free, free)]
            rhs = -h[free]
            fixed = [i for i in range(n) if i not in free]
            if fixed:
                rhs = rhs - 2.0 * H[np.ix_(free, fixed)] @ z[fixed]
            try:
                z[free] = np.linalg.solve(Hff, rhs)
            except np.linalg.LinAlgError:
                continue
        if np.any(z < lo - 1e-9) or np.any(z > hi + 1e-9):
            continue
        # multipliers on the active bounds must be nonnegative
        grad = 2.0 * H @ z + h
        ok = True
        for i, p in enumerate(pattern):
            if p == -1 and grad[i] < -1e-8:
                ok = False
            if p == 1 and grad[i] > 1e-8:
                ok = False
        if not ok:
            continue
        obj = z @ H @ z + h @ z
        if obj < best_obj - 1e-12:
            best_obj = obj
            best = z.copy()
    return best


def test_unconstrained_stationarity():
    sol = solve_qp(_problem(np.eye(2), [-2.0, 0.0]))
    assert sol.status == STATUS_OPTIMAL
    assert np.allclose(sol.z, [1.0, 0.0], atol=1e-8)


def test_single_active_constraint():
    # min z^2 s.t. z >= 1  (written as -z <= -1)
    sol = solve_qp(_problem(np.eye(1), [0.0],
                            G=[[-1.0]], g=[-1.0]))
    assert sol.status == STATUS_OPTIMAL
    assert sol.z[0] == pytest.approx(1.0, abs=1e-8)


def test_equality_reduction():
    # min ||z||^2 s.t. z0 + z1 = 1 -> z = (0.5, 0.5)
    sol = solve_qp(_problem(np.eye(2), [0.0, 0.0],
                            T=[[1.0, 1.0]], t=[1.0]))
    assert sol.status == STATUS_OPTIMAL
    assert np.allclose(sol.z, [0.5, 0.5], atol=1e-8)
    assert sol.eq_residual < 1e-9


def test_infeasible_equalities():
    sol = solve_qp(_problem(np.eye(2), [0.0, 0.0],
                            T=[[1.0, 0.0], [1.0, 0.0]], t=[0.0, 1.0]))
    assert sol.status != STATUS_OPTIMAL


def test_oracle_200_random_box_qps():
    rng = np.random.default_rng(2024)
    n = 6
    for trial in range(200):
        A = rng.normal(size=(n, n))
        H = A @ A.T / n + np.eye(n) * rng.uniform(0.1, 1.0)
        h = rng.normal(size=n) * 2.0
        lo = -rng.uniform(0.2, 1.5, size=n)
        hi = rng.uniform(0.2, 1.5, size=n)
        G = np.vstack([np.eye(n), -np.eye(n)])
        g = np.concatenate([hi, -lo])
        sol = solve_qp(_problem(H, h, G=G, g=g))
        ref = brute_force_box(H, h, lo, hi)
        assert ref is not None, f"oracle failed on trial {trial}"
        assert sol.status == STATUS_OPTIMAL, f"trial {trial}: {sol.status}"
        assert np.max(np.abs(sol.z - ref)) < 1e-6, (
            f"trial {trial}: |z - oracle| = {np.max(np.abs(sol.z - ref))}")


def test_solution_certificates():
    rng = np.random.default_rng(5)
    n = 8
    A = rng.normal(size=(n, n))
    H = A @ A.T / n + np.eye(n)
    h = rng.normal(size=n)
    G = np.vstack([np.eye(n), -np.eye(n)])
    g = np.full(2 * n, 0.3)
    T = rng.normal(size=(2, n))
    t = rng.normal(size=2) * 0.05
    sol = solve_qp(QpProblem(H=H, h=h, T=T, t=t, G=G, g=g))
    assert sol.status == STATUS_OPTIMAL
    assert np.max(np.abs(T @ sol.z - t)) < 1e-8
    assert np.max(G @ sol.z - g) < 1e-7
    assert np.isfinite(sol.objective)


def test_split_slack_columns():
    A = np.array([[1.0, 0.0, -1.0, 0.0],
                  [0.0, 1.0, 0.0, -1.0],
                  [0.5, 0.5, 0.0, 0.0]])
    out = split_slack_columns(A, 2)
    assert out is not None
    Au, s_idx = out
    assert np.allclose(Au, A[:, :2])
    assert list(s_idx) == [0, 1, -1]
    # a positive slack coefficient disqualifies the split
    bad = A.copy()
    bad[0, 2] = 1.0
    assert split_slack_columns(bad, 2) is None
    # two slack entries in one row disqualify it too
    bad2 = A.copy()
    bad2[0, 3] = -1.0
    assert split_slack_columns(bad2, 2) is None


def test_never_raises_on_hard_problems():
    # semidefinite H with conflicting near-active constraints
    H = np.diag([1.0, 0.0])
    sol = solve_qp(_problem(H, [0.0, 1e-8],
                            G=[[0.0, 1.0], [0.0, -1.0]], g=[1.0, 1.0]))
    assert sol.status in (STATUS_OPTIMAL, "max-iter", "infeasible")
    assert np.all(np.isfinite(sol.z))
