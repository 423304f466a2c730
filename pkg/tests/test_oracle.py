import numpy as np
import pytest

from cavplan.errors import SingularKKT
from cavplan.oracle import (
    DenseQP,
    NaiveBoxState,
    UnionFind,
    central_difference_jacobian,
    kkt_solve,
    naive_box_dual_step,
    nearest_by_scan,
)


class TestKktSolve:
    def test_unconstrained_identity(self):
        qp = DenseQP(H=np.eye(3), g=np.zeros(3), Aeq=np.zeros((0, 3)), beq=np.zeros(0))
        assert np.allclose(kkt_solve(qp), 0.0)

    def test_minimum_norm_projection(self):
        Aeq = np.array([[1.0, 0.0, 0.0]])
        qp = DenseQP(H=np.eye(3), g=np.zeros(3), Aeq=Aeq, beq=np.array([1.0]))
        expect = Aeq.T @ np.linalg.solve(Aeq @ Aeq.T, np.array([1.0]))
        assert np.allclose(kkt_solve(qp), expect)

    def test_random_instances_satisfy_kkt_residuals(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, m = 8, 3
            M = rng.normal(size=(n, n))
            H = M @ M.T + 0.5 * np.eye(n)
            g = rng.normal(size=n)
            Aeq = rng.normal(size=(m, n))
            beq = rng.normal(size=m)
            x = kkt_solve(DenseQP(H=H, g=g, Aeq=Aeq, beq=beq))
            nu = np.linalg.lstsq(Aeq.T, -(H @ x + g), rcond=None)[0]
            assert np.abs(H @ x + g + Aeq.T @ nu).max() <= 1e-10
            assert np.abs(Aeq @ x - beq).max() <= 1e-10

    def test_singular_system_raises(self):
        qp = DenseQP(
            H=np.zeros((2, 2)), g=np.zeros(2), Aeq=np.zeros((0, 2)), beq=np.zeros(0)
        )
        with pytest.raises(SingularKKT):
            kkt_solve(qp)


def box_setup(rng, n, rows):
    neighbors = [[j for j in range(n) if j != i] for i in range(n)]
    gamma = 1.0 / (2.0 * (0.05 + 2 * 0.002 * (n - 1)))
    lower = rng.uniform(-2.0, -0.5, size=(n, rows))
    upper = rng.uniform(0.5, 2.0, size=(n, rows))
    return neighbors, [gamma] * n, lower, upper


class TestNaiveBoxDualStep:
    def test_symmetric_zero_start_stays_consistent(self):
        rng = np.random.default_rng(1)
        n, rows = 3, 7
        neighbors, gammas, lower, upper = box_setup(rng, n, rows)
        state = NaiveBoxState.zeros(n, rows)
        out = naive_box_dual_step(
            state, np.zeros((n, rows)), neighbors, gammas, 0.05, 0.002, lower, upper
        )
        for owner in range(n):
            copies = [out.y[v, owner] for v in range(n) if v != owner]
            for c in copies[1:]:
                assert np.array_equal(copies[0], c)

    def test_induction_step_preserves_shared_copies(self):
        # start from equal non-owner copies with arbitrary values: one sweep
        # must keep all non-owner copies of each owner block identical
        rng = np.random.default_rng(2)
        n, rows = 4, 5
        neighbors, gammas, lower, upper = box_setup(rng, n, rows)
        state = NaiveBoxState.zeros(n, rows)
        for name in ("p", "s", "r", "y", "x"):
            arr = getattr(state, name)
            for owner in range(n):
                shared = rng.normal(size=rows)
                own = rng.normal(size=rows)
                for v in range(n):
                    arr[v, owner] = own if v == owner else shared
        out = naive_box_dual_step(
            state, rng.normal(size=(n, rows)), neighbors, gammas, 0.05, 0.002, lower, upper
        )
        for name in ("p", "s", "r", "y", "x"):
            arr = getattr(out, name)
            for owner in range(n):
                copies = [arr[v, owner] for v in range(n) if v != owner]
                for c in copies[1:]:
                    assert np.abs(copies[0] - c).max() <= 1e-12

    def test_single_agent_matches_reduced_update(self):
        from cavplan.admm import DualState, dual_update_box
        from cavplan.assembly import SolverConfig

        rng = np.random.default_rng(3)
        rows = 7
        cfg = SolverConfig(horizon=2, exec_horizon=1)
        lower = rng.uniform(-2, -0.5, size=(1, rows))
        upper = rng.uniform(0.5, 2, size=(1, rows))
        box_vals = rng.normal(size=(1, rows))

        naive = NaiveBoxState.zeros(1, rows)
        naive = naive_box_dual_step(
            naive, box_vals, [[]], [cfg.gamma(0)], cfg.sigma, cfg.rho, lower, upper
        )

        duals = DualState.zeros(1, 0, rows)
        dual_update_box(0, duals, np.zeros((1, rows)), np.zeros((1, rows)), 0, cfg, [0])
        g2 = 2.0 * cfg.gamma(0)
        duals.y2_self[0] = g2 * (box_vals[0] + duals.r2_self[0])
        a = duals.s2_self[0] / cfg.sigma + duals.y2_self[0]
        lam = np.clip(a, lower[0], upper[0])
        duals.x2_self[0] = a - lam

        assert np.abs(naive.p[0, 0] - duals.p2_self[0]).max() <= 1e-15
        assert np.abs(naive.r[0, 0] - duals.r2_self[0]).max() <= 1e-15
        assert np.abs(naive.y[0, 0] - duals.y2_self[0]).max() <= 1e-15
        assert np.abs(naive.x[0, 0] - duals.x2_self[0]).max() <= 1e-15


def test_central_difference_jacobian_on_quadratic():
    A = np.array([[2.0, 1.0], [0.5, -3.0]])

    def f(x):
        return A @ x + np.array([x[0] * x[1], 0.0])

    x0 = np.array([1.0, 2.0])
    jac = central_difference_jacobian(f, x0)
    expect = A + np.array([[2.0, 1.0], [0.0, 0.0]])
    assert np.abs(jac - expect).max() <= 1e-6


def test_nearest_by_scan_tie_break():
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    assert nearest_by_scan(pts, [0.0, 0.0]) == 0


def test_union_find_groups():
    uf = UnionFind(5)
    uf.union(0, 3)
    uf.union(3, 4)
    assert uf.groups() == [[0, 3, 4], [1], [2]]
