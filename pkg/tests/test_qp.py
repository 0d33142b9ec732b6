"""QP solver checks: hand problems, KKT residuals, active-set enumeration."""

import numpy as np
import pytest

from rdmperch.qp import QpInfeasibleError, enumerate_active_sets, qp_solve


class TestHandProblems:
    def test_active_bound(self):
        # min x^2 s.t. x >= 1
        res = qp_solve(np.array([[2.0]]), np.zeros(1), np.array([[1.0]]), np.array([1.0]), None)
        assert res.x[0] == pytest.approx(1.0, abs=1e-10)
        assert res.kkt_residual < 1e-8

    def test_symmetric_equality(self):
        # min |x|^2 s.t. x1 + x2 = 2
        res = qp_solve(
            2.0 * np.eye(2), np.zeros(2), A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([2.0])
        )
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-10)

    def test_unconstrained(self):
        P = np.diag([2.0, 4.0])
        c = np.array([-2.0, -4.0])
        res = qp_solve(P, c)
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-10)

    def test_two_sided_box(self):
        # min (x-3)^2 s.t. -1 <= x <= 2
        res = qp_solve(
            np.array([[2.0]]),
            np.array([-6.0]),
            np.array([[1.0]]),
            np.array([-1.0]),
            np.array([2.0]),
        )
        assert res.x[0] == pytest.approx(2.0, abs=1e-10)

    def test_infeasible_reported(self):
        with pytest.raises(QpInfeasibleError) as exc:
            qp_solve(
                np.array([[2.0]]),
                np.zeros(1),
                np.array([[1.0], [1.0]]),
                np.array([2.0, -np.inf]),
                np.array([np.inf, 1.0]),
            )
        assert exc.value.violation > 0.0

    def test_non_pd_rejected(self):
        with pytest.raises(ValueError):
            qp_solve(np.array([[0.0]]), np.zeros(1))


class TestRandomAgainstEnumeration:
    def test_random_qps_match_enumeration(self):
        rng = np.random.default_rng(53)
        for _ in range(60):
            n = 4
            L = rng.normal(size=(n, n))
            P = L @ L.T + n * np.eye(n)
            c = rng.normal(size=n)
            A = rng.normal(size=(4, n))
            mid = A @ rng.normal(size=n) * 0.3
            b_lo = mid - rng.uniform(0.2, 1.5, 4)
            b_hi = mid + rng.uniform(0.2, 1.5, 4)
            res = qp_solve(P, c, A, b_lo, b_hi)
            _, obj = enumerate_active_sets(P, c, A, b_lo, b_hi)
            assert res.objective == pytest.approx(obj, abs=1e-6)
            assert res.kkt_residual < 1e-6

    def test_with_equalities(self):
        rng = np.random.default_rng(59)
        for _ in range(20):
            n = 5
            L = rng.normal(size=(n, n))
            P = L @ L.T + n * np.eye(n)
            c = rng.normal(size=n)
            A = rng.normal(size=(3, n))
            x_feas = rng.normal(size=n) * 0.2
            b_lo = A @ x_feas - rng.uniform(0.2, 1.0, 3)
            b_hi = A @ x_feas + rng.uniform(0.2, 1.0, 3)
            A_eq = rng.normal(size=(1, n))
            b_eq = A_eq @ x_feas
            res = qp_solve(P, c, A, b_lo, b_hi, A_eq, b_eq)
            _, obj = enumerate_active_sets(P, c, A, b_lo, b_hi, A_eq, b_eq)
            assert res.objective == pytest.approx(obj, abs=1e-6)
            assert np.allclose(A_eq @ res.x, b_eq, atol=1e-8)

    def test_optimality_against_feasible_perturbations(self):
        rng = np.random.default_rng(61)
        n = 4
        P = 2.0 * np.eye(n)
        c = rng.normal(size=n)
        A = np.eye(n)
        b_lo = np.zeros(n)
        b_hi = np.full(n, 3.0)
        res = qp_solve(P, c, A, b_lo, b_hi)
        for _ in range(100):
            x2 = np.clip(res.x + rng.normal(scale=0.1, size=n), 0.0, 3.0)
            assert 0.5 * res.x @ P @ res.x + c @ res.x <= 0.5 * x2 @ P @ x2 + c @ x2 + 1e-12

    def test_warm_start_used_when_feasible(self):
        P = 2.0 * np.eye(2)
        c = np.array([0.0, 0.0])
        A = np.eye(2)
        res = qp_solve(P, c, A, np.array([1.0, 1.0]), None, x0=np.array([2.0, 2.0]))
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-9)
