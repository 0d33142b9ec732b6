"""Dense convex QP solver (primal active set) with KKT residual reporting.

Solves

    min 0.5 x^T P x + c^T x
    s.t. b_lo <= A_ineq x <= b_hi,  A_eq x = b_eq

for strictly convex P.  Problem sizes here are tiny (4 to ~16 variables,
tens of rows), so exact dense linear algebra beats iterative solvers and
gives machine-precision KKT residuals.  A feasible start is found with a
phase-1 linear program (scipy HiGHS) when x0 is not supplied or violates
the constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog


class QpInfeasibleError(RuntimeError):
    def __init__(self, message: str, worst_row: int | None = None, violation: float = 0.0):
        super().__init__(message)
        self.worst_row = worst_row
        self.violation = violation


@dataclass
class QpResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    active_set: tuple[int, ...] = field(default_factory=tuple)


def _as_one_sided(A_ineq, b_lo, b_hi):
    """Stack two-sided rows as G x >= h; row j maps back to j % n_rows."""
    if A_ineq.shape[0] == 0:
        return np.zeros((0, A_ineq.shape[1])), np.zeros(0)
    rows = []
    rhs = []
    for j in range(A_ineq.shape[0]):
        if np.isfinite(b_lo[j]):
            rows.append(A_ineq[j])
            rhs.append(b_lo[j])
        else:
            rows.append(np.zeros(A_ineq.shape[1]))
            rhs.append(-np.inf)
    for j in range(A_ineq.shape[0]):
        if np.isfinite(b_hi[j]):
            rows.append(-A_ineq[j])
            rhs.append(-b_hi[j])
        else:
            rows.append(np.zeros(A_ineq.shape[1]))
            rhs.append(-np.inf)
    return np.array(rows), np.array(rhs)


def _phase1(G, h, A_eq, b_eq, n):
    """Feasible point via LP: min s  s.t.  G x + s >= h, A_eq x = b_eq, s >= 0."""
    finite = np.isfinite(h)
    nf = int(finite.sum())
    # variables [x; s]
    cost = np.zeros(n + 1)
    cost[-1] = 1.0
    A_ub = np.hstack([-G[finite], -np.ones((nf, 1))])
    b_ub = -h[finite]
    A_e = None
    b_e = None
    if A_eq is not None and len(A_eq):
        A_e = np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))])
        b_e = b_eq
    bounds = [(None, None)] * n + [(0.0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_e, b_eq=b_e, bounds=bounds, method="highs")
    if not res.success:
        raise QpInfeasibleError("phase-1 LP failed: " + res.message)
    if res.x[-1] > 1e-7:
        viol = G[finite] @ res.x[:n] - h[finite]
        worst = int(np.argmin(viol))
        # map back to original finite-row index
        orig = np.flatnonzero(finite)[worst]
        raise QpInfeasibleError(
            f"infeasible constraints (best slack {res.x[-1]:.3e})",
            worst_row=int(orig),
            violation=float(-viol[worst]),
        )
    return res.x[:n]


def _kkt_residual(P, c, G, h, A_eq, b_eq, x, mu, nu):
    grad = P @ x + c - G.T @ mu
    if A_eq is not None and len(A_eq):
        grad -= A_eq.T @ nu
    stat = np.max(np.abs(grad))
    slack = G @ x - h
    finite = np.isfinite(h)
    primal = max(0.0, float(np.max(-slack[finite], initial=0.0)))
    if A_eq is not None and len(A_eq):
        primal = max(primal, float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)))
    dual = max(0.0, float(np.max(-mu, initial=0.0)))
    comp = float(np.max(np.abs(mu[finite] * slack[finite]), initial=0.0))
    return max(stat, primal, dual, comp)


def qp_solve(
    P: np.ndarray,
    c: np.ndarray,
    A_ineq: np.ndarray | None = None,
    b_lo: np.ndarray | None = None,
    b_hi: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    x0: np.ndarray | None = None,
    max_iters: int = 200,
    tol: float = 1e-10,
) -> QpResult:
    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(c)
    if not np.allclose(P, P.T, atol=1e-10):
        raise ValueError("P must be symmetric")
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise ValueError("P must be positive definite")

    if A_ineq is None or len(A_ineq) == 0:
        A_ineq = np.zeros((0, n))
        b_lo = np.zeros(0)
        b_hi = np.zeros(0)
    A_ineq = np.atleast_2d(np.asarray(A_ineq, dtype=float))
    b_lo = np.full(A_ineq.shape[0], -np.inf) if b_lo is None else np.asarray(b_lo, dtype=float)
    b_hi = np.full(A_ineq.shape[0], np.inf) if b_hi is None else np.asarray(b_hi, dtype=float)
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.asarray(b_eq, dtype=float)
    else:
        A_eq, b_eq = None, None

    G, h = _as_one_sided(A_ineq, b_lo, b_hi)
    finite = np.isfinite(h)

    def feasible(x):
        ok = np.all(G[finite] @ x - h[finite] >= -1e-9)
        if ok and A_eq is not None:
            ok = np.allclose(A_eq @ x, b_eq, atol=1e-9)
        return ok

    if x0 is not None and feasible(np.asarray(x0, dtype=float)):
        x = np.asarray(x0, dtype=float).copy()
    else:
        x = _phase1(G, h, A_eq, b_eq, n)

    m_eq = 0 if A_eq is None else A_eq.shape[0]
    # working set of active inequality rows
    work: list[int] = []
    slack0 = G @ x - h
    for j in np.flatnonzero(finite):
        if slack0[j] < 1e-9:
            work.append(int(j))

    def solve_eq(work_rows):
        """Equality-constrained step: KKT system at the current working set."""
        W = G[work_rows] if work_rows else np.zeros((0, n))
        rows = m_eq + len(work_rows)
        K = np.zeros((n + rows, n + rows))
        K[:n, :n] = P
        rhs = np.zeros(n + rows)
        rhs[:n] = -c
        if m_eq:
            K[:n, n : n + m_eq] = A_eq.T
            K[n : n + m_eq, :n] = A_eq
            rhs[n : n + m_eq] = b_eq
        if len(work_rows):
            K[:n, n + m_eq :] = -W.T
            K[n + m_eq :, :n] = W
            rhs[n + m_eq :] = h[work_rows]
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        return sol[:n], sol[n : n + m_eq], sol[n + m_eq :]

    iterations = 0
    for iterations in range(1, max_iters + 1):
        # drop linearly dependent rows before solving
        if len(work) > 1:
            W = G[work]
            if np.linalg.matrix_rank(W, tol=1e-10) < len(work):
                # greedy prune: keep a maximal independent subset
                keep: list[int] = []
                for j in work:
                    trial = keep + [j]
                    if np.linalg.matrix_rank(G[trial], tol=1e-10) == len(trial):
                        keep.append(j)
                work = keep

        x_star, nu, mu_w = solve_eq(work)

        if np.max(np.abs(x_star - x)) < tol:
            # converged on this working set; check multiplier signs
            if len(work) == 0 or np.min(mu_w, initial=0.0) >= -tol:
                mu = np.zeros(G.shape[0])
                for j, m in zip(work, mu_w):
                    mu[j] = max(m, 0.0)
                x = x_star
                res = _kkt_residual(P, c, G, h, A_eq, b_eq, x, mu, nu)
                obj = 0.5 * x @ P @ x + c @ x
                return QpResult(
                    x=x,
                    objective=float(obj),
                    kkt_residual=float(res),
                    iterations=iterations,
                    active_set=tuple(sorted(work)),
                )
            # release the most negative multiplier
            drop = int(np.argmin(mu_w))
            work.pop(drop)
            continue

        # line search toward x_star against inactive constraints
        d = x_star - x
        alpha = 1.0
        hit = -1
        for j in np.flatnonzero(finite):
            if j in work:
                continue
            gd = G[j] @ d
            if gd < -1e-12:
                a = (h[j] - G[j] @ x) / gd
                if a < alpha - 1e-12:
                    alpha = max(a, 0.0)
                    hit = int(j)
        x = x + alpha * d
        if hit >= 0:
            work.append(hit)

    raise QpInfeasibleError(f"active-set iteration limit reached ({max_iters})")


def enumerate_active_sets(
    P, c, A_ineq, b_lo, b_hi, A_eq=None, b_eq=None
) -> tuple[np.ndarray, float]:
    """Brute-force optimum by trying every subset of active inequality rows.

    Test oracle only: exponential in the row count, exact for small QPs.
    """
    from itertools import combinations

    P = np.asarray(P, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ineq = np.atleast_2d(np.asarray(A_ineq, dtype=float)) if A_ineq is not None else np.zeros((0, n))
    b_lo = np.full(A_ineq.shape[0], -np.inf) if b_lo is None else np.asarray(b_lo, dtype=float)
    b_hi = np.full(A_ineq.shape[0], np.inf) if b_hi is None else np.asarray(b_hi, dtype=float)
    G, h = _as_one_sided(A_ineq, b_lo, b_hi)
    finite = np.flatnonzero(np.isfinite(h))
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.asarray(b_eq, dtype=float)
    else:
        A_eq = np.zeros((0, n))
        b_eq = np.zeros(0)

    best_x, best_obj = None, np.inf
    max_active = n - A_eq.shape[0]
    for k in range(0, max_active + 1):
        for subset in combinations(finite, k):
            W = np.vstack([A_eq, G[list(subset)]]) if subset or len(A_eq) else A_eq
            rhs_w = np.concatenate([b_eq, h[list(subset)]])
            rows = W.shape[0]
            K = np.zeros((n + rows, n + rows))
            K[:n, :n] = P
            K[:n, n:] = W.T
            K[n:, :n] = W
            rhs = np.concatenate([-c, rhs_w])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x = sol[:n]
            if np.any(G[finite] @ x - h[finite] < -1e-8):
                continue
            if len(A_eq) and not np.allclose(A_eq @ x, b_eq, atol=1e-8):
                continue
            obj = 0.5 * x @ P @ x + c @ x
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_x = x
    if best_x is None:
        raise QpInfeasibleError("no feasible stationary point found by enumeration")
    return best_x, float(best_obj)
