"""Constrained differential-IK motion planner.

Each step solves a small strictly convex QP for the state increment: track
the commanded end-effector (and foot) pose step while respecting joint
boxes, servo torque limits, rotor thrust bounds, an allocation-singularity
floor, self-collision clearances, and rotor spacing.  Velocity dampers
shrink the allowed increment linearly near every forbidden boundary so
trajectories can approach but never cross it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .allocation import StabilityError, build_allocation, reduced_allocation, stability_measure
from .geometry import rot_log, segment_segment_closest
from .model import (
    GRAVITY,
    GeneralizedState,
    RobotModel,
    forward_kinematics,
    jacobians,
    static_joint_torque,
)
from .qp import QpInfeasibleError, qp_solve


@dataclass
class PlannerConfig:
    s1: float = 1e-3
    s2_ee: float = 1.0
    s2_foot: float = 1.0
    kappa: float = 0.02
    step_max: float = 0.04  # per-variable increment bound (m / rad)
    zeta_f: float = 0.02  # forbidden-zone width, fraction of range
    zeta_r: float = 0.15  # damper onset, fraction of range
    tau_margin_f: float = 0.05  # N m
    tau_margin_r: float = 0.40
    lam_margin_f: float = 0.05  # N
    lam_margin_r: float = 1.00
    rho_f: float = 1e-3
    rho_r: float = 5e-3
    tau_step: float = 0.5  # per-step torque change bound (N m)
    lam_step: float = 2.0  # per-step nominal-thrust change bound (N)
    d_f: float = 0.01  # m clearance, forbidden
    d_r: float = 0.06
    max_iters: int = 600
    tol_pos: float = 2e-4  # m
    tol_rot: float = 1e-3  # rad
    mu_xy: float = 0.9
    row_refresh: int = 4  # recompute FD constraint rows every k steps
    eps_z: float = 1.0


@dataclass
class PoseTarget:
    position: np.ndarray
    rotation: np.ndarray | None = None


@dataclass
class PlanStep:
    zeta: np.ndarray
    delta: np.ndarray
    ee_error: float
    rot_error: float
    tau: np.ndarray
    lam: np.ndarray
    rho: float
    worst_violation: float


@dataclass
class PlanResult:
    steps: list[PlanStep]
    converged: bool
    final_error: float
    final_rot_error: float
    message: str = ""

    @property
    def zeta_final(self) -> np.ndarray:
        return self.steps[-1].zeta + self.steps[-1].delta if self.steps else np.zeros(0)


def delta_target(p_cur, R_cur, target: PoseTarget, kappa: float) -> np.ndarray:
    """Bounded 6-D pose step toward the target (rotation-log metric)."""
    e = np.zeros(6)
    e[:3] = np.asarray(target.position, dtype=float) - np.asarray(p_cur, dtype=float)
    if target.rotation is not None:
        e[3:] = rot_log(np.asarray(target.rotation) @ np.asarray(R_cur).T)
    n = float(np.linalg.norm(e))
    if n <= kappa or n == 0.0:
        return e
    return kappa * e / n


def velocity_damper(value, lower, upper, zeta_f, zeta_r, d_min, d_max):
    """Per-step increment bounds shrinking linearly near the hard limits.

    Inside the forbidden band (closer than zeta_f to a limit) motion toward
    that limit is fully blocked; past zeta_r the full (d_min, d_max) range
    is allowed; in between the allowance interpolates linearly.
    """
    if zeta_f >= zeta_r:
        raise ValueError("zeta_f must be smaller than zeta_r")
    dl = value - lower
    du = upper - value
    if dl < 0.0 or du < 0.0:
        warnings.warn("velocity damper evaluated beyond its hard limit")
    lo = d_min * float(np.clip((dl - zeta_f) / (zeta_r - zeta_f), 0.0, 1.0))
    hi = d_max * float(np.clip((du - zeta_f) / (zeta_r - zeta_f), 0.0, 1.0))
    # one step may never cross the hard limit itself
    if np.isfinite(dl):
        lo = max(lo, -dl)
    if np.isfinite(du):
        hi = min(hi, du)
    return lo, hi


def nominal_thrust(
    model: RobotModel, state: GeneralizedState, extra_z: float, g: float = GRAVITY, poses=None
):
    """Min-norm thrust carrying the weight (plus pressing offset) with zero moments."""
    A = build_allocation(model, state, horizontal=True, poses=poses)
    Qbar = reduced_allocation(A)
    rho = stability_measure(Qbar)
    target = np.array([model.total_mass * g + extra_z, 0.0, 0.0, 0.0])
    lam, *_ = np.linalg.lstsq(Qbar, target, rcond=None)
    return lam, rho


class _Capsules:
    """Link capsules for self-collision rows; adjacent pairs exempt."""

    def __init__(self, model: RobotModel):
        self.model = model
        n = len(model.links)
        self.pairs = [(i, j) for i in range(n) for j in range(i + 2, n)]

    def segments(self, poses):
        segs = []
        base = poses.foot_position
        prev = base
        for i in range(len(self.model.links)):
            tip = poses.link_tips[i]
            segs.append((prev, tip))
            prev = tip
        return segs


class Planner:
    def __init__(self, model: RobotModel, config: PlannerConfig | None = None):
        self.model = model
        self.config = config or PlannerConfig()
        self.capsules = _Capsules(model)
        lo, hi = model.q_limits()
        self.q_lo, self.q_hi = lo, hi
        self.tau_limit = model.joint_torque_limits()

    # -- constraint row builders -------------------------------------------

    def _state_rows(self, state: GeneralizedState):
        cfg = self.config
        n = self.model.n_zeta
        rows, lo, hi = [], [], []
        rng = self.q_hi - self.q_lo
        for j in range(self.model.n_q):
            e = np.zeros(n)
            e[6 + j] = 1.0
            l, h = velocity_damper(
                state.q[j],
                self.q_lo[j],
                self.q_hi[j],
                cfg.zeta_f * rng[j],
                cfg.zeta_r * rng[j],
                -cfg.step_max,
                cfg.step_max,
            )
            rows.append(e)
            lo.append(l)
            hi.append(h)
        # base pose increments simply bounded for conditioning
        for j in range(6):
            e = np.zeros(n)
            e[j] = 1.0
            rows.append(e)
            lo.append(-cfg.step_max)
            hi.append(cfg.step_max)
        return rows, lo, hi

    def _fd_cols(self, mode: str):
        # torque/thrust/stability depend on q always and on attitude in
        # flight; the base position never enters
        cols = list(range(6, self.model.n_zeta))
        if mode == "flight":
            cols = [3, 4, 5] + cols
        return cols

    def _torque_thrust_stability_rows(
        self, state: GeneralizedState, mode: str, ee_force: np.ndarray | None
    ):
        cfg = self.config
        model = self.model
        n = model.n_zeta
        extra_z = cfg.eps_z if mode == "perch" else 0.0
        h = 1e-5
        cols = self._fd_cols(mode)

        def evaluate(s: GeneralizedState):
            poses = forward_kinematics(model, s)
            lam, rho = nominal_thrust(model, s, extra_z, poses=poses)
            tau = static_joint_torque(
                model, s, self._pad_thrust(lam), ee_force=ee_force, poses=poses
            )
            return tau[: model.n_arm_joints], lam, rho

        tau0, lam0, rho0 = evaluate(state)
        n_tau = len(tau0)
        n_lam = len(lam0)
        J = np.zeros((n_tau + n_lam + 1, n))
        zeta0 = state.zeta()
        for k in cols:
            zp, zm = zeta0.copy(), zeta0.copy()
            zp[k] += h
            zm[k] -= h
            try:
                tp, lp, rp = evaluate(GeneralizedState.from_zeta(zp))
                tm, lm, rm = evaluate(GeneralizedState.from_zeta(zm))
            except Exception:
                continue
            J[:n_tau, k] = (tp - tm) / (2 * h)
            J[n_tau : n_tau + n_lam, k] = (lp - lm) / (2 * h)
            J[-1, k] = (rp - rm) / (2 * h)

        rows, lo, hi = [], [], []
        for j in range(n_tau):
            l, u = velocity_damper(
                tau0[j],
                -self.tau_limit[j],
                self.tau_limit[j],
                cfg.tau_margin_f,
                cfg.tau_margin_r,
                -cfg.tau_step,
                cfg.tau_step,
            )
            rows.append(J[j])
            lo.append(l)
            hi.append(u)

        lam_lo = self.model.thrust_min
        lam_hi = self._thrust_upper(mode, ee_force)
        for j in range(n_lam):
            l, u = velocity_damper(
                lam0[j],
                lam_lo[j],
                lam_hi[j],
                cfg.lam_margin_f,
                cfg.lam_margin_r,
                -cfg.lam_step,
                cfg.lam_step,
            )
            rows.append(J[n_tau + j])
            lo.append(l)
            hi.append(u)

        l, _ = velocity_damper(
            rho0, cfg.rho_f, np.inf, cfg.rho_f * 0.5, cfg.rho_r, -cfg.rho_f, cfg.rho_f
        )
        rows.append(J[-1])
        lo.append(l)
        hi.append(np.inf)
        return rows, lo, hi, (tau0, lam0, rho0)

    def _pad_thrust(self, lam):
        out = np.zeros(self.model.n_rotors)
        out[: len(lam)] = lam
        return out

    def _thrust_upper(self, mode: str, ee_force: np.ndarray | None) -> np.ndarray:
        lam_hi = self.model.thrust_max.copy()
        if mode == "perch" and ee_force is not None:
            # tangential end-effector force consumes friction headroom
            deduction = float(np.hypot(ee_force[0], ee_force[1])) / self.config.mu_xy
            lam_hi = lam_hi - deduction / self.model.n_rotors
        return lam_hi

    def _clearance_rows(self, state: GeneralizedState, poses, jac):
        cfg = self.config
        model = self.model
        n = model.n_zeta
        rows, lo, hi = [], [], []
        builder = jac["_builder"]
        chain = poses.chain

        # link-link capsule clearance
        segs = self.capsules.segments(poses)
        radius = 2.0 * model.link_radius
        for i, j in self.capsules.pairs:
            cp, cq, dist = segment_segment_closest(*segs[i], *segs[j])
            d = dist - radius
            if d > cfg.d_r:
                continue
            nrm = (cp - cq) / max(dist, 1e-9)
            cp_f = poses.foot_rotation.T @ (cp - poses.foot_position)
            cq_f = poses.foot_rotation.T @ (cq - poses.foot_position)
            Ji = builder.point_rows(cp_f, chain.link_joint_sets[i])
            Jj = builder.point_rows(cq_f, chain.link_joint_sets[j])
            row = nrm @ (Ji - Jj)
            l, _ = velocity_damper(d, cfg.d_f, np.inf, -cfg.step_max, np.inf, -np.inf, np.inf)
            rows.append(row)
            lo.append(l)
            hi.append(np.inf)

        # rotor spacing (cross-unit pairs only)
        D = max(u.rotor_diameter for u in model.rotor_units)
        unit_of = chain.rotor_unit_index
        for a in range(model.n_rotors):
            for b in range(a + 1, model.n_rotors):
                if unit_of[a] == unit_of[b]:
                    continue
                pa, pb = poses.rotor_positions[a], poses.rotor_positions[b]
                dist = float(np.linalg.norm(pa - pb))
                d = dist - D
                if d > cfg.d_r:
                    continue
                nrm = (pa - pb) / max(dist, 1e-9)
                Ja = jac["J_rotor"][a]
                Jb = jac["J_rotor"][b]
                row = nrm @ (Ja - Jb)
                l, _ = velocity_damper(d, cfg.d_f, np.inf, -cfg.step_max, np.inf, -np.inf, np.inf)
                rows.append(row)
                lo.append(l)
                hi.append(np.inf)
        return rows, lo, hi

    # -- stepping -----------------------------------------------------------

    def plan_step(
        self,
        state: GeneralizedState,
        ee_target: PoseTarget,
        mode: str = "flight",
        ee_force: np.ndarray | None = None,
        cached_rows=None,
    ):
        cfg = self.config
        model = self.model
        n = model.n_zeta
        poses = forward_kinematics(model, state)
        jac = jacobians(model, state)
        J_ee = jac["J_ee"]
        J_foot = jac["J_foot"]

        dxi = delta_target(poses.ee_position, poses.ee_rotation, ee_target, cfg.kappa)
        w_ee = np.full(6, cfg.s2_ee)
        if ee_target.rotation is None:
            w_ee[3:] = 0.0
        S2e = np.diag(w_ee)

        P = 2.0 * (cfg.s1 * np.eye(n) + J_ee.T @ S2e @ J_ee)
        c = -2.0 * (J_ee.T @ S2e @ dxi)

        rows, lo, hi = self._state_rows(state)
        if cached_rows is None:
            cached_rows = self._torque_thrust_stability_rows(state, mode, ee_force)
        r2, l2, h2 = cached_rows[:3]
        rows += r2
        lo += l2
        hi += h2
        r3, l3, h3 = self._clearance_rows(state, poses, jac)
        rows += r3
        lo += l3
        hi += h3

        A_eq = None
        b_eq = None
        if mode in ("perch", "hover"):
            # hover: base pose held (hovering in place) without the pressing
            # thrust offset of a perched stance
            A_eq = J_foot
            b_eq = np.zeros(6)

        A = np.array(rows)
        try:
            res = qp_solve(
                P, c, A, np.array(lo), np.array(hi), A_eq, b_eq, x0=np.zeros(n)
            )
            delta = res.x
            viol = float(
                max(
                    np.max(np.maximum(np.array(lo) - A @ delta, 0.0), initial=0.0),
                    np.max(np.maximum(A @ delta - np.array(hi), 0.0), initial=0.0),
                )
            )
        except QpInfeasibleError as exc:
            delta = np.zeros(n)
            viol = float(exc.violation)

        tau0, lam0, rho0 = cached_rows[3]
        err = float(np.linalg.norm(np.asarray(ee_target.position) - poses.ee_position))
        rerr = 0.0
        if ee_target.rotation is not None:
            rerr = float(np.linalg.norm(rot_log(ee_target.rotation @ poses.ee_rotation.T)))
        return (
            PlanStep(
                zeta=state.zeta(),
                delta=delta,
                ee_error=err,
                rot_error=rerr,
                tau=tau0,
                lam=lam0,
                rho=rho0,
                worst_violation=viol,
            ),
            cached_rows,
        )

    def plan(
        self,
        state: GeneralizedState,
        ee_target: PoseTarget,
        mode: str = "flight",
        ee_force: np.ndarray | None = None,
    ) -> PlanResult:
        cfg = self.config
        steps: list[PlanStep] = []
        cur = GeneralizedState(p=state.p.copy(), eta=state.eta.copy(), q=state.q.copy())
        foot_home = forward_kinematics(self.model, cur).foot_position.copy()
        cached = None
        stall = 0
        for it in range(cfg.max_iters):
            if cached is not None and it % cfg.row_refresh == 0:
                cached = None
            try:
                step, cached = self.plan_step(cur, ee_target, mode, ee_force, cached)
            except StabilityError:
                return PlanResult(steps, False, np.inf, np.inf, "allocation singular")
            steps.append(step)
            z = cur.zeta() + step.delta
            cur = GeneralizedState.from_zeta(z)
            if mode in ("perch", "hover"):
                # the linearized pinning rows leave second-order drift;
                # re-anchor the base position on the stored foot pose
                now = forward_kinematics(self.model, cur)
                cur.p = cur.p + (foot_home - now.foot_position)
            if step.ee_error < cfg.tol_pos and (
                ee_target.rotation is None or step.rot_error < cfg.tol_rot
            ):
                return PlanResult(steps, True, step.ee_error, step.rot_error)
            if float(np.linalg.norm(step.delta)) < 1e-7:
                stall += 1
                if stall >= 3:
                    return PlanResult(
                        steps, False, step.ee_error, step.rot_error, "stalled"
                    )
            else:
                stall = 0
        last = steps[-1]
        return PlanResult(steps, False, last.ee_error, last.rot_error, "iteration limit")
