"""Design-evaluation layer: aerial support polygon, feasible force, AMR/AMF.

Flight stability is judged by whether the CoG projection can be covered by
a thrust-weighted mean of rotor positions, i.e. hull containment.  The
reachability volume (AMR) is grown by a flood fill over a voxel grid, each
voxel claimed by a constraint-clean planner trajectory from an already
reached neighbor.  The feasibility score (AMF) integrates the feasible
end-effector force over that volume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .geometry import convex_hull_2d, hull_signed_distance, polygon_area
from .model import (
    GRAVITY,
    GeneralizedState,
    RobotModel,
    forward_kinematics,
    static_joint_torque,
)
from .planner import Planner, PlannerConfig, PoseTarget, nominal_thrust

DEGENERATE_AREA = 1e-9


@dataclass
class AerialSupportPolygon:
    vertices: np.ndarray  # (k, 2), CCW
    degenerate: bool


@dataclass
class AmfReport:
    amr_volume: float  # m^3, or m^2 for a planar sweep
    amf: float
    grid: float
    planar: bool
    voxels: np.ndarray  # (k, 3) reached voxel centers
    forces: np.ndarray  # (k,) feasible force per voxel (N)
    force_ref: float
    length_ref: float


def support_polygon(model: RobotModel, state: GeneralizedState) -> AerialSupportPolygon:
    poses = forward_kinematics(model, state)
    pts = poses.rotor_positions[:, :2]
    hull = convex_hull_2d(pts)
    degenerate = len(hull) < 3 or polygon_area(hull) < DEGENERATE_AREA
    return AerialSupportPolygon(vertices=np.asarray(hull), degenerate=degenerate)


def aerial_zmp(model: RobotModel, state: GeneralizedState, thrusts: np.ndarray) -> np.ndarray:
    """Thrust-weighted mean of the rotor xy positions."""
    poses = forward_kinematics(model, state)
    fz = np.asarray(thrusts, dtype=float) * poses.rotor_directions[:, 2]
    total = float(fz.sum())
    if total <= 0.0:
        raise ValueError("aerial ZMP undefined: net vertical thrust must be positive")
    return (fz[:, None] * poses.rotor_positions[:, :2]).sum(axis=0) / total


def flight_stable(model: RobotModel, state: GeneralizedState) -> tuple[bool, float]:
    """Hull-containment stability verdict with a signed margin (m)."""
    asp = support_polygon(model, state)
    cog_xy = state.p[:2]
    margin = hull_signed_distance(asp.vertices, cog_xy)
    if asp.degenerate:
        return False, -abs(margin) if margin != 0.0 else -np.inf
    return margin > 0.0, margin


# -- feasible end-effector force ---------------------------------------------


def _torque_maps(model: RobotModel, state: GeneralizedState, g: float = GRAVITY):
    """Affine decomposition tau = tau_g + T_lam lam + T_f F_ee."""
    tau_g = static_joint_torque(model, state, np.zeros(model.n_rotors), g=g)
    T_lam = np.zeros((model.n_q, model.n_rotors))
    for i in range(model.n_rotors):
        e = np.zeros(model.n_rotors)
        e[i] = 1.0
        T_lam[:, i] = static_joint_torque(model, state, e, g=g) - tau_g
    T_f = np.zeros((model.n_q, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        T_f[:, k] = static_joint_torque(model, state, np.zeros(model.n_rotors), ee_force=e, g=g) - tau_g
    return tau_g, T_lam, T_f


def _contact_maps(model: RobotModel, state: GeneralizedState, g: float = GRAVITY):
    """Foot wrench [F_z, M_x, M_y, M_z] as w_g + B lam + C F_ee (foot frame)."""
    from .perch import foot_frame_thrust_map

    poses = forward_kinematics(model, state)
    B = foot_frame_thrust_map(model, state, mask=False)
    r_cog = poses.cog - poses.foot_position
    w_g = np.zeros(4)
    w_g[0] = -model.total_mass * g
    w_g[1:] = np.cross(r_cog, np.array([0.0, 0.0, -model.total_mass * g]))
    r_ee = poses.ee_position - poses.foot_position
    C = np.zeros((4, 3))
    C[0, 2] = 1.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        C[1:, k] = np.cross(r_ee, e)
    return w_g, B, C, poses


def feasible_ee_force(
    model: RobotModel,
    state: GeneralizedState,
    mode: str = "flight",
    force_cap: float = 500.0,
    g: float = GRAVITY,
) -> tuple[float, np.ndarray]:
    """Largest sustainable end-effector force, per axis and overall.

    For each axis and sign, a linear program maximizes the force magnitude
    over rotor thrusts subject to joint-torque limits, the thrust box, and
    (perch mode) the contact friction/ZMP constraints.  In flight the rotor
    wrench must additionally balance gravity plus the sustained force (the
    foot carries that balance when perched).  Returns
    (max over axes, per-axis maxima).
    """
    tau_g, T_lam, T_f = _torque_maps(model, state, g)
    tau_lim = model.joint_torque_limits()
    n_arm = model.n_arm_joints
    nr = model.n_rotors

    if mode == "perch":
        w_g, B, C, _ = _contact_maps(model, state, g)
        mu_x, mu_y, mu_z = model.foot.friction
        H_x, H_y = model.foot.half_extents
    else:
        from .allocation import build_allocation

        poses = forward_kinematics(model, state)
        Q = build_allocation(model, state).Q
        r_ee = poses.ee_position - poses.cog

    per_axis = np.zeros(3)
    for axis in range(3):
        best = 0.0
        for sign in (1.0, -1.0):
            e = np.zeros(3)
            e[axis] = sign
            # variables [lam; f], maximize f
            cost = np.zeros(nr + 1)
            cost[-1] = -1.0
            rows = []
            ub = []
            # |tau_g + T_lam lam + f T_f e| <= tau_lim (arm joints)
            A_tau = np.hstack([T_lam[:n_arm], (T_f[:n_arm] @ e)[:, None]])
            rows += [A_tau, -A_tau]
            ub += [tau_lim - tau_g[:n_arm], tau_lim + tau_g[:n_arm]]
            if mode == "perch":
                A_w = np.hstack([B, (C @ e)[:, None]])
                b_fz, b_mx, b_my, b_mz = A_w
                g_fz, g_mx, g_my, g_mz = w_g
                # F_z >= eps
                rows.append(-b_fz[None, :])
                ub.append(np.array([g_fz - 1.0]))
                # |M_z| <= mu_z F_z; tangential ee force against friction
                rows.append((b_mz - mu_z * b_fz)[None, :])
                ub.append(np.array([mu_z * g_fz - g_mz]))
                rows.append((-b_mz - mu_z * b_fz)[None, :])
                ub.append(np.array([mu_z * g_fz + g_mz]))
                if axis < 2:
                    mu_t = mu_x if axis == 0 else mu_y
                    t = np.zeros(nr + 1)
                    t[-1] = 1.0  # |F_ee,t| transmitted to the foot
                    rows += [(t - mu_t * b_fz)[None, :], (-t - mu_t * b_fz)[None, :]]
                    ub += [np.array([mu_t * g_fz]), np.array([mu_t * g_fz])]
                # ZMP box: |M_y| <= H_x F_z, |M_x| <= H_y F_z
                rows.append((b_my - H_x * b_fz)[None, :])
                ub.append(np.array([H_x * g_fz - g_my]))
                rows.append((-b_my - H_x * b_fz)[None, :])
                ub.append(np.array([H_x * g_fz + g_my]))
                rows.append((b_mx - H_y * b_fz)[None, :])
                ub.append(np.array([H_y * g_fz - g_mx]))
                rows.append((-b_mx - H_y * b_fz)[None, :])
                ub.append(np.array([H_y * g_fz + g_mx]))
            A_eq = None
            b_eq = None
            if mode != "perch":
                # rotor wrench balances gravity and the sustained force
                A_eq = np.zeros((6, nr + 1))
                A_eq[:, :nr] = Q
                A_eq[:3, -1] = e
                A_eq[3:, -1] = np.cross(r_ee, e)
                b_eq = np.array([0.0, 0.0, model.total_mass * g, 0.0, 0.0, 0.0])
            A_ub = np.vstack(rows)
            b_ub = np.concatenate(ub)
            bounds = [(model.thrust_min[i], model.thrust_max[i]) for i in range(nr)]
            bounds.append((0.0, force_cap))
            res = linprog(
                cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs"
            )
            if res.success:
                best = max(best, float(res.x[-1]))
        per_axis[axis] = best
    return float(per_axis.max()), per_axis


def trim_vectoring(model: RobotModel, state: GeneralizedState) -> GeneralizedState:
    """Level each vectoring unit: cancel its parent link's pitch and roll.

    A hovering controller trims the units toward vertical thrust; the force
    LPs assume that trim so bent-arm states stay balance-feasible.
    """
    q = state.q.copy()
    lo, hi = model.q_limits()
    poses = forward_kinematics(model, GeneralizedState(p=state.p, eta=state.eta, q=q))
    chain = poses.chain
    for k, unit in enumerate(model.rotor_units):
        Rl = poses.foot_rotation @ chain.link_base_R[unit.parent_link]
        n = Rl.T @ np.array([0.0, 0.0, 1.0])
        alpha = float(np.arctan2(-n[1], n[2]))
        beta = float(np.arctan2(n[0], -n[1] * np.sin(alpha) + n[2] * np.cos(alpha)))
        i_roll, i_pitch = model.va_q_index(k)
        q[i_roll] = np.clip(alpha, lo[i_roll], hi[i_roll])
        q[i_pitch] = np.clip(beta, lo[i_pitch], hi[i_pitch])
    return GeneralizedState(p=state.p.copy(), eta=state.eta.copy(), q=q)


# -- reachability / feasibility sweeps ---------------------------------------


@dataclass
class SweepConfig:
    grid: float = 0.05
    bounds_lo: np.ndarray = field(default_factory=lambda: np.array([-1.2, -1.2, -1.2]))
    bounds_hi: np.ndarray = field(default_factory=lambda: np.array([1.2, 1.2, 0.05]))
    planar: bool = True  # restrict to the y = 0 slice
    reach_radius: float = 1.1  # workspace prefilter about the foot (m)
    max_attempts: int = 2
    planner: PlannerConfig = field(
        default_factory=lambda: PlannerConfig(
            # flood-fill targets are 1-2 cells away, so cap iterations hard
            kappa=0.04, step_max=0.08, row_refresh=8, max_iters=40, tol_pos=5e-4
        )
    )


def _home_feasible(planner: Planner, state: GeneralizedState, mode: str) -> bool:
    """The sweep home must itself satisfy torque/thrust/stability limits."""
    cfg = planner.config
    try:
        lam, rho = nominal_thrust(planner.model, state, cfg.eps_z if mode == "perch" else 0.0)
    except Exception:
        return False
    tau = static_joint_torque(planner.model, state, lam)
    if np.any(np.abs(tau[: planner.model.n_arm_joints]) > planner.tau_limit):
        return False
    if np.any(lam < planner.model.thrust_min - 1e-9) or np.any(
        lam > planner.model.thrust_max + 1e-9
    ):
        return False
    return rho >= cfg.rho_f


def compute_amr(
    model: RobotModel,
    home: GeneralizedState,
    mode: str = "perch",
    sweep: SweepConfig | None = None,
) -> tuple[dict, Planner]:
    """Reached voxels (center -> final state) grown from the home posture.

    A voxel is reachable when the planner converges to its center through a
    trajectory with no constraint-row violation, starting from the state
    reached in a neighboring voxel.
    """
    sweep = sweep or SweepConfig()
    planner = Planner(model, sweep.planner)
    # flight-mode reachability still pins the base: the craft hovers in
    # place while the arm maneuvers
    plan_mode = "perch" if mode == "perch" else "hover"
    reached: dict[tuple, np.ndarray] = {}
    if not _home_feasible(planner, home, mode):
        return reached, planner

    g = sweep.grid
    poses = forward_kinematics(model, home)
    foot = poses.foot_position

    def voxel_of(p):
        v = np.round((p - foot) / g).astype(int)
        if sweep.planar:
            v[1] = 0
        return tuple(v)

    def center(v):
        c = foot + g * np.array(v, dtype=float)
        if sweep.planar:
            c[1] = foot[1]
        return c

    def in_domain(v):
        c = center(v)
        rel = c - foot
        if np.linalg.norm(rel) > sweep.reach_radius:
            return False
        return bool(np.all(c >= foot + sweep.bounds_lo) and np.all(c <= foot + sweep.bounds_hi))

    if sweep.planar:
        offsets = [
            (dx, 0, dz) for dx in (-1, 0, 1) for dz in (-1, 0, 1) if (dx, dz) != (0, 0)
        ]
    else:
        offsets = [
            (dx, dy, dz)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dz in (-1, 0, 1)
            if (dx, dy, dz) != (0, 0, 0)
        ]

    v0 = voxel_of(poses.ee_position)
    reached[v0] = home.zeta()
    queue = [v0]
    attempts: dict[tuple, int] = {}
    while queue:
        v = queue.pop(0)
        for off in offsets:
            nb = tuple(np.add(v, off))
            if nb in reached or not in_domain(nb):
                continue
            if attempts.get(nb, 0) >= sweep.max_attempts:
                continue
            attempts[nb] = attempts.get(nb, 0) + 1
            start = GeneralizedState.from_zeta(reached[v])
            res = planner.plan(start, PoseTarget(position=center(nb)), mode=plan_mode)
            if not res.converged:
                continue
            if max(s.worst_violation for s in res.steps) > 1e-8:
                continue
            reached[nb] = res.zeta_final
            queue.append(nb)
    return reached, planner


def compute_amf(
    model: RobotModel,
    home: GeneralizedState,
    mode: str = "perch",
    sweep: SweepConfig | None = None,
) -> AmfReport:
    """Feasible-force integral over the reachable volume, normalized."""
    sweep = sweep or SweepConfig()
    reached, planner = compute_amr(model, home, mode, sweep)
    g = sweep.grid
    F = model.representative_force
    L = model.representative_length
    cell = g**2 if sweep.planar else g**3
    norm = L**2 if sweep.planar else L**3

    centers = []
    forces = []
    poses = forward_kinematics(model, home)
    foot = poses.foot_position
    for v, zeta in reached.items():
        state = trim_vectoring(model, GeneralizedState.from_zeta(zeta))
        f, _ = feasible_ee_force(model, state, mode)
        c = foot + g * np.array(v, dtype=float)
        centers.append(c)
        forces.append(f)
    centers = np.array(centers) if centers else np.zeros((0, 3))
    forces = np.array(forces)
    volume = cell * len(reached)
    amf = float(cell / norm * np.sum(forces / F)) if len(forces) else 0.0
    return AmfReport(
        amr_volume=volume,
        amf=amf,
        grid=g,
        planar=sweep.planar,
        voxels=centers,
        forces=forces,
        force_ref=F,
        length_ref=L,
    )
