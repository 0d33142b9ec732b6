"""Robot description, kinematics, Jacobians, inertia, and gravity torques.

The manipulator is a serial chain rooted at the foot plate: arm joints and
links in order, with dual-rotor vectoring units mounted on the links.  The
free-floating pose is parameterized by the center-of-gravity position ``p``,
XYZ-Euler attitude ``eta`` (foot and CoG frames share one orientation), and
the joint vector ``q`` (arm joints followed by roll/pitch pairs of each
vectoring unit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    cross3,
    axis_rotation,
    euler_rate_matrix,
    euler_to_rot,
    rot_x,
    rot_y,
    rot_z,
    skew,
)

GRAVITY = 9.81

ARM_JOINT = "arm"
VECTORING_ROLL = "vectoring-roll"
VECTORING_PITCH = "vectoring-pitch"

#: gimbal-lock guard for the XYZ-Euler attitude (rad)
MAX_PITCH = np.deg2rad(85.0)


class ConfigurationError(ValueError):
    """Robot description or state violates a structural requirement."""


def _thin_cylinder_inertia(mass: float, length: float, radius: float = 0.02) -> np.ndarray:
    """Inertia of a thin rod/cylinder along its x-axis, about its CoM."""
    ixx = 0.5 * mass * radius**2
    iperp = mass * (length**2 / 12.0 + radius**2 / 4.0)
    return np.diag([ixx, iperp, iperp])


def _small_inertia(mass: float, radius: float = 0.03) -> np.ndarray:
    """Solid-sphere inertia for compact modules (joints, processor, foot)."""
    return (2.0 / 5.0) * mass * radius**2 * np.eye(3)


@dataclass(frozen=True)
class LinkSpec:
    length: float
    mass: float
    com_offset: np.ndarray  # from link base, link frame (m)
    inertia: np.ndarray  # 3x3 about link CoM (kg m^2)
    name: str = "link"

    def validate(self) -> None:
        if self.length <= 0.0:
            raise ConfigurationError(f"links.{self.name}.length must be > 0")
        if self.mass <= 0.0:
            raise ConfigurationError(f"links.{self.name}.mass must be > 0")
        I = np.asarray(self.inertia)
        if not np.allclose(I, I.T, atol=1e-12):
            raise ConfigurationError(f"links.{self.name}.inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(I)) <= 0.0:
            raise ConfigurationError(f"links.{self.name}.inertia must be positive definite")


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent_link: int  # -1 = mounted at the foot, i = at the tip of link i
    axis: np.ndarray
    angle_limits: tuple[float, float]
    torque_limit: float
    kind: str = ARM_JOINT

    def validate(self, n_links: int) -> None:
        a = np.asarray(self.axis, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-9:
            raise ConfigurationError(f"joints.{self.name}.axis must be a unit vector")
        lo, hi = self.angle_limits
        if not lo < hi:
            raise ConfigurationError(f"joints.{self.name}.angle_limits must satisfy min < max")
        if self.torque_limit <= 0.0:
            raise ConfigurationError(f"joints.{self.name}.torque_limit must be > 0")
        if not -1 <= self.parent_link < n_links:
            raise ConfigurationError(f"joints.{self.name}.parent_link out of range")


@dataclass(frozen=True)
class RotorUnitSpec:
    parent_link: int
    mount_offset: np.ndarray  # in parent link frame, from link base (m)
    rotor_offsets: np.ndarray  # (n, 3) in the vectoring-unit frame (m)
    directions: np.ndarray  # sigma per rotor, +-1
    thrust_range: tuple[float, float]
    drag_ratio: float  # thrust-to-drag ratio c (m)
    rotor_diameter: float
    angle_limits: tuple[float, float] = (-np.pi, np.pi)
    mass: float = 0.25  # lumped at the gimbal center
    name: str = "unit"

    def validate(self, n_links: int) -> None:
        if not 0 <= self.parent_link < n_links:
            raise ConfigurationError(f"rotor_units.{self.name}.parent_link out of range")
        sig = np.asarray(self.directions)
        if not np.all(np.isin(sig, (-1, 1))):
            raise ConfigurationError(f"rotor_units.{self.name}.directions must be +-1")
        if len(sig) != len(np.atleast_2d(self.rotor_offsets)):
            raise ConfigurationError(f"rotor_units.{self.name}: one direction per rotor required")
        lo, hi = self.thrust_range
        if lo < 0.0 or hi <= lo:
            raise ConfigurationError(f"rotor_units.{self.name}.thrust_range invalid")
        if self.rotor_diameter <= 0.0:
            raise ConfigurationError(f"rotor_units.{self.name}.rotor_diameter must be > 0")


@dataclass(frozen=True)
class PointMassSpec:
    parent_link: int
    offset: np.ndarray  # in parent link frame, from link base (m)
    mass: float
    name: str = "module"

    def validate(self, n_links: int) -> None:
        if self.mass <= 0.0:
            raise ConfigurationError(f"point_masses.{self.name}.mass must be > 0")
        if not 0 <= self.parent_link < n_links:
            raise ConfigurationError(f"point_masses.{self.name}.parent_link out of range")


@dataclass(frozen=True)
class FootSpec:
    half_extents: tuple[float, float]  # (H_x, H_y) m
    friction: tuple[float, float, float]  # (mu_x, mu_y, mu_z)
    plate_offset: np.ndarray
    mass: float = 0.35

    def validate(self) -> None:
        if min(self.half_extents) <= 0.0:
            raise ConfigurationError("foot.half_extents must be > 0")
        if min(self.friction) <= 0.0:
            raise ConfigurationError("foot.friction must be > 0")
        if self.mass <= 0.0:
            raise ConfigurationError("foot.mass must be > 0")


@dataclass(frozen=True)
class RobotModel:
    """Immutable description of one manipulator."""

    name: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    rotor_units: tuple[RotorUnitSpec, ...]
    point_masses: tuple[PointMassSpec, ...]
    foot: FootSpec
    end_effector_offset: float = 0.0
    representative_force: float = 33.5
    representative_length: float = 1.2
    link_radius: float = 0.05  # collision capsule radius

    def __post_init__(self) -> None:
        for link in self.links:
            link.validate()
        for joint in self.joints:
            joint.validate(len(self.links))
        for unit in self.rotor_units:
            unit.validate(len(self.links))
        for pm in self.point_masses:
            pm.validate(len(self.links))
        self.foot.validate()
        if abs(self.total_mass - sum(self._part_masses())) > 1e-9:
            raise ConfigurationError("total mass must equal the sum of part masses")

    # -- counts -------------------------------------------------------------
    @property
    def n_arm_joints(self) -> int:
        return len(self.joints)

    @property
    def n_va_joints(self) -> int:
        return 2 * len(self.rotor_units)

    @property
    def n_q(self) -> int:
        return self.n_arm_joints + self.n_va_joints

    @property
    def n_zeta(self) -> int:
        return 6 + self.n_q

    @property
    def n_rotors(self) -> int:
        return sum(len(np.atleast_1d(u.directions)) for u in self.rotor_units)

    def _part_masses(self) -> list[float]:
        masses = [self.foot.mass]
        masses += [l.mass for l in self.links]
        masses += [pm.mass for pm in self.point_masses]
        masses += [u.mass for u in self.rotor_units]
        return masses

    @property
    def total_mass(self) -> float:
        return float(sum(self._part_masses()))

    @property
    def rotor_sigma(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(u.directions) for u in self.rotor_units]).astype(float)

    @property
    def rotor_drag(self) -> np.ndarray:
        out = []
        for u in self.rotor_units:
            out += [u.drag_ratio] * len(np.atleast_1d(u.directions))
        return np.array(out)

    @property
    def thrust_min(self) -> np.ndarray:
        out = []
        for u in self.rotor_units:
            out += [u.thrust_range[0]] * len(np.atleast_1d(u.directions))
        return np.array(out)

    @property
    def thrust_max(self) -> np.ndarray:
        out = []
        for u in self.rotor_units:
            out += [u.thrust_range[1]] * len(np.atleast_1d(u.directions))
        return np.array(out)

    def q_limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = [j.angle_limits[0] for j in self.joints]
        hi = [j.angle_limits[1] for j in self.joints]
        for u in self.rotor_units:
            lo += [u.angle_limits[0]] * 2
            hi += [u.angle_limits[1]] * 2
        return np.array(lo), np.array(hi)

    def joint_torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints])

    def va_q_index(self, unit: int) -> tuple[int, int]:
        """(roll, pitch) q-vector indices of one vectoring unit."""
        base = self.n_arm_joints + 2 * unit
        return base, base + 1


@dataclass
class GeneralizedState:
    """Pose + joint state: CoG position, XYZ-Euler attitude, joint vector."""

    p: np.ndarray
    eta: np.ndarray
    q: np.ndarray
    pd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    qd: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.pd = np.asarray(self.pd, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.qd is None:
            self.qd = np.zeros_like(self.q)

    def validate(self, model: RobotModel) -> None:
        if self.q.shape != (model.n_q,):
            raise ConfigurationError(
                f"state.q has dimension {self.q.shape[0]}, expected {model.n_q}"
            )
        if np.any(np.abs(self.eta) >= np.pi):
            raise ConfigurationError("state.eta components must lie in (-pi, pi)")
        if abs(self.eta[1]) > MAX_PITCH:
            raise ConfigurationError("pitch beyond 85 deg: attitude parameterization degenerates")
        lo, hi = model.q_limits()
        tol = 1e-9
        if np.any(self.q < lo - tol) or np.any(self.q > hi + tol):
            bad = int(np.argmax((self.q < lo - tol) | (self.q > hi + tol)))
            raise ConfigurationError(f"state.q[{bad}] outside joint limits")

    def zeta(self) -> np.ndarray:
        return np.concatenate([self.p, self.eta, self.q])

    @classmethod
    def from_zeta(cls, zeta: np.ndarray) -> "GeneralizedState":
        zeta = np.asarray(zeta, dtype=float)
        return cls(p=zeta[:3], eta=zeta[3:6], q=zeta[6:])


class Chain:
    """Foot-frame kinematics of the whole robot at one joint vector.

    Part order: foot, links, point masses, rotor units.  All positions are
    in the foot frame (origin at the foot plate center, x along the root
    link at q = 0).
    """

    def __init__(self, model: RobotModel, q: np.ndarray):
        self.model = model
        self.q = np.asarray(q, dtype=float)
        na = model.n_arm_joints
        nq = model.n_q

        self.joint_origin = np.zeros((nq, 3))
        self.joint_axis = np.zeros((nq, 3))

        link_base_R: list[np.ndarray] = []
        link_base_p: list[np.ndarray] = []
        self.link_tip = np.zeros((len(model.links), 3))

        by_parent: dict[int, list[int]] = {}
        for idx, joint in enumerate(model.joints):
            by_parent.setdefault(joint.parent_link, []).append(idx)

        R = np.eye(3)
        p = np.zeros(3)
        active: list[int] = []  # arm-joint q indices passed so far
        joint_sets: list[tuple[int, ...]] = []  # per link

        for i, link in enumerate(model.links):
            for j in by_parent.get(i - 1, []):
                self.joint_origin[j] = p
                self.joint_axis[j] = R @ model.joints[j].axis
                R = R @ axis_rotation(model.joints[j].axis, self.q[j])
                active.append(j)
            link_base_R.append(R)
            link_base_p.append(p.copy())
            joint_sets.append(tuple(active))
            self.link_tip[i] = p + R @ np.array([link.length, 0.0, 0.0])
            p = self.link_tip[i].copy()

        # trailing joints mounted on the last link tip (e.g. tool roll)
        for j in by_parent.get(len(model.links) - 1, []):
            self.joint_origin[j] = p
            self.joint_axis[j] = R @ model.joints[j].axis
            R = R @ axis_rotation(model.joints[j].axis, self.q[j])
            active.append(j)

        self.link_base_R = link_base_R
        self.link_base_p = link_base_p
        self.link_joint_sets = joint_sets
        self.ee_rot = R
        self.ee_pos = p + R @ np.array([model.end_effector_offset, 0.0, 0.0])
        self.ee_joints = tuple(active)

        # parts: foot, links, point masses, rotor units
        coms = [np.zeros(3)]
        rots = [np.eye(3)]
        masses = [model.foot.mass]
        part_joints: list[tuple[int, ...]] = [()]
        for i, link in enumerate(model.links):
            coms.append(link_base_p[i] + link_base_R[i] @ link.com_offset)
            rots.append(link_base_R[i])
            masses.append(link.mass)
            part_joints.append(joint_sets[i])
        for pm in model.point_masses:
            i = pm.parent_link
            coms.append(link_base_p[i] + link_base_R[i] @ pm.offset)
            rots.append(link_base_R[i])
            masses.append(pm.mass)
            part_joints.append(joint_sets[i])

        # vectoring units: mass lumped at the gimbal center, so the unit CoM
        # does not move with its own roll/pitch angles
        self.rotor_pos: list[np.ndarray] = []
        self.rotor_dir: list[np.ndarray] = []
        self.rotor_joints: list[tuple[int, ...]] = []
        self.rotor_unit_index: list[int] = []
        self.unit_mount: list[np.ndarray] = []
        for k, unit in enumerate(model.rotor_units):
            i = unit.parent_link
            base_R, base_p = link_base_R[i], link_base_p[i]
            mount = base_p + base_R @ unit.mount_offset
            q_roll, q_pitch = model.va_q_index(k)
            self.joint_origin[q_roll] = mount
            self.joint_origin[q_pitch] = mount
            roll_R = base_R @ rot_x(self.q[q_roll])
            self.joint_axis[q_roll] = base_R @ np.array([1.0, 0.0, 0.0])
            self.joint_axis[q_pitch] = roll_R @ np.array([0.0, 1.0, 0.0])
            va_R = roll_R @ rot_y(self.q[q_pitch])
            for off in np.atleast_2d(unit.rotor_offsets):
                self.rotor_pos.append(mount + va_R @ off)
                self.rotor_dir.append(va_R @ np.array([0.0, 0.0, 1.0]))
                self.rotor_joints.append(joint_sets[i] + (q_roll, q_pitch))
                self.rotor_unit_index.append(k)
            self.unit_mount.append(mount)
            coms.append(mount)
            rots.append(va_R)
            masses.append(unit.mass)
            part_joints.append(joint_sets[i])

        self.part_com = np.array(coms)
        self.part_rot = rots
        self.part_mass = np.array(masses)
        self.part_joints = part_joints
        self.total_mass = float(self.part_mass.sum())
        self.cog = (self.part_mass[:, None] * self.part_com).sum(axis=0) / self.total_mass

        # d cog / d q (3 x n_q), foot-frame
        dcog = np.zeros((3, nq))
        for pi, joints in enumerate(self.part_joints):
            w = self.part_mass[pi] / self.total_mass
            for j in joints:
                dcog[:, j] += w * cross3(self.joint_axis[j], self.part_com[pi] - self.joint_origin[j])
        self.dcog_dq = dcog

    def point_derivative(self, point: np.ndarray, joints: tuple[int, ...]) -> np.ndarray:
        """d(point)/dq in the foot frame for a point rigidly moved by `joints`."""
        out = np.zeros((3, self.model.n_q))
        for j in joints:
            out[:, j] = cross3(self.joint_axis[j], point - self.joint_origin[j])
        return out


@dataclass
class FramePoses:
    """World poses produced by forward kinematics."""

    foot_position: np.ndarray
    foot_rotation: np.ndarray
    link_tips: np.ndarray
    rotor_positions: np.ndarray
    rotor_directions: np.ndarray
    cog: np.ndarray
    ee_position: np.ndarray
    ee_rotation: np.ndarray
    part_coms: np.ndarray
    part_masses: np.ndarray
    chain: Chain


def forward_kinematics(model: RobotModel, state: GeneralizedState) -> FramePoses:
    """World poses of the foot, links, rotors, CoG, and end effector.

    The CoG position is prescribed by the state; the foot pose follows from
    the mass distribution at the current joint vector.
    """
    state.validate(model)
    chain = Chain(model, state.q)
    R = euler_to_rot(state.eta)
    p_foot = state.p - R @ chain.cog

    def world(x):
        return p_foot + R @ x

    return FramePoses(
        foot_position=p_foot,
        foot_rotation=R,
        link_tips=np.array([world(t) for t in chain.link_tip]),
        rotor_positions=np.array([world(r) for r in chain.rotor_pos]),
        rotor_directions=np.array([R @ u for u in chain.rotor_dir]),
        cog=state.p.copy(),
        ee_position=world(chain.ee_pos),
        ee_rotation=R @ chain.ee_rot,
        part_coms=np.array([world(c) for c in chain.part_com]),
        part_masses=chain.part_mass.copy(),
        chain=chain,
    )


def _deuler_rot(eta: np.ndarray) -> list[np.ndarray]:
    """d(euler_to_rot)/d(eta_k) for k = roll, pitch, yaw."""
    phi, theta, psi = eta
    Rx, Ry, Rz = rot_x(phi), rot_y(theta), rot_z(psi)
    dRx = skew(np.array([1.0, 0.0, 0.0])) @ Rx
    dRy = skew(np.array([0.0, 1.0, 0.0]))
    # derivative of Ry about its own y-axis: Ry' = [e_y]x Ry
    dRy = dRy @ Ry
    dRz = skew(np.array([0.0, 0.0, 1.0])) @ Rz
    return [Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx]


class _JacobianBuilder:
    def __init__(self, model: RobotModel, state: GeneralizedState, poses: FramePoses):
        self.model = model
        self.chain = poses.chain
        self.R = poses.foot_rotation
        self.dR = _deuler_rot(state.eta)
        self.T = euler_rate_matrix(state.eta)
        self.n = model.n_zeta

    def point_rows(self, point_f: np.ndarray, joints: tuple[int, ...]) -> np.ndarray:
        """3 x n_zeta position Jacobian of a chain-attached point (world)."""
        J = np.zeros((3, self.n))
        J[:, :3] = np.eye(3)
        rel = point_f - self.chain.cog
        for k in range(3):
            J[:, 3 + k] = self.dR[k] @ rel
        dq = self.chain.point_derivative(point_f, joints) - self.chain.dcog_dq
        J[:, 6:] = self.R @ dq
        return J

    def orient_rows(self, joints: tuple[int, ...]) -> np.ndarray:
        """3 x n_zeta angular-velocity Jacobian of a chain-attached frame."""
        J = np.zeros((3, self.n))
        J[:, 3:6] = self.T
        for j in joints:
            J[:, 6 + j] = self.R @ self.chain.joint_axis[j]
        return J

    def frame_rows(self, point_f: np.ndarray, joints: tuple[int, ...]) -> np.ndarray:
        return np.vstack([self.point_rows(point_f, joints), self.orient_rows(joints)])


def jacobians(model: RobotModel, state: GeneralizedState) -> dict:
    """6 x n_zeta Jacobians of the end effector, foot, rotors, and parts.

    Each maps a generalized increment (delta p, delta eta, delta q) to the
    world twist of the frame; eta columns use the Euler-rate map.
    """
    poses = forward_kinematics(model, state)
    b = _JacobianBuilder(model, state, poses)
    chain = poses.chain
    return {
        "J_ee": b.frame_rows(chain.ee_pos, chain.ee_joints),
        "J_foot": b.frame_rows(np.zeros(3), ()),
        "J_rotor": [
            b.point_rows(chain.rotor_pos[i], chain.rotor_joints[i])
            for i in range(model.n_rotors)
        ],
        "J_part": [
            b.point_rows(chain.part_com[i], chain.part_joints[i])
            for i in range(len(chain.part_mass))
        ],
        "_builder": b,
    }


def _part_inertias(model: RobotModel) -> list[np.ndarray]:
    out = [_small_inertia(model.foot.mass, 0.05)]
    out += [np.asarray(l.inertia, dtype=float) for l in model.links]
    out += [_small_inertia(pm.mass, 0.02) for pm in model.point_masses]
    out += [_small_inertia(u.mass, 0.04) for u in model.rotor_units]
    return out


def inertia_about_cog(model: RobotModel, state: GeneralizedState) -> np.ndarray:
    """Composite 3x3 inertia about the CoG, world axes."""
    poses = forward_kinematics(model, state)
    chain = poses.chain
    R = poses.foot_rotation
    I = np.zeros((3, 3))
    for mass, com_f, rot_f, I_part in zip(
        chain.part_mass, chain.part_com, chain.part_rot, _part_inertias(model)
    ):
        Rw = R @ rot_f
        d = R @ (com_f - chain.cog)
        I += Rw @ I_part @ Rw.T + mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return I


def potential_energy(model: RobotModel, state: GeneralizedState, g: float = GRAVITY) -> float:
    """Gravitational potential with the foot pose held fixed at its current value."""
    poses = forward_kinematics(model, state)
    return float(g * np.dot(poses.part_masses, poses.part_coms[:, 2]))


def gravity_joint_torque(model: RobotModel, state: GeneralizedState, g: float = GRAVITY) -> np.ndarray:
    """Generalized gravity force on the joints, -dU/dq with the foot fixed."""
    poses = forward_kinematics(model, state)
    chain = poses.chain
    R = poses.foot_rotation
    g_vec = np.array([0.0, 0.0, -g])
    tau = np.zeros(model.n_q)
    for mass, com_f, joints in zip(chain.part_mass, chain.part_com, chain.part_joints):
        for j in joints:
            lever = R @ cross3(chain.joint_axis[j], com_f - chain.joint_origin[j])
            tau[j] += mass * np.dot(lever, g_vec)
    return tau


def static_joint_torque(
    model: RobotModel,
    state: GeneralizedState,
    thrusts: np.ndarray,
    ee_force: np.ndarray | None = None,
    ee_moment: np.ndarray | None = None,
    g: float = GRAVITY,
    poses: FramePoses | None = None,
) -> np.ndarray:
    """Servo torque balancing rotors, end-effector wrench, and gravity.

    Quasi-static: joint accelerations and rates are neglected; the foot
    contact acts proximal of every joint and drops out.  Returns the torque
    each joint actuator must hold (N m), arm joints first.
    """
    if poses is None:
        poses = forward_kinematics(model, state)
    chain = poses.chain
    R = poses.foot_rotation
    thrusts = np.asarray(thrusts, dtype=float)
    sigma = model.rotor_sigma
    drag = model.rotor_drag
    g_vec = np.array([0.0, 0.0, -g])

    gen = np.zeros(model.n_q)

    axis_w = [R @ chain.joint_axis[j] for j in range(model.n_q)]
    origin_w = [R @ chain.joint_origin[j] for j in range(model.n_q)]

    for i in range(model.n_rotors):
        u_w = R @ chain.rotor_dir[i]
        F = thrusts[i] * u_w
        M = -drag[i] * sigma[i] * thrusts[i] * u_w
        p_w = R @ chain.rotor_pos[i]
        for j in chain.rotor_joints[i]:
            gen[j] += np.dot(axis_w[j], cross3(p_w - origin_w[j], F) + M)

    if ee_force is not None or ee_moment is not None:
        F = np.zeros(3) if ee_force is None else np.asarray(ee_force, dtype=float)
        M = np.zeros(3) if ee_moment is None else np.asarray(ee_moment, dtype=float)
        p_w = R @ chain.ee_pos
        for j in chain.ee_joints:
            gen[j] += np.dot(axis_w[j], cross3(p_w - origin_w[j], F) + M)

    for mass, com_f, joints in zip(chain.part_mass, chain.part_com, chain.part_joints):
        p_w = R @ com_f
        for j in joints:
            gen[j] += mass * np.dot(axis_w[j], cross3(p_w - origin_w[j], g_vec))

    return -gen
