"""Closed-loop quasi-static simulator.

Integrates the rigid-body wrench balance (gravity, rotor thrust, foot
contact, end-effector disturbance) with semi-implicit Euler while the
joints track their commands through a first-order servo.  Foot contact
with the ceiling plane is a penalty model: corner normal springs plus
anchored tangential springs clamped by Coulomb friction.  Scenarios are
TOML files; runs are deterministic for a fixed seed and produce a CSV
log plus a JSON-able summary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from importlib import resources

from .allocation import StabilityError, ThrustCommand, build_allocation
from .flight import (
    AltitudeAttitudeLqi,
    FlightParams,
    PositionPid,
    TrackingTarget,
    desired_attitude,
    vectoring_angles,
)
from .geometry import cross3, euler_rates_from_omega
from .model import (
    GRAVITY,
    ConfigurationError,
    GeneralizedState,
    RobotModel,
    forward_kinematics,
    inertia_about_cog,
    potential_energy,
)
from .perch import ContactState, PerchController, PerchParams, zmp_from_wrench

MODE_FLIGHT = 0
MODE_PERCH = 1

#: statistics windows start this far into the run (or 10% of it, if shorter)
SETTLE_TIME = 2.0


class ScenarioError(ValueError):
    """Malformed scenario file."""


class SimNanError(RuntimeError):
    """State went NaN; carries the partial log for a post-mortem dump."""

    def __init__(self, message: str, log: "SimLog"):
        super().__init__(message)
        self.log = log


@dataclass
class SimConfig:
    dt_attitude: float = 0.005
    dt_position: float = 0.025
    gravity: float = GRAVITY
    ceiling_height: float = 1.5
    contact_stiffness: float = 5e4
    contact_damping: float = 200.0
    tangential_stiffness: float = 1e4
    tangential_damping: float = 50.0
    servo_tau: float = 0.05
    servo_rate_limit: float = 3.0
    linear_damping: float = 0.3
    angular_damping: float = 0.05
    noise_force_std: float = 0.0
    noise_moment_std: float = 0.0
    attach_force: float = 1.0  # filtered normal force that flips flight -> perch
    # physics substeps per attitude tick; the contact springs need
    # dt_sub << sqrt(m / (4 k)) or the foot chatters
    substeps: int = 10

    def __post_init__(self) -> None:
        ratio = self.dt_position / self.dt_attitude
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1.0:
            raise ScenarioError("dt_position must be an integer multiple of dt_attitude")
        if self.contact_stiffness <= 0.0 or self.dt_attitude <= 0.0:
            raise ScenarioError("stiffness and time steps must be positive")

    @property
    def steps_per_position(self) -> int:
        return int(round(self.dt_position / self.dt_attitude))


@dataclass
class Disturbance:
    t_start: float
    t_end: float
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end


@dataclass
class JointRamp:
    t0: float
    t1: float
    q_start: np.ndarray
    q_end: np.ndarray

    def value(self, t: float) -> np.ndarray:
        if t <= self.t0:
            return self.q_start.copy()
        if t >= self.t1:
            return self.q_end.copy()
        s = (t - self.t0) / (self.t1 - self.t0)
        return (1.0 - s) * self.q_start + s * self.q_end


@dataclass
class Scenario:
    name: str
    mode: str  # flight | perch | approach
    duration: float
    target_p: np.ndarray
    target_psi: float = 0.0
    initial_p: np.ndarray | None = None
    initial_eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_q: np.ndarray | None = None
    joint_ramp: JointRamp | None = None
    disturbances: list[Disturbance] = field(default_factory=list)
    config: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self) -> None:
        if self.mode not in ("flight", "perch", "approach"):
            raise ScenarioError(f"mode: unknown mode {self.mode!r}")
        if self.duration <= 0.0:
            raise ScenarioError("duration: must be positive")


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario TOML by path or bundled name."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        ref = resources.files("rdmperch") / "data" / "scenarios" / f"{path}.toml"
        if not ref.is_file():
            raise ScenarioError(f"no bundled scenario named {path!r}")
        data = tomllib.loads(ref.read_text())
    else:
        with open(p, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ScenarioError(f"{p}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    cfg_tab = data.get("sim", {})
    cfg = SimConfig(
        dt_attitude=float(cfg_tab.get("dt_attitude", 0.005)),
        dt_position=float(cfg_tab.get("dt_position", 0.025)),
        ceiling_height=float(cfg_tab.get("ceiling", 1.5)),
        contact_stiffness=float(cfg_tab.get("contact_stiffness", 5e4)),
        contact_damping=float(cfg_tab.get("contact_damping", 200.0)),
        noise_force_std=float(cfg_tab.get("noise_force_std", 0.0)),
        noise_moment_std=float(cfg_tab.get("noise_moment_std", 0.0)),
    )
    tgt = data.get("target", {})
    init = data.get("initial", {})
    ramp = None
    if "joints" in data:
        j = data["joints"]
        try:
            ramp = JointRamp(
                t0=float(j["t0"]),
                t1=float(j["t1"]),
                q_start=np.asarray(j.get("q_start", np.zeros(6)), dtype=float),
                q_end=np.asarray(j["q_end"], dtype=float),
            )
        except KeyError as exc:
            raise ScenarioError(f"joints: missing field {exc}") from exc
        if ramp.t1 <= ramp.t0:
            raise ScenarioError("joints.t1 must exceed joints.t0")
    dists = []
    for tab in data.get("disturbance", []):
        try:
            w = tab["window"]
        except KeyError as exc:
            raise ScenarioError(f"disturbance: missing field {exc}") from exc
        dists.append(
            Disturbance(
                t_start=float(w[0]),
                t_end=float(w[1]),
                force=np.asarray(tab.get("force", np.zeros(3)), dtype=float),
                moment=np.asarray(tab.get("moment", np.zeros(3)), dtype=float),
            )
        )
    try:
        return Scenario(
            name=str(data.get("name", "scenario")),
            mode=str(data["mode"]),
            duration=float(data["duration"]),
            target_p=np.asarray(tgt.get("p", [0.0, 0.0, 1.0]), dtype=float),
            target_psi=float(tgt.get("psi", 0.0)),
            initial_p=(
                np.asarray(init["p"], dtype=float) if "p" in init else None
            ),
            initial_eta=np.asarray(init.get("eta", np.zeros(3)), dtype=float),
            initial_q=(
                np.asarray(init["q"], dtype=float) if "q" in init else None
            ),
            joint_ramp=ramp,
            disturbances=dists,
            config=cfg,
        )
    except KeyError as exc:
        raise ScenarioError(f"scenario: missing field {exc}") from exc


# -- contact ----------------------------------------------------------------


class FootContact:
    """Penalty contact between the foot plate corners and the ceiling plane.

    Normal springs push back on penetration; tangential anchored springs
    clamp to the friction cone and drag their anchors when sliding.
    """

    def __init__(self, model: RobotModel, cfg: SimConfig):
        self.model = model
        self.cfg = cfg
        hx, hy = model.foot.half_extents
        off = np.asarray(model.foot.plate_offset, dtype=float)
        self.corners_f = [
            off + np.array([sx * hx, sy * hy, 0.0])
            for sx in (1.0, -1.0)
            for sy in (1.0, -1.0)
        ]
        self.anchors: list[np.ndarray | None] = [None] * 4

    def reset(self) -> None:
        self.anchors = [None] * 4

    def wrench(
        self,
        foot_p: np.ndarray,
        R: np.ndarray,
        cog: np.ndarray,
        pd: np.ndarray,
        omega: np.ndarray,
    ):
        """(force on robot, moment about CoG, pressing ContactState, in_contact)."""
        cfg = self.cfg
        mu = self.model.foot.friction[0]
        f_total = np.zeros(3)
        m_cog = np.zeros(3)
        m_foot = np.zeros(3)
        f_foot = np.zeros(3)
        in_contact = False
        for i, c_f in enumerate(self.corners_f):
            c_w = foot_p + R @ c_f
            pen = c_w[2] - cfg.ceiling_height
            if pen <= 0.0:
                self.anchors[i] = None
                continue
            in_contact = True
            v = pd + cross3(omega, c_w - cog)
            f_n = cfg.contact_stiffness * pen + cfg.contact_damping * v[2]
            f_n = max(f_n, 0.0)
            if self.anchors[i] is None:
                self.anchors[i] = c_w[:2].copy()
            ft = -cfg.tangential_stiffness * (c_w[:2] - self.anchors[i])
            ft = ft - cfg.tangential_damping * v[:2]
            cap = mu * f_n
            norm = float(np.linalg.norm(ft))
            if norm > cap and norm > 0.0:
                ft = ft * (cap / norm)
                # slide the anchor so the spring stays at the cone surface
                self.anchors[i] = c_w[:2] + ft / cfg.tangential_stiffness
            f_c = np.array([ft[0], ft[1], -f_n])
            f_total += f_c
            m_cog += cross3(c_w - cog, f_c)
            f_foot += -f_c
            m_foot += cross3(c_w - foot_p, -f_c)
        contact = ContactState(F=R.T @ f_foot, M=R.T @ m_foot)
        return f_total, m_cog, contact, in_contact


# -- log --------------------------------------------------------------------


def _log_columns(n_q: int, n_rotors: int) -> list[str]:
    cols = ["t[s]", "mode[-]"]
    cols += [f"p_{a}[m]" for a in "xyz"]
    cols += [f"eta_{a}[rad]" for a in "xyz"]
    cols += [f"q{i}[rad]" for i in range(n_q)]
    cols += [f"lam{i}[N]" for i in range(n_rotors)]
    cols += [f"foot_{a}[m]" for a in "xyz"]
    cols += [f"F_{a}[N]" for a in "xyz"] + [f"M_{a}[Nm]" for a in "xyz"]
    cols += [f"Fs_{a}[N]" for a in "xyz"] + [f"Ms_{a}[Nm]" for a in "xyz"]
    cols += [f"Ff_{a}[N]" for a in "xyz"] + [f"Mf_{a}[Nm]" for a in "xyz"]
    cols += ["zmp_x[m]", "zmp_y[m]"]
    cols += [
        "m_normal[N]",
        "m_slide_x[N]",
        "m_slide_y[N]",
        "m_rot_z[Nm]",
        "m_zmp_x[m]",
        "m_zmp_y[m]",
        "m_thrust_lo[N]",
        "m_thrust_hi[N]",
        "m_slew[N]",
    ]
    cols += ["err_x[m]", "err_y[m]", "err_z[m]", "err_yaw[rad]"]
    cols += ["saturated[-]", "alarms[-]"]
    return cols


@dataclass
class SimLog:
    columns: list[str]
    rows: list[np.ndarray] = field(default_factory=list)
    name: str = ""
    seed: int = 0

    def append(self, row: np.ndarray) -> None:
        self.rows.append(np.asarray(row, dtype=float))

    def array(self) -> np.ndarray:
        return np.vstack(self.rows) if self.rows else np.zeros((0, len(self.columns)))

    def column(self, name: str) -> np.ndarray:
        return self.array()[:, self.columns.index(name)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([f"{x:.12g}" for x in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SimLog":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            columns = next(r)
            rows = [np.array([float(x) for x in row]) for row in r]
        return cls(columns=columns, rows=rows)


def summarize(log: SimLog) -> dict:
    """RMSE/margin/foot statistics computed purely from the logged columns."""
    data = log.array()
    if data.shape[0] == 0:
        raise ValueError("empty log")
    t = log.column("t[s]")
    horizon = float(t[-1]) if len(t) else 0.0
    settle = min(SETTLE_TIME, 0.1 * horizon)
    sel = t >= settle

    def col(name):
        return log.column(name)[sel]

    err = np.column_stack([col(f"err_{a}[m]") for a in "xyz"])
    rmse_pos = float(np.sqrt(np.mean(np.sum(err**2, axis=1))))
    att = np.column_stack([col(f"eta_{a}[rad]") for a in ("x", "y")])
    yaw = col("err_yaw[rad]")
    rmse_att = float(np.sqrt(np.mean(att[:, 0] ** 2 + att[:, 1] ** 2 + yaw**2)))
    foot = np.column_stack([col(f"foot_{a}[m]") for a in "xyz"])
    foot_std = np.std(foot, axis=0)
    margin_cols = [c for c in log.columns if c.startswith("m_")]
    margins = {c: float(np.min(log.column(c)[sel])) for c in margin_cols}
    finite = [v for v in margins.values() if np.isfinite(v)]
    return {
        "scenario": log.name,
        "seed": int(log.seed),
        "duration_s": horizon,
        "settle_s": float(settle),
        "samples": int(np.sum(sel)),
        "rmse_position_m": rmse_pos,
        "rmse_attitude_rad": rmse_att,
        "max_abs_err_position_m": float(np.max(np.abs(err))),
        "max_abs_err_attitude_rad": float(np.max(np.abs(np.column_stack([att, yaw[:, None]])))),
        "foot_std_m": [float(x) for x in foot_std],
        "foot_std_norm_m": float(np.linalg.norm(foot_std)),
        "min_margins": margins,
        "min_margin_overall": float(min(finite)) if finite else float("inf"),
        "saturation_fraction": float(np.mean(col("saturated[-]"))),
        "alarms": int(col("alarms[-]")[-1]) if np.any(sel) else 0,
        "perched_fraction": float(np.mean(col("mode[-]"))),
    }


# -- physics ----------------------------------------------------------------


def mechanical_energy(model: RobotModel, state: GeneralizedState, g: float = GRAVITY) -> float:
    I = inertia_about_cog(model, state)
    kin = 0.5 * model.total_mass * float(state.pd @ state.pd)
    kin += 0.5 * float(state.omega @ I @ state.omega)
    return kin + potential_energy(model, state, g)


def rigid_body_step(
    model: RobotModel,
    state: GeneralizedState,
    lam: np.ndarray,
    q_d: np.ndarray,
    cfg: SimConfig,
    contact: FootContact | None = None,
    dist_force: np.ndarray | None = None,
    dist_moment: np.ndarray | None = None,
):
    """One semi-implicit Euler step; returns (next state, pressing ContactState | None).

    The wrench balance sums gravity, rotor thrust, foot contact, the
    end-effector disturbance, and the integrator damping; joint
    accelerations are excluded (quasi-steady) and the joints track q_d
    through a rate-limited first-order servo.
    """
    from .geometry import euler_to_rot

    dt = cfg.dt_attitude
    n_sub = max(1, int(cfg.substeps))
    dts = dt / n_sub
    m = model.total_mass
    poses = forward_kinematics(model, state)
    I = inertia_about_cog(model, state)
    R0 = poses.foot_rotation

    # body-fixed geometry held over the step (q changes only via the servo)
    r_foot_b = R0.T @ (poses.foot_position - state.p)
    r_ee_b = R0.T @ (poses.ee_position - state.p)

    lam = np.clip(np.asarray(lam, dtype=float), model.thrust_min, model.thrust_max)
    Q = build_allocation(model, state, poses=poses).Q
    wrench = Q @ lam
    f_ext = wrench[:3] + np.array([0.0, 0.0, -m * cfg.gravity])
    m_ext = wrench[3:].copy()
    if dist_force is not None:
        f_ext = f_ext + dist_force
    if dist_moment is not None:
        m_ext = m_ext + dist_moment

    p, pd = state.p.copy(), state.pd.copy()
    eta, omega = state.eta.copy(), state.omega.copy()
    contact_state = None
    for _ in range(n_sub):
        R = euler_to_rot(eta)
        force = f_ext.copy()
        moment = m_ext.copy()
        if dist_force is not None:
            moment += cross3(R @ r_ee_b, dist_force)
        contact_state = None
        if contact is not None:
            f_c, m_c, cs, in_c = contact.wrench(p + R @ r_foot_b, R, p, pd, omega)
            force += f_c
            moment += m_c
            if in_c:
                contact_state = cs
        force += -cfg.linear_damping * pd
        moment += -cfg.angular_damping * omega
        moment += -cross3(omega, I @ omega)

        pd = pd + (force / m) * dts
        p = p + pd * dts
        omega = omega + np.linalg.solve(I, moment) * dts
        eta = eta + euler_rates_from_omega(eta, omega) * dts

    qd = np.clip((q_d - state.q) / cfg.servo_tau, -cfg.servo_rate_limit, cfg.servo_rate_limit)
    lo, hi = model.q_limits()
    q = np.clip(state.q + qd * dt, lo, hi)

    nxt = GeneralizedState(p=p, eta=eta, q=q, pd=pd, omega=omega, qd=qd)
    if not np.all(np.isfinite(nxt.zeta())):
        raise FloatingPointError("state became non-finite")
    return nxt, contact_state


def perched_state(
    model: RobotModel,
    q: np.ndarray,
    ceiling: float,
    preload: float = 0.5,
    stiffness: float = 5e4,
) -> GeneralizedState:
    """State with the foot plate pressed into the ceiling plane.

    The penetration is chosen so the corner springs carry `preload`
    newtons in total at rest.
    """
    pen = preload / (4.0 * stiffness)
    probe = GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=np.asarray(q, dtype=float))
    foot_z = forward_kinematics(model, probe).foot_position[2]
    p = np.array([0.0, 0.0, ceiling + pen - foot_z])
    return GeneralizedState(p=p, eta=np.zeros(3), q=np.asarray(q, dtype=float))


# -- closed loop ------------------------------------------------------------


class Simulator:
    """Runs one scenario: controllers at their own rates, physics at 200 Hz."""

    def __init__(
        self,
        model: RobotModel,
        flight_params: FlightParams | None = None,
        perch_params: PerchParams | None = None,
    ):
        self.model = model
        self.flight_params = flight_params or FlightParams()
        self.perch_params = perch_params or PerchParams()

    def run(self, scenario: Scenario, seed: int) -> SimLog:
        model = self.model
        cfg = scenario.config
        rng = np.random.default_rng(seed)
        n_q, n_rot = model.n_q, model.n_rotors
        if model.n_rotors != 4:
            raise ConfigurationError("the closed-loop simulator needs the 4-rotor layout")

        q0 = scenario.initial_q
        if q0 is None:
            q0 = np.zeros(n_q)
        from .evaluation import trim_vectoring

        q0 = trim_vectoring(
            model, GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=np.asarray(q0, dtype=float))
        ).q
        if scenario.mode == "perch":
            state = perched_state(model, q0, cfg.ceiling_height, stiffness=cfg.contact_stiffness)
            target_p = state.p.copy()
        else:
            p0 = scenario.initial_p if scenario.initial_p is not None else scenario.target_p
            state = GeneralizedState(p=np.asarray(p0, dtype=float).copy(), eta=scenario.initial_eta.copy(), q=q0)
            target_p = scenario.target_p.copy()
        mode = MODE_PERCH if scenario.mode == "perch" else MODE_FLIGHT

        lqi = AltitudeAttitudeLqi(model, self.flight_params, state)
        lqi.prime_hover(state, g=cfg.gravity)
        pid = PositionPid(self.flight_params.gains)
        perch = PerchController(model, self.perch_params, rate_hz=1.0 / cfg.dt_position)
        contact = FootContact(model, cfg)

        lam_perch = np.zeros(n_rot)
        if mode == MODE_PERCH:
            # warm-start the wrench filters and the previous command at the
            # static preload so the QP does not momentarily unload the foot
            poses0 = forward_kinematics(model, state)
            _, _, cs0, in0 = contact.wrench(
                poses0.foot_position, poses0.foot_rotation, poses0.cog, state.pd, state.omega
            )
            contact.reset()
            if in0:
                perch.force_filter.y = cs0.F.copy()
                perch.moment_filter.y = cs0.M.copy()
                lam_perch[:2] = float(cs0.F[2]) / 2.0
                perch.lam_prev = lam_perch.copy()

        log = SimLog(columns=_log_columns(n_q, n_rot), name=scenario.name, seed=seed)
        n_steps = int(round(scenario.duration / cfg.dt_attitude))
        spp = cfg.steps_per_position

        q_d = state.q.copy()
        attitude_sp = (0.0, 0.0)
        lam = np.zeros(n_rot)
        margins = np.full(9, np.inf)
        sensed_F = np.zeros(3)
        sensed_M = np.zeros(3)
        filt = ContactState(F=np.zeros(3), M=np.zeros(3))
        contact_now: ContactState | None = None
        saturated = 0.0

        target = TrackingTarget(p=target_p, psi=scenario.target_psi)

        for k in range(n_steps):
            t = k * cfg.dt_attitude
            if np.max(np.abs(state.eta[:2])) > 1.0:
                raise SimNanError(f"t={t:.3f}s: attitude diverged", log)

            if k % spp == 0:
                # position-rate loop: sensing, PID, vectoring, perch QP
                F_true = contact_now.F if contact_now is not None else np.zeros(3)
                M_true = contact_now.M if contact_now is not None else np.zeros(3)
                sensed_F = F_true + rng.normal(0.0, cfg.noise_force_std, 3)
                sensed_M = M_true + rng.normal(0.0, cfg.noise_moment_std, 3)
                filt = perch.filter_wrench(ContactState(F=sensed_F, M=sensed_M))

                if mode == MODE_FLIGHT and scenario.mode == "approach":
                    if float(filt.F_filtered[2]) > cfg.attach_force:
                        mode = MODE_PERCH
                        target = TrackingTarget(p=state.p.copy(), psi=scenario.target_psi)
                        pid.reset()

                if mode == MODE_PERCH:
                    # the contact owns position; track the live CoG so the
                    # flight loops only regulate attitude and z transients
                    target = TrackingTarget(p=state.p.copy(), psi=scenario.target_psi)
                    accels = np.zeros(2)
                    attitude_sp = (0.0, 0.0)
                else:
                    err_xy = target.p[:2] - state.p[:2]
                    accels = pid.update(err_xy, -state.pd[:2], cfg.dt_position)
                    attitude_sp = desired_attitude(
                        accels,
                        target.psi,
                        self.flight_params.gains.k_phi_d,
                        self.flight_params.gains.k_theta_d,
                        g=cfg.gravity,
                    )

                q_d = state.q.copy()
                if scenario.joint_ramp is not None:
                    ramp = scenario.joint_ramp.value(t)
                    q_d[: len(ramp)] = ramp
                else:
                    q_d[: model.n_arm_joints] = q0[: model.n_arm_joints]
                # with zero demanded acceleration this reduces to the trim
                # that keeps each unit's thrust vertical at the current q
                for i, (al, be) in enumerate(
                    vectoring_angles(model, state, accels, target.psi, self.flight_params.gains, g=cfg.gravity)
                ):
                    ia, ib = model.va_q_index(i)
                    q_d[ia], q_d[ib] = al, be

                if mode == MODE_PERCH:
                    lam_flight_est = np.clip(lam - lam_perch, model.thrust_min, model.thrust_max)
                    decision = perch.perch_thrust(state, filt, lam_flight_est)
                    lam_perch = decision.lam_perch
                    margins = decision.margins.as_array()
                else:
                    lam_perch = np.zeros(n_rot)
                    margins = np.full(9, np.inf)

            # attitude-rate loop
            try:
                lam_flight = lqi.update(state, target, attitude_sp, cfg.dt_attitude)
            except (ConfigurationError, StabilityError) as exc:
                raise SimNanError(f"t={t:.3f}s: {exc}", log) from exc
            cmd = ThrustCommand.combine(lam_flight, lam_perch, model.thrust_min, model.thrust_max)
            lam = cmd.lam
            saturated = 1.0 if cmd.saturated else 0.0

            if k % spp == 0:
                F_true = contact_now.F if contact_now is not None else np.zeros(3)
                M_true = contact_now.M if contact_now is not None else np.zeros(3)
                if F_true[2] > 0.0:
                    zmp = zmp_from_wrench(F_true, M_true, float(F_true[2]))
                else:
                    zmp = (np.nan, np.nan)
                row = np.concatenate(
                    [
                        [t, float(mode)],
                        state.p,
                        state.eta,
                        state.q,
                        lam,
                        forward_kinematics(self.model, state).foot_position,
                        F_true,
                        M_true,
                        sensed_F,
                        sensed_M,
                        np.asarray(filt.F_filtered),
                        np.asarray(filt.M_filtered),
                        zmp,
                        margins,
                        target.p - state.p,
                        [target.psi - state.eta[2], saturated, float(perch.alarms)],
                    ]
                )
                log.append(row)

            dist_f = np.zeros(3)
            dist_m = np.zeros(3)
            for d in scenario.disturbances:
                if d.active(t):
                    dist_f += d.force
                    dist_m += d.moment
            try:
                state, contact_now = rigid_body_step(
                    model,
                    state,
                    lam,
                    q_d,
                    cfg,
                    contact=contact,
                    dist_force=dist_f,
                    dist_moment=dist_m,
                )
            except FloatingPointError as exc:
                raise SimNanError(f"t={t:.3f}s: {exc}", log) from exc

        return log


def run_scenario(
    model: RobotModel,
    scenario: Scenario | str | Path,
    seed: int,
    flight_params: FlightParams | None = None,
    perch_params: PerchParams | None = None,
) -> SimLog:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    return Simulator(model, flight_params, perch_params).run(scenario, seed)
