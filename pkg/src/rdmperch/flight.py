"""Flight controller.

Altitude and attitude are regulated by an LQI on the linearized
quasi-static model: outputs [p_z, roll, pitch, yaw], their rates, and an
integrator on the output error form a 12-state system driven through the
reduced allocation matrix.  Horizontal position runs a PID whose desired
accelerations are converted to attitude setpoints and vectoring-unit
angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_continuous_are

from .allocation import (
    AllocationMatrix,
    build_allocation,
    invert_reduced,
    reduced_allocation,
)
from .geometry import cross3
from .model import GRAVITY, GeneralizedState, RobotModel, inertia_about_cog

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

ARE_RESIDUAL_TOL = 1e-8
GAIN_RESCHEDULE_THRESHOLD = 0.05  # rad, inf-norm change in q


class DesignError(RuntimeError):
    """LQI design failed (non-stabilizable pair or bad Riccati solve)."""


@dataclass
class PositionGains:
    k_p: tuple[float, float] = (4.6, 7.0)  # x, y
    k_i: tuple[float, float] = (1.5, 0.005)
    k_d: tuple[float, float] = (7.0, 10.5)
    k_phi_d: float = 0.0
    k_theta_d: float = 1.0
    k_phi: tuple[float, ...] = (1.0, 0.0)  # per vectoring unit
    k_theta: tuple[float, ...] = (0.0, 0.0)
    integral_clamp: float = 2.0
    alpha_rate_limit: float = 2.0  # rad/s slew on vectoring roll commands


@dataclass
class LqiWeights:
    W1: np.ndarray = field(default_factory=lambda: np.eye(12))
    W2: np.ndarray = field(default_factory=lambda: np.diag([20.0, 30.0, 90.0, 12.8]))


@dataclass
class FlightParams:
    weights: LqiWeights = field(default_factory=LqiWeights)
    gains: PositionGains = field(default_factory=PositionGains)

    @classmethod
    def from_file(cls, path: str | Path) -> "FlightParams":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        lqi = data.get("lqi", {})
        weights = LqiWeights(
            W1=np.diag(np.asarray(lqi.get("w1", np.ones(12)), dtype=float)),
            W2=np.diag(np.asarray(lqi.get("w2", [20.0, 30.0, 90.0, 12.8]), dtype=float)[:4]),
        )
        pid = data.get("position", {})
        gains = PositionGains(
            k_p=tuple(pid.get("k_p", (4.6, 7.0))),
            k_i=tuple(pid.get("k_i", (1.5, 0.005))),
            k_d=tuple(pid.get("k_d", (7.0, 10.5))),
            k_phi_d=float(pid.get("k_phi_d", 0.0)),
            k_theta_d=float(pid.get("k_theta_d", 1.0)),
            k_phi=tuple(pid.get("k_phi", (1.0, 0.0))),
            k_theta=tuple(pid.get("k_theta", (0.0, 0.0))),
            integral_clamp=float(pid.get("integral_clamp", 2.0)),
            alpha_rate_limit=float(pid.get("alpha_rate_limit", 2.0)),
        )
        return cls(weights=weights, gains=gains)


@dataclass
class LqiDesign:
    K: np.ndarray  # 4 x 12
    P: np.ndarray
    q_snapshot: np.ndarray
    Qbar: np.ndarray
    residual: float
    lam_steady: np.ndarray = field(default_factory=lambda: np.zeros(4))


@dataclass
class TrackingTarget:
    p: np.ndarray
    psi: float = 0.0
    q: np.ndarray | None = None


def linearize(model: RobotModel, state: GeneralizedState):
    """Augmented LQI system (Abar, Bbar, C) at the current configuration.

    State ordering: [output error (4); output rate (4); integral (4)] with
    outputs [p_z, roll, pitch, yaw].
    """
    A_alloc = build_allocation(model, state, horizontal=True)
    Qbar = reduced_allocation(A_alloc)
    invert_reduced(Qbar)  # raises StabilityError when singular
    I = inertia_about_cog(model, state)
    Mbar = np.zeros((4, 4))
    Mbar[0, 0] = model.total_mass
    Mbar[1:, 1:] = I
    A = np.zeros((8, 8))
    A[:4, 4:] = np.eye(4)
    B = np.zeros((8, 4))
    B[4:, :] = np.linalg.solve(Mbar, Qbar)
    C = np.hstack([np.eye(4), np.zeros((4, 4))])
    Abar = np.zeros((12, 12))
    Abar[:8, :8] = A
    Abar[8:, :4] = -C[:, :4]
    Bbar = np.vstack([B, np.zeros((4, 4))])
    return Abar, Bbar, C, Qbar


def solve_lqi(Abar: np.ndarray, Bbar: np.ndarray, W1: np.ndarray, W2: np.ndarray):
    """LQR gain for the pair (Abar, Bbar): K = W2^-1 Bbar^T P."""
    try:
        P = solve_continuous_are(Abar, Bbar, W1, W2)
    except Exception as exc:
        raise DesignError(f"Riccati solve failed: {exc}") from exc
    residual = Abar.T @ P + P @ Abar - P @ Bbar @ np.linalg.solve(W2, Bbar.T) @ P + W1
    res = float(np.linalg.norm(residual))
    if res > ARE_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(P))):
        raise DesignError(f"Riccati residual too large: {res:.3e}")
    K = np.linalg.solve(W2, Bbar.T @ P)
    eig = np.linalg.eigvals(Abar - Bbar @ K)
    if np.max(eig.real) >= 0.0:
        raise DesignError("closed loop not asymptotically stable")
    return K, P, res


def gyro_compensation(model, state, Qbar) -> np.ndarray:
    """Thrust canceling the gyroscopic moment: Qbar^-1 [0; w x Iw]."""
    I = inertia_about_cog(model, state)
    m = cross3(state.omega, I @ state.omega)
    return invert_reduced(Qbar) @ np.concatenate([[0.0], m])


class AltitudeAttitudeLqi:
    """Stateful LQI loop with gain rescheduling and integral anti-windup."""

    def __init__(self, model: RobotModel, params: FlightParams, state: GeneralizedState):
        self.model = model
        self.params = params
        self.v = np.zeros(4)
        self.design = self._design(state)

    def _design(self, state: GeneralizedState) -> LqiDesign:
        Abar, Bbar, _, Qbar = linearize(self.model, state)
        K, P, res = solve_lqi(Abar, Bbar, self.params.weights.W1, self.params.weights.W2)
        return LqiDesign(K=K, P=P, q_snapshot=state.q.copy(), Qbar=Qbar, residual=res)

    def maybe_reschedule(self, state: GeneralizedState) -> bool:
        if np.max(np.abs(state.q - self.design.q_snapshot)) > GAIN_RESCHEDULE_THRESHOLD:
            v = self.v
            steady = self._steady is not None
            self.design = self._design(state)
            self.v = v
            if steady:
                self.prime_hover(state, g=self._steady)
            return True
        return False

    _steady: float | None = None

    def prime_hover(self, state: GeneralizedState, g: float = GRAVITY) -> None:
        """Set the steady input so hover thrust balances gravity at zero error."""
        self._steady = g
        self.design.lam_steady = invert_reduced(self.design.Qbar) @ np.array(
            [self.model.total_mass * g, 0.0, 0.0, 0.0]
        )

    def output_error(self, state: GeneralizedState, target: TrackingTarget, attitude_sp):
        phi_d, theta_d = attitude_sp
        e = np.array(
            [
                state.p[2] - target.p[2],
                state.eta[0] - phi_d,
                state.eta[1] - theta_d,
                state.eta[2] - target.psi,
            ]
        )
        from .geometry import euler_rates_from_omega

        eta_dot = euler_rates_from_omega(state.eta, state.omega)
        e_dot = np.array([state.pd[2], eta_dot[0], eta_dot[1], eta_dot[2]])
        return e, e_dot

    def update(
        self,
        state: GeneralizedState,
        target: TrackingTarget,
        attitude_sp: tuple[float, float],
        dt: float,
    ) -> np.ndarray:
        self.maybe_reschedule(state)
        e, e_dot = self.output_error(state, target, attitude_sp)
        self.v += -e * dt
        clamp = self.params.gains.integral_clamp
        self.v = np.clip(self.v, -clamp, clamp)
        x = np.concatenate([e, e_dot, self.v])
        lam = (
            -self.design.K @ x
            + self.design.lam_steady
            + gyro_compensation(self.model, state, self.design.Qbar)
        )
        return lam


def flight_thrust(
    design: LqiDesign,
    model: RobotModel,
    state: GeneralizedState,
    x_bar: np.ndarray,
    lam_min: np.ndarray,
    lam_max: np.ndarray,
):
    """Stateless thrust evaluation: -K x_bar + gyroscopic compensation.

    Returns (clamped thrust, saturation flag).
    """
    lam = -design.K @ x_bar + design.lam_steady + gyro_compensation(model, state, design.Qbar)
    clipped = np.clip(lam, lam_min, lam_max)
    saturated = bool(np.any(np.abs(clipped - lam) > 1e-12))
    return clipped, saturated


class PositionPid:
    """Horizontal PID producing desired accelerations, with anti-windup."""

    def __init__(self, gains: PositionGains):
        self.gains = gains
        self.integral = np.zeros(2)

    def reset(self) -> None:
        self.integral[:] = 0.0

    def update(self, error_xy: np.ndarray, error_rate_xy: np.ndarray, dt: float) -> np.ndarray:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        g = self.gains
        self.integral += error_xy * dt
        self.integral = np.clip(self.integral, -g.integral_clamp, g.integral_clamp)
        return np.array(
            [
                g.k_p[0] * error_xy[0] + g.k_i[0] * self.integral[0] + g.k_d[0] * error_rate_xy[0],
                g.k_p[1] * error_xy[1] + g.k_i[1] * self.integral[1] + g.k_d[1] * error_rate_xy[1],
            ]
        )


def desired_attitude(
    accels: np.ndarray,
    psi_d: float,
    k_phi_d: float,
    k_theta_d: float,
    g: float = GRAVITY,
) -> tuple[float, float]:
    """Roll/pitch setpoints realizing the desired horizontal acceleration."""
    ax, ay = accels
    s, c = np.sin(psi_d), np.cos(psi_d)
    phi_d = k_phi_d * (ax * s - ay * c) / g
    theta_d = k_theta_d * (ax * c + ay * s) / g
    return float(phi_d), float(theta_d)


def vectoring_angles(
    model: RobotModel,
    state: GeneralizedState,
    accels: np.ndarray,
    psi_d: float,
    gains: PositionGains,
    g: float = GRAVITY,
) -> list[tuple[float, float]]:
    """Per-unit (roll alpha, pitch beta) aligning thrust with the desired
    acceleration share assigned to that unit."""
    from .model import Chain

    chain = Chain(model, state.q)
    ax, ay = accels
    s, c = np.sin(psi_d), np.cos(psi_d)
    out = []
    for i, unit in enumerate(model.rotor_units):
        k_theta = gains.k_theta[i] if i < len(gains.k_theta) else 0.0
        k_phi = gains.k_phi[i] if i < len(gains.k_phi) else 0.0
        # y-entry sign: a direct rotor tilt needs thrust along +y for a +y
        # acceleration (the body-roll setpoint formula has the opposite sign)
        n_cog = np.array(
            [
                k_theta * (ax * c + ay * s),
                k_phi * (ay * c - ax * s),
                g,
            ]
        )
        R_link = chain.link_base_R[unit.parent_link]
        n = R_link.T @ n_cog
        n = n / np.linalg.norm(n)
        alpha = float(np.arctan2(-n[1], n[2]))
        beta = float(np.arctan2(n[0], -n[1] * np.sin(alpha) + n[2] * np.cos(alpha)))
        out.append((alpha, beta))
    return out
