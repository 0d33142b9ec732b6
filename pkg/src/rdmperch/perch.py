"""Perching controller: contact-stability margins and the thrust QP.

Sign convention: the foot frame z-axis points into the ceiling and the
recorded foot wrench is the force the plate presses against it, so
F_z > 0 means firm contact.  The QP searches the additional per-rotor
thrust that keeps the predicted contact wrench inside the friction, ZMP,
thrust-box, and slew constraints while minimizing the thrust norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import cross3
from .model import GeneralizedState, RobotModel, forward_kinematics
from .qp import QpInfeasibleError, qp_solve

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

#: fixed CSV column order for constraint-margin logs
MARGIN_COLUMNS = (
    "normal",
    "slide_x",
    "slide_y",
    "rot_z",
    "zmp_x",
    "zmp_y",
    "thrust_lo",
    "thrust_hi",
    "slew",
)


class ZmpUndefinedError(RuntimeError):
    """ZMP requested with non-positive normal force."""


@dataclass
class PerchParams:
    N: np.ndarray = field(default_factory=lambda: np.eye(4))
    U_mask: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.0, 0.0, 0.0]))
    eps_z: float = 1.0
    mu: tuple[float, float, float] = (0.9, 0.9, 0.5)
    H: tuple[float, float] = (0.04, 0.07)
    delta_lam: np.ndarray = field(default_factory=lambda: np.full(4, 5.0))
    lam_rotor_max: float = 20.0

    def __post_init__(self) -> None:
        if self.eps_z <= 0.0:
            raise ValueError("eps_z must be positive")
        if np.any(np.asarray(self.delta_lam) <= 0.0):
            raise ValueError("delta_lam must be positive componentwise")

    @classmethod
    def from_file(cls, path: str | Path) -> "PerchParams":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        tab = data.get("perch", data)
        return cls(
            N=np.diag(np.asarray(tab.get("n_weight", np.ones(4)), dtype=float)),
            U_mask=np.diag(np.asarray(tab.get("u_mask", [1.0, 0.0, 0.0, 0.0]), dtype=float)),
            eps_z=float(tab.get("eps_z", 1.0)),
            mu=tuple(tab.get("mu", (0.9, 0.9, 0.5))),
            H=tuple(tab.get("h", (0.04, 0.07))),
            delta_lam=np.asarray(tab.get("delta_lam", [5.0, 5.0, 5.0, 5.0]), dtype=float),
            lam_rotor_max=float(tab.get("lam_rotor_max", 20.0)),
        )


@dataclass
class ContactState:
    F: np.ndarray  # pressing force on the ceiling, foot frame (N)
    M: np.ndarray  # moment at the foot origin (N m)
    F_filtered: np.ndarray | None = None
    M_filtered: np.ndarray | None = None
    p_zmp: np.ndarray | None = None
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self) -> None:
        self.F = np.asarray(self.F, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if self.F_filtered is None:
            self.F_filtered = self.F.copy()
        if self.M_filtered is None:
            self.M_filtered = self.M.copy()


@dataclass
class ConstraintMargins:
    normal: float
    slide_x: float
    slide_y: float
    rot_z: float
    zmp_x: float
    zmp_y: float
    thrust_lo: float = np.inf
    thrust_hi: float = np.inf
    slew: float = np.inf

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in MARGIN_COLUMNS])

    @property
    def satisfied(self) -> bool:
        return bool(np.min(self.as_array()) >= 0.0)

    @property
    def worst(self) -> tuple[str, float]:
        arr = self.as_array()
        i = int(np.argmin(arr))
        return MARGIN_COLUMNS[i], float(arr[i])


def zmp_from_wrench(F: np.ndarray, M: np.ndarray, F_z: float, p_zmp_z: float = 0.0):
    """ZMP coordinates in the foot plane from the contact wrench."""
    if F_z <= 0.0:
        raise ZmpUndefinedError(f"normal force {F_z:.3f} N is not pressing")
    p_x = (F[0] * p_zmp_z - M[1]) / F_z
    p_y = (F[1] * p_zmp_z + M[0]) / F_z
    return float(p_x), float(p_y)


def check_contact(
    contact: ContactState,
    params: PerchParams,
    p_zmp_z: float = 0.0,
    thrust: np.ndarray | None = None,
    thrust_prev: np.ndarray | None = None,
    lam_max: np.ndarray | None = None,
) -> ConstraintMargins:
    """Signed slacks of every perch constraint; >= 0 means satisfied."""
    F, M = contact.F, contact.M
    mu_x, mu_y, mu_z = params.mu
    H_x, H_y = params.H
    F_z = float(F[2])
    normal = F_z - params.eps_z
    slide_x = mu_x * F_z - abs(float(F[0]))
    slide_y = mu_y * F_z - abs(float(F[1]))
    rot_z = mu_z * F_z - abs(float(M[2]))
    if F_z > 0.0:
        p_x, p_y = zmp_from_wrench(F, M, F_z, p_zmp_z)
        zmp_x = H_x - abs(p_x)
        zmp_y = H_y - abs(p_y)
    else:
        zmp_x = -np.inf
        zmp_y = -np.inf

    thrust_lo = np.inf
    thrust_hi = np.inf
    slew = np.inf
    if thrust is not None:
        thrust = np.asarray(thrust, dtype=float)
        thrust_lo = float(np.min(thrust))
        if lam_max is not None:
            thrust_hi = float(np.min(np.asarray(lam_max) - thrust))
        if thrust_prev is not None:
            slew = float(np.min(params.delta_lam - np.abs(thrust - thrust_prev)))
    return ConstraintMargins(
        normal=normal,
        slide_x=slide_x,
        slide_y=slide_y,
        rot_z=rot_z,
        zmp_x=zmp_x,
        zmp_y=zmp_y,
        thrust_lo=thrust_lo,
        thrust_hi=thrust_hi,
        slew=slew,
    )


class IirFilter:
    """First-order low-pass with an exact pole at the cutoff frequency."""

    def __init__(self, cutoff_hz: float, rate_hz: float, initial=0.0):
        if cutoff_hz >= rate_hz / 2.0:
            raise ValueError("cutoff must be below the Nyquist rate")
        self.b = float(np.exp(-2.0 * np.pi * cutoff_hz / rate_hz))
        self.y = np.asarray(initial, dtype=float) * 1.0

    def update(self, x) -> np.ndarray | float:
        self.y = self.b * self.y + (1.0 - self.b) * np.asarray(x, dtype=float)
        return self.y


def foot_frame_thrust_map(
    model: RobotModel, state: GeneralizedState, mask: bool = True
) -> np.ndarray:
    """4 x n map from thrust to [F_z, M_x, M_y, M_z] at the foot origin.

    Thrust directions are projected to the foot-frame vertical (the same
    linearization the flight controller uses) and arm-rotor columns are
    masked out per the perch allocation rule.
    """
    poses = forward_kinematics(model, state)
    R = poses.foot_rotation
    sigma = model.rotor_sigma
    drag = model.rotor_drag
    cols = []
    for i in range(model.n_rotors):
        u = np.array([0.0, 0.0, 1.0])
        p = R.T @ (poses.rotor_positions[i] - poses.foot_position)
        m = cross3(p, u) - drag[i] * sigma[i] * u
        cols.append(np.array([u[2], m[0], m[1], m[2]]))
    B = np.column_stack(cols)
    if mask and model.n_rotors == 4:
        B = B @ np.diag([1.0, 1.0, 0.0, 0.0])
    return B


def perch_qp_rows(
    B: np.ndarray,
    w0: np.ndarray,
    F: np.ndarray,
    lam_prev: np.ndarray,
    lam_flight: np.ndarray,
    params: PerchParams,
    p_zmp_z: float = 0.0,
):
    """Linear constraint rows of the perch QP: (A, b_lo, b_hi, lam_max).

    The decision variable is the perch thrust vector; the predicted wrench
    rows [F_z, M_x, M_y, M_z] are w0 + B lam with tangential forces frozen
    at the measured values.
    """
    n = B.shape[1]
    bz, bmx, bmy, bmz = B[0], B[1], B[2], B[3]
    mu_x, mu_y, mu_z = params.mu
    H_x, H_y = params.H

    rows, lo, hi = [], [], []

    def add(row, lower, upper=np.inf):
        rows.append(row)
        lo.append(lower)
        hi.append(upper)

    # F_z >= eps_z
    add(bz, params.eps_z - w0[0])
    # |F_x| <= mu_x F_z (tangential forces fixed by the measurement)
    add(mu_x * bz, abs(F[0]) - mu_x * w0[0])
    add(mu_y * bz, abs(F[1]) - mu_y * w0[0])
    # |M_z| <= mu_z F_z
    add(mu_z * bz - bmz, w0[3] - mu_z * w0[0])
    add(mu_z * bz + bmz, -w0[3] - mu_z * w0[0])
    # ZMP x: |F_x p_z - M_y| <= H_x F_z
    k_x = F[0] * p_zmp_z
    add(H_x * bz + bmy, (k_x - w0[2]) - H_x * w0[0])
    add(H_x * bz - bmy, -(k_x - w0[2]) - H_x * w0[0])
    # ZMP y: |F_y p_z + M_x| <= H_y F_z
    k_y = F[1] * p_zmp_z
    add(H_y * bz - bmx, (k_y + w0[1]) - H_y * w0[0])
    add(H_y * bz + bmx, -(k_y + w0[1]) - H_y * w0[0])
    # thrust box: 0 <= lam_perch <= lam_rotor_max - lam_flight
    lam_max = params.lam_rotor_max - np.asarray(lam_flight, dtype=float)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        add(e, 0.0, max(lam_max[i], 0.0))
    # slew continuity
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        add(e, lam_prev[i] - params.delta_lam[i], lam_prev[i] + params.delta_lam[i])

    return np.array(rows), np.array(lo), np.array(hi), lam_max


@dataclass
class PerchDecision:
    lam_perch: np.ndarray
    margins: ConstraintMargins
    feasible: bool
    kkt_residual: float
    objective: float
    predicted: ContactState | None = None


class PerchController:
    """Stateful perch-thrust allocator holding the previous command."""

    def __init__(self, model: RobotModel, params: PerchParams, rate_hz: float = 40.0):
        self.model = model
        self.params = params
        self.lam_prev = np.zeros(model.n_rotors)
        self.force_filter = IirFilter(1.0, rate_hz, np.zeros(3))
        self.moment_filter = IirFilter(1.0, rate_hz, np.zeros(3))
        self.alarms = 0

    def filter_wrench(self, contact: ContactState) -> ContactState:
        contact.F_filtered = self.force_filter.update(contact.F)
        contact.M_filtered = self.moment_filter.update(contact.M)
        return contact

    def perch_thrust(
        self,
        state: GeneralizedState,
        contact: ContactState,
        lam_flight: np.ndarray,
        p_zmp_z: float = 0.0,
    ) -> PerchDecision:
        params = self.params
        B = foot_frame_thrust_map(self.model, state)
        lam_prev = self.lam_prev
        F = np.asarray(contact.F_filtered, dtype=float)
        M = np.asarray(contact.M_filtered, dtype=float)

        # predicted contact wrench is affine in the decision variable:
        # w(lam) = w_meas + B (lam - lam_prev), rows [F_z, M_x, M_y, M_z]
        w0 = np.array([F[2], M[0], M[1], M[2]]) - B @ lam_prev
        A_rows, lo, hi, lam_max = perch_qp_rows(
            B, w0, F, lam_prev, lam_flight, params, p_zmp_z
        )

        P = 2.0 * params.N
        c = np.zeros(self.model.n_rotors)
        try:
            res = qp_solve(P, c, A_rows, lo, hi, x0=lam_prev)
        except QpInfeasibleError:
            self.alarms += 1
            margins = self._margins(B, w0, F, lam_prev, lam_prev, lam_max, p_zmp_z)
            return PerchDecision(
                lam_perch=lam_prev.copy(),
                margins=margins,
                feasible=False,
                kkt_residual=np.inf,
                objective=float(lam_prev @ params.N @ lam_prev),
            )

        lam = res.x
        margins = self._margins(B, w0, F, lam, lam_prev, lam_max, p_zmp_z)
        self.lam_prev = lam.copy()
        w = w0 + B @ lam
        predicted = ContactState(F=np.array([F[0], F[1], w[0]]), M=w[1:])
        return PerchDecision(
            lam_perch=lam,
            margins=margins,
            feasible=True,
            kkt_residual=res.kkt_residual,
            objective=res.objective,
            predicted=predicted,
        )

    def _margins(self, B, w0, F, lam, lam_prev, lam_max, p_zmp_z) -> ConstraintMargins:
        w = w0 + B @ lam
        predicted = ContactState(F=np.array([F[0], F[1], w[0]]), M=w[1:])
        return check_contact(
            predicted,
            self.params,
            p_zmp_z=p_zmp_z,
            thrust=lam,
            thrust_prev=lam_prev,
            lam_max=lam_max,
        )
