"""Rotor thrust to body wrench mapping.

Column i of the allocation matrix stacks the unit thrust direction u_i and
the moment arm term ([p_i x] - c sigma_i I) u_i about the CoG, where p_i is
the rotor position relative to the CoG and sigma_i the spin direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cross3
from .model import GeneralizedState, RobotModel, forward_kinematics

SV_CUTOFF = 1e-8


class StabilityError(RuntimeError):
    """Allocation matrix too close to singular to invert safely."""


@dataclass(frozen=True)
class AllocationMatrix:
    Q: np.ndarray  # 6 x n_rotor
    q_snapshot: np.ndarray
    n_rotors: int

    def wrench(self, thrusts: np.ndarray) -> np.ndarray:
        return self.Q @ np.asarray(thrusts, dtype=float)


@dataclass
class ThrustCommand:
    lam: np.ndarray
    lam_flight: np.ndarray
    lam_perch: np.ndarray
    lam_min: np.ndarray
    lam_max: np.ndarray
    saturated: bool = False

    def __post_init__(self) -> None:
        if not np.allclose(self.lam, self.lam_flight + self.lam_perch, atol=1e-9):
            raise ValueError("thrust decomposition must sum to the total command")

    @classmethod
    def combine(cls, lam_flight, lam_perch, lam_min, lam_max) -> "ThrustCommand":
        lam_flight = np.asarray(lam_flight, dtype=float)
        lam_perch = np.asarray(lam_perch, dtype=float)
        total = lam_flight + lam_perch
        clipped = np.clip(total, lam_min, lam_max)
        saturated = bool(np.any(np.abs(clipped - total) > 1e-12))
        # clamp is charged to the flight share so the perch share stays intact
        return cls(
            lam=clipped,
            lam_flight=clipped - lam_perch,
            lam_perch=lam_perch.copy(),
            lam_min=np.asarray(lam_min, dtype=float),
            lam_max=np.asarray(lam_max, dtype=float),
            saturated=saturated,
        )


def build_allocation(
    model: RobotModel,
    state: GeneralizedState,
    horizontal: bool = False,
    poses=None,
) -> AllocationMatrix:
    """Allocation matrix at the current configuration, CoG frame.

    With ``horizontal=True`` thrust directions are projected to the world
    vertical (the linearization the controllers use); positions stay exact.
    """
    if poses is None:
        poses = forward_kinematics(model, state)
    sigma = model.rotor_sigma
    drag = model.rotor_drag
    cols = []
    for i in range(model.n_rotors):
        u = poses.rotor_directions[i]
        if horizontal:
            u = np.array([0.0, 0.0, 1.0 if u[2] >= 0.0 else -1.0])
        p = poses.rotor_positions[i] - poses.cog
        cols.append(np.concatenate([u, cross3(p, u) - drag[i] * sigma[i] * u]))
    Q = np.column_stack(cols)
    return AllocationMatrix(Q=Q, q_snapshot=state.q.copy(), n_rotors=model.n_rotors)


def reduced_allocation(A: AllocationMatrix) -> np.ndarray:
    """Rows z-force, roll, pitch, yaw of the allocation matrix (4 x n)."""
    return A.Q[2:6].copy()


def perch_allocation(A: AllocationMatrix) -> np.ndarray:
    """Reduced allocation with the arm-rotor columns masked out.

    Requires the four-rotor layout with the foot-unit rotors listed first.
    """
    if A.n_rotors != 4:
        raise ValueError(f"perch allocation needs 4 rotors, model has {A.n_rotors}")
    Qbar = reduced_allocation(A)
    return Qbar @ np.diag([1.0, 1.0, 0.0, 0.0])


def invert_reduced(Qbar: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of the reduced allocation with a singularity guard."""
    s = np.linalg.svd(Qbar, compute_uv=False)
    # Qbar must span all four wrench rows; fewer rotors than rows cannot
    if len(s) < Qbar.shape[0] or s[-1] < SV_CUTOFF * max(1.0, s[0]):
        raise StabilityError("reduced allocation matrix is singular")
    return np.linalg.pinv(Qbar, rcond=SV_CUTOFF)


def stability_measure(Qbar: np.ndarray) -> float:
    """Manipulability-style measure sqrt(det(Qbar Qbar^T)); 0 when singular."""
    g = Qbar @ Qbar.T
    d = float(np.linalg.det(g))
    return float(np.sqrt(max(d, 0.0)))


def nominal_hover_thrust(model: RobotModel, Qbar: np.ndarray, g: float = 9.81, extra_z: float = 0.0) -> np.ndarray:
    """Least-norm thrust producing weight support with zero body moments."""
    target = np.array([model.total_mass * g + extra_z, 0.0, 0.0, 0.0])
    return invert_reduced(Qbar) @ target
