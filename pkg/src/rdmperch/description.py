"""Robot description files and programmatic model variants.

Descriptions are TOML files; the bundled `rdm-quad` model is a three-link
arm (0.40/0.40/0.25 m) with a dual-rotor vectoring unit at the root link
tip and another on the middle link.  Variant builders derive the rotor
layouts used in the design studies (bi/tri rotor, rotor-concentrated
baseline, vectoring-unit placement sweep).
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (
    ConfigurationError,
    FootSpec,
    JointSpec,
    LinkSpec,
    PointMassSpec,
    RobotModel,
    RotorUnitSpec,
    _thin_cylinder_inertia,
)


def _vec(raw, name: str, n: int = 3) -> np.ndarray:
    v = np.asarray(raw, dtype=float)
    if v.shape != (n,):
        raise ConfigurationError(f"{name} must be a {n}-vector")
    return v


def _link_from_table(tab: dict, index: int) -> LinkSpec:
    name = tab.get("name", f"link{index}")
    try:
        length = float(tab["length"])
        mass = float(tab["mass"])
    except KeyError as exc:
        raise ConfigurationError(f"links.{name}: missing field {exc}") from exc
    com = _vec(tab.get("com_offset", [length / 2.0, 0.0, 0.0]), f"links.{name}.com_offset")
    if "inertia" in tab:
        inertia = np.asarray(tab["inertia"], dtype=float).reshape(3, 3)
    else:
        inertia = _thin_cylinder_inertia(mass, length)
    return LinkSpec(length=length, mass=mass, com_offset=com, inertia=inertia, name=name)


def _joint_from_table(tab: dict, index: int) -> JointSpec:
    name = tab.get("name", f"joint{index}")
    try:
        return JointSpec(
            name=name,
            parent_link=int(tab["parent_link"]),
            axis=_vec(tab["axis"], f"joints.{name}.axis"),
            angle_limits=tuple(float(x) for x in tab["angle_limits"]),
            torque_limit=float(tab["torque_limit"]),
            kind=tab.get("kind", "arm"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"joints.{name}: missing field {exc}") from exc


def _unit_from_table(tab: dict, index: int) -> RotorUnitSpec:
    name = tab.get("name", f"unit{index}")
    try:
        return RotorUnitSpec(
            name=name,
            parent_link=int(tab["parent_link"]),
            mount_offset=_vec(tab["mount_offset"], f"rotor_units.{name}.mount_offset"),
            rotor_offsets=np.atleast_2d(np.asarray(tab["rotor_offsets"], dtype=float)),
            directions=np.asarray(tab["directions"], dtype=int),
            thrust_range=tuple(float(x) for x in tab["thrust_range"]),
            drag_ratio=float(tab["drag_ratio"]),
            rotor_diameter=float(tab["rotor_diameter"]),
            angle_limits=tuple(float(x) for x in tab.get("angle_limits", [-np.pi, np.pi])),
            mass=float(tab.get("mass", 0.25)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"rotor_units.{name}: missing field {exc}") from exc


def _point_mass_from_table(tab: dict, index: int) -> PointMassSpec:
    name = tab.get("name", f"module{index}")
    try:
        return PointMassSpec(
            name=name,
            parent_link=int(tab["parent_link"]),
            offset=_vec(tab["offset"], f"point_masses.{name}.offset"),
            mass=float(tab["mass"]),
        )
    except KeyError as exc:
        raise ConfigurationError(f"point_masses.{name}: missing field {exc}") from exc


def robot_from_dict(data: dict) -> RobotModel:
    try:
        foot_tab = data["foot"]
        foot = FootSpec(
            half_extents=tuple(float(x) for x in foot_tab["half_extents"]),
            friction=tuple(float(x) for x in foot_tab["friction"]),
            plate_offset=_vec(foot_tab.get("plate_offset", [0.0, 0.0, 0.0]), "foot.plate_offset"),
            mass=float(foot_tab.get("mass", 0.35)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"foot: missing field {exc}") from exc

    rep = data.get("representative", {})
    return RobotModel(
        name=data.get("name", "robot"),
        links=tuple(_link_from_table(t, i) for i, t in enumerate(data.get("links", []))),
        joints=tuple(_joint_from_table(t, i) for i, t in enumerate(data.get("joints", []))),
        rotor_units=tuple(_unit_from_table(t, i) for i, t in enumerate(data.get("rotor_units", []))),
        point_masses=tuple(
            _point_mass_from_table(t, i) for i, t in enumerate(data.get("point_masses", []))
        ),
        foot=foot,
        end_effector_offset=float(data.get("end_effector_offset", 0.0)),
        representative_force=float(rep.get("force", 33.5)),
        representative_length=float(rep.get("length", 1.2)),
        link_radius=float(data.get("link_radius", 0.05)),
    )


def load_robot(path: str | Path) -> RobotModel:
    """Load a robot description from a TOML file or a bundled name."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        return bundled_robot(str(path))
    with open(p, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{p}: {exc}") from exc
    return robot_from_dict(data)


def bundled_robot(name: str = "rdm-quad") -> RobotModel:
    ref = resources.files("rdmperch") / "data" / f"{name}.toml"
    if not ref.is_file():
        raise ConfigurationError(f"no bundled robot named {name!r}")
    data = tomllib.loads(ref.read_text())
    return robot_from_dict(data)


# -- design-study variants --------------------------------------------------

_ARM_UNIT_X = {"root": 0.0, "middle": 0.2, "end": 0.4}  # offset along the middle link


def with_arm_unit_at(base: RobotModel, placement: str) -> RobotModel:
    """Move the arm vectoring unit along the middle link (root/middle/end)."""
    if placement not in _ARM_UNIT_X:
        raise ConfigurationError(f"placement must be one of {sorted(_ARM_UNIT_X)}")
    units = list(base.rotor_units)
    arm = units[-1]
    moved = RotorUnitSpec(
        name=arm.name,
        parent_link=arm.parent_link,
        mount_offset=np.array([_ARM_UNIT_X[placement], 0.0, 0.0]),
        rotor_offsets=arm.rotor_offsets,
        directions=arm.directions,
        thrust_range=arm.thrust_range,
        drag_ratio=arm.drag_ratio,
        rotor_diameter=arm.rotor_diameter,
        angle_limits=arm.angle_limits,
        mass=arm.mass,
    )
    units[-1] = moved
    return _replace_units(base, tuple(units), name=f"{base.name}-arm-{placement}")


def bi_rotor_variant(base: RobotModel) -> RobotModel:
    """Single dual-rotor unit at the root link tip; arm unit removed.

    The removed unit mass is folded into a fixed module at the same mount so
    the mass distribution is unchanged.
    """
    foot_unit, arm_unit = base.rotor_units
    ballast = PointMassSpec(
        parent_link=arm_unit.parent_link,
        offset=np.asarray(arm_unit.mount_offset, dtype=float),
        mass=arm_unit.mass,
        name="ballast",
    )
    return _replace_units(
        base,
        (foot_unit,),
        point_masses=base.point_masses + (ballast,),
        name="rdm-bi",
    )


def tri_rotor_variant(base: RobotModel) -> RobotModel:
    """Dual foot unit plus a single-rotor arm unit (three rotors total)."""
    foot_unit, arm_unit = base.rotor_units
    single = RotorUnitSpec(
        name=arm_unit.name,
        parent_link=arm_unit.parent_link,
        mount_offset=arm_unit.mount_offset,
        rotor_offsets=np.zeros((1, 3)),
        directions=np.array([1]),
        thrust_range=arm_unit.thrust_range,
        drag_ratio=arm_unit.drag_ratio,
        rotor_diameter=arm_unit.rotor_diameter,
        angle_limits=arm_unit.angle_limits,
        mass=arm_unit.mass,
    )
    return _replace_units(base, (foot_unit, single), name="rdm-tri")


def rcm_variant(base: RobotModel) -> RobotModel:
    """Rotor-concentrated baseline: both dual units clustered on the root link.

    Same links, masses, and rotor hardware.  The rotor square straddles the
    hanging-arm center of gravity (mounts at 0.10 and 0.35 m) and the root
    joint becomes a structural weld (the rotor moments, not a servo, hold
    the base), so the remaining joints form a conventional arm hanging from
    a quadrotor body.
    """
    foot_unit, arm_unit = base.rotor_units

    def moved(unit: RotorUnitSpec, x: float) -> RotorUnitSpec:
        return RotorUnitSpec(
            name=unit.name,
            parent_link=0,
            mount_offset=np.array([x, 0.0, 0.0]),
            rotor_offsets=unit.rotor_offsets,
            directions=unit.directions,
            thrust_range=unit.thrust_range,
            drag_ratio=unit.drag_ratio,
            rotor_diameter=unit.rotor_diameter,
            angle_limits=unit.angle_limits,
            mass=unit.mass,
        )

    joints = list(base.joints)
    root = joints[0]
    joints[0] = JointSpec(
        name=root.name,
        parent_link=root.parent_link,
        axis=root.axis,
        angle_limits=(-1e-6, 1e-6),
        torque_limit=1e6,
        kind=root.kind,
    )
    out = _replace_units(
        base, (moved(foot_unit, 0.10), moved(arm_unit, 0.35)), name="rcm-quad"
    )
    return RobotModel(
        name=out.name,
        links=out.links,
        joints=tuple(joints),
        rotor_units=out.rotor_units,
        point_masses=out.point_masses,
        foot=out.foot,
        end_effector_offset=out.end_effector_offset,
        representative_force=out.representative_force,
        representative_length=out.representative_length,
        link_radius=out.link_radius,
    )


def _replace_units(
    base: RobotModel,
    units: tuple[RotorUnitSpec, ...],
    point_masses: tuple[PointMassSpec, ...] | None = None,
    name: str | None = None,
) -> RobotModel:
    return RobotModel(
        name=name or base.name,
        links=base.links,
        joints=base.joints,
        rotor_units=units,
        point_masses=base.point_masses if point_masses is None else point_masses,
        foot=base.foot,
        end_effector_offset=base.end_effector_offset,
        representative_force=base.representative_force,
        representative_length=base.representative_length,
        link_radius=base.link_radius,
    )
