"""Support polygon, aerial ZMP, feasible force LP, and AMR/AMF sweeps."""

import numpy as np
import pytest

from rdmperch.description import (
    bi_rotor_variant,
    bundled_robot,
    rcm_variant,
    tri_rotor_variant,
    with_arm_unit_at,
)
from rdmperch.evaluation import (
    SweepConfig,
    aerial_zmp,
    compute_amf,
    compute_amr,
    feasible_ee_force,
    flight_stable,
    support_polygon,
    trim_vectoring,
)
from rdmperch.model import GeneralizedState, forward_kinematics


def straight_state(model, **kw):
    return GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=np.zeros(model.n_q), **kw)


def flexed_home(model, q1=0.0, q2=0.3, q4=-0.15):
    q = np.zeros(model.n_q)
    q[0], q[1], q[3] = q1, q2, q4
    return GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=q)


def small_sweep(model, home):
    """Sweep domain clipped to a small box around the home end effector."""
    poses = forward_kinematics(model, home)
    rel = poses.ee_position - poses.foot_position
    return SweepConfig(
        bounds_lo=rel - np.array([0.12, 0.05, 0.12]),
        bounds_hi=rel + np.array([0.12, 0.05, 0.12]),
    )


class TestAerialZmp:
    def test_weighted_sum_oracle(self, quad):
        rng = np.random.default_rng(3)
        for _ in range(20):
            state = straight_state(quad)
            lam = rng.uniform(0.5, 15.0, size=4)
            p = aerial_zmp(quad, state, lam)
            poses = forward_kinematics(quad, state)
            fz = lam * poses.rotor_directions[:, 2]
            expect = (fz[:, None] * poses.rotor_positions[:, :2]).sum(axis=0) / fz.sum()
            assert np.allclose(p, expect, atol=1e-12)

    def test_single_rotor_weighting(self, quad):
        state = straight_state(quad)
        lam = np.array([5.0, 0.0, 0.0, 0.0])
        p = aerial_zmp(quad, state, lam)
        poses = forward_kinematics(quad, state)
        assert np.allclose(p, poses.rotor_positions[0, :2], atol=1e-12)

    def test_zero_thrust_rejected(self, quad):
        with pytest.raises(ValueError):
            aerial_zmp(quad, straight_state(quad), np.zeros(4))


class TestFlightStable:
    def test_quad_straight_stable(self, quad):
        ok, margin = flight_stable(quad, straight_state(quad))
        assert ok
        assert margin > 0.0

    def test_bi_rotor_unstable(self, quad):
        bi = bi_rotor_variant(quad)
        ok, margin = flight_stable(bi, straight_state(bi))
        assert not ok
        asp = support_polygon(bi, straight_state(bi))
        assert asp.degenerate

    def test_tri_rotor_vertical_unstable(self, quad):
        tri = tri_rotor_variant(quad)
        q = np.zeros(tri.n_q)
        q[0] = np.pi / 2
        ok, _ = flight_stable(tri, GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=q))
        assert not ok

    def test_straight_margin_is_lateral_halfwidth(self, quad):
        # rotor hull spans x in [0, 0.8], y in +-0.08 around the CoG; the
        # near edges are the y sides
        _, margin = flight_stable(quad, straight_state(quad))
        assert margin == pytest.approx(0.08, abs=1e-9)

    def test_margin_changes_with_configuration(self, quad):
        _, m0 = flight_stable(quad, straight_state(quad))
        # yaw the arm so the hull and CoG shift laterally
        q = np.zeros(quad.n_q)
        q[2] = 0.8
        _, m1 = flight_stable(quad, GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=q))
        assert m1 != pytest.approx(m0, abs=1e-6)


class TestFeasibleForce:
    def test_bisection_consistency(self, quad):
        """The LP maximum must sit exactly on the feasibility boundary."""
        from scipy.optimize import linprog

        from rdmperch.evaluation import _torque_maps

        state = straight_state(quad)
        _, per = feasible_ee_force(quad, state, "perch")
        tau_g, T_lam, T_f = _torque_maps(quad, state)
        f_star = per[2]

        def feasible_dir(f, sign):
            from rdmperch.evaluation import _contact_maps

            e = sign * np.array([0.0, 0.0, 1.0])
            w_g, B, C, _ = _contact_maps(quad, state)
            mu_z = quad.foot.friction[2]
            H_x, H_y = quad.foot.half_extents
            rows = [T_lam[:6], -T_lam[:6]]
            ub = [
                quad.joint_torque_limits() - tau_g[:6] - f * T_f[:6] @ e,
                quad.joint_torque_limits() + tau_g[:6] + f * T_f[:6] @ e,
            ]
            w0 = w_g + f * C @ e
            rows += [-B[0][None, :], (B[3] - mu_z * B[0])[None, :], (-B[3] - mu_z * B[0])[None, :]]
            ub += [
                np.array([w0[0] - 1.0]),
                np.array([mu_z * w0[0] - w0[3]]),
                np.array([mu_z * w0[0] + w0[3]]),
            ]
            rows += [(B[2] - H_x * B[0])[None, :], (-B[2] - H_x * B[0])[None, :]]
            ub += [np.array([H_x * w0[0] - w0[2]]), np.array([H_x * w0[0] + w0[2]])]
            rows += [(B[1] - H_y * B[0])[None, :], (-B[1] - H_y * B[0])[None, :]]
            ub += [np.array([H_y * w0[0] - w0[1]]), np.array([H_y * w0[0] + w0[1]])]
            res = linprog(
                np.zeros(4),
                A_ub=np.vstack(rows),
                b_ub=np.concatenate(ub),
                bounds=[(quad.thrust_min[i], quad.thrust_max[i]) for i in range(4)],
                method="highs",
            )
            return res.success

        def feasible(f):
            # the reported magnitude is the better of the two directions
            return feasible_dir(f, 1.0) or feasible_dir(f, -1.0)

        assert feasible(f_star - 1e-4)
        assert not feasible(f_star + 0.05)

    def test_monotone_in_torque_limits(self, quad):
        import dataclasses

        state = straight_state(quad)
        f0, _ = feasible_ee_force(quad, state, "perch")
        joints = tuple(
            dataclasses.replace(j, torque_limit=2.0 * j.torque_limit) for j in quad.joints
        )
        bigger = dataclasses.replace(quad, joints=joints)
        f1, _ = feasible_ee_force(bigger, state, "perch")
        assert f1 >= f0 - 1e-9

    def test_rdm_exceeds_rcm(self, quad):
        rcm = rcm_variant(quad)
        f_rdm, _ = feasible_ee_force(quad, straight_state(quad), "perch")
        f_rcm, _ = feasible_ee_force(rcm, straight_state(rcm), "perch")
        assert f_rdm > f_rcm

    def test_flight_balance_bounds_force(self, quad):
        home = trim_vectoring(quad, flexed_home(quad))
        f, per = feasible_ee_force(quad, home, "flight")
        assert 0.0 < f < 100.0


class TestTrimVectoring:
    def test_thrust_vertical_after_trim(self, quad):
        state = trim_vectoring(quad, flexed_home(quad))
        poses = forward_kinematics(quad, state)
        for u in poses.rotor_directions:
            assert u[2] == pytest.approx(1.0, abs=1e-9)


class TestSweeps:
    def test_home_voxel_reachable(self, quad):
        home = flexed_home(quad)
        reached, _ = compute_amr(quad, home, "perch", small_sweep(quad, home))
        assert len(reached) >= 1

    def test_neighbors_filled(self, quad):
        home = flexed_home(quad)
        reached, _ = compute_amr(quad, home, "perch", small_sweep(quad, home))
        assert len(reached) > 5

    def test_far_targets_excluded(self, quad):
        home = flexed_home(quad)
        sweep = small_sweep(quad, home)
        reached, _ = compute_amr(quad, home, "perch", sweep)
        poses = forward_kinematics(quad, home)
        for v in reached:
            c = poses.foot_position + sweep.grid * np.array(v, dtype=float)
            assert np.linalg.norm(c - poses.foot_position) <= sweep.reach_radius + 1e-9

    def test_root_placement_empty(self, quad):
        mm = with_arm_unit_at(quad, "root")
        home = flexed_home(mm)
        rep = compute_amf(mm, home, "flight", small_sweep(mm, home))
        assert rep.amf == 0.0
        assert rep.amr_volume == 0.0

    def test_amf_positive_on_small_region(self, quad):
        home = flexed_home(quad)
        rep = compute_amf(quad, home, "flight", small_sweep(quad, home))
        assert rep.amf > 0.0
        assert len(rep.forces) == len(rep.voxels)
        assert np.all(rep.forces >= 0.0)

    def test_translation_invariance(self, quad):
        home0 = flexed_home(quad)
        home1 = flexed_home(quad)
        home1.p = home1.p + np.array([0.3, -0.2, 0.5])
        r0 = compute_amf(quad, home0, "flight", small_sweep(quad, home0))
        r1 = compute_amf(quad, home1, "flight", small_sweep(quad, home1))
        assert r1.amf == pytest.approx(r0.amf, rel=1e-6)
        assert r1.amr_volume == pytest.approx(r0.amr_volume, rel=1e-9)
