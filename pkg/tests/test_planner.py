"""Differential-IK planner: dampers, constraint rows, and convergence."""

import warnings

import numpy as np
import pytest

from rdmperch.geometry import euler_to_rot, rot_z, segment_segment_closest
from rdmperch.model import GeneralizedState, forward_kinematics, static_joint_torque
from rdmperch.planner import (
    Planner,
    PlannerConfig,
    PoseTarget,
    delta_target,
    nominal_thrust,
    velocity_damper,
)


def straight_state(model):
    return GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=np.zeros(model.n_q))


class TestDeltaTarget:
    def test_far_target_clipped_to_kappa(self):
        t = PoseTarget(position=np.array([1.0, 0.0, 0.0]))
        d = delta_target(np.zeros(3), np.eye(3), t, 0.02)
        assert np.linalg.norm(d) == pytest.approx(0.02, abs=1e-12)
        assert d[0] == pytest.approx(0.02, abs=1e-12)

    def test_near_target_full_step(self):
        t = PoseTarget(position=np.array([0.0, 0.005, 0.0]))
        d = delta_target(np.zeros(3), np.eye(3), t, 0.02)
        assert d[1] == pytest.approx(0.005, abs=1e-12)

    def test_rotation_log_direction(self):
        t = PoseTarget(position=np.zeros(3), rotation=rot_z(0.3))
        d = delta_target(np.zeros(3), np.eye(3), t, 1.0)
        assert np.allclose(d[3:], [0.0, 0.0, 0.3], atol=1e-12)


class TestVelocityDamper:
    def test_at_forbidden_edge_blocked(self):
        lo, hi = velocity_damper(0.02, 0.0, 1.0, 0.02, 0.15, -0.1, 0.1)
        assert lo == 0.0
        assert hi == pytest.approx(0.1)

    def test_midband_half_allowance(self):
        lo, _ = velocity_damper(0.085, 0.0, 1.0, 0.02, 0.15, -0.1, 0.1)
        assert lo == pytest.approx(-0.05, abs=1e-12)

    def test_outside_band_full_allowance(self):
        lo, hi = velocity_damper(0.5, 0.0, 1.0, 0.02, 0.15, -0.1, 0.1)
        assert lo == -0.1
        assert hi == 0.1

    def test_beyond_limit_warns(self):
        with pytest.warns(UserWarning):
            velocity_damper(-0.01, 0.0, 1.0, 0.02, 0.15, -0.1, 0.1)

    def test_band_ordering_enforced(self):
        with pytest.raises(ValueError):
            velocity_damper(0.5, 0.0, 1.0, 0.2, 0.1, -0.1, 0.1)


class TestConstraintRows:
    def test_torque_rows_match_directional_fd(self, quad):
        planner = Planner(quad)
        state = GeneralizedState(
            p=np.zeros(3), eta=np.zeros(3), q=0.2 * np.ones(quad.n_q) * 0.5
        )
        rows, lo, hi, (tau0, lam0, rho0) = planner._torque_thrust_stability_rows(
            state, "perch", None
        )
        J = np.array(rows)
        rng = np.random.default_rng(5)
        d = np.zeros(quad.n_zeta)
        d[6:] = rng.normal(size=quad.n_q)
        d /= np.linalg.norm(d)
        h = 3e-5

        def stack(z):
            s = GeneralizedState.from_zeta(z)
            lam, rho = nominal_thrust(quad, s, 1.0)
            tau = static_joint_torque(quad, s, np.concatenate([lam, np.zeros(0)]))
            return np.concatenate([tau[: quad.n_arm_joints], lam, [rho]])

        z0 = state.zeta()
        fd = (stack(z0 + h * d) - stack(z0 - h * d)) / (2 * h)
        assert np.allclose(J @ d, fd, atol=5e-5)

    def test_torque_row_bounds_use_current_torque(self, quad):
        planner = Planner(quad)
        state = straight_state(quad)
        rows, lo, hi, (tau0, _, _) = planner._torque_thrust_stability_rows(
            state, "perch", None
        )
        cfg = planner.config
        # an unstressed joint gets the full symmetric step allowance
        j = int(np.argmin(np.abs(tau0)))
        assert lo[j] == pytest.approx(-cfg.tau_step)
        assert hi[j] == pytest.approx(cfg.tau_step)

    def test_clearance_rows_predict_distance_change(self, quad):
        # fold the arm so the end link approaches the root link
        from rdmperch.model import jacobians

        # widen the activation band so rows appear at a legal fold
        planner = Planner(quad, PlannerConfig(d_r=0.35))
        q = np.zeros(quad.n_q)
        q[1] = 1.8
        q[3] = 1.2
        state = GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=q)
        poses = forward_kinematics(quad, state)
        jac = jacobians(quad, state)
        rows, lo, hi = planner._clearance_rows(state, poses, jac)
        assert rows

        def link_clearance(s):
            # the only non-adjacent link pair is (root, end)
            p = forward_kinematics(quad, s)
            segs = planner.capsules.segments(p)
            *_, dist = segment_segment_closest(*segs[0], *segs[2])
            return dist - 2.0 * quad.link_radius

        d0 = link_clearance(state)
        rng = np.random.default_rng(11)
        step = np.zeros(quad.n_zeta)
        step[6:12] = 1e-5 * rng.normal(size=6)
        d1 = link_clearance(GeneralizedState.from_zeta(state.zeta() + step))
        predicted = float(np.array(rows)[0] @ step)
        assert (d1 - d0) == pytest.approx(predicted, abs=1e-8)


class TestPlan:
    def test_flight_translation_converges(self, quad):
        planner = Planner(quad)
        state = straight_state(quad)
        home = forward_kinematics(quad, state)
        target = PoseTarget(position=home.ee_position + np.array([0.05, 0.03, -0.04]))
        res = planner.plan(state, target, mode="flight")
        assert res.converged
        assert res.final_error < 1e-3
        assert max(s.worst_violation for s in res.steps) <= 1e-8

    def test_perch_mode_pins_foot(self, quad):
        planner = Planner(quad)
        state = straight_state(quad)
        home = forward_kinematics(quad, state)
        target = PoseTarget(position=home.ee_position + np.array([-0.05, 0.04, -0.06]))
        res = planner.plan(state, target, mode="perch")
        assert res.converged
        final = GeneralizedState.from_zeta(res.zeta_final)
        after = forward_kinematics(quad, final)
        assert np.allclose(after.foot_position, home.foot_position, atol=1e-6)
        assert np.allclose(after.foot_rotation, home.foot_rotation, atol=1e-6)

    def test_perch_trajectory_respects_forbidden_zones(self, quad):
        planner = Planner(quad)
        state = straight_state(quad)
        home = forward_kinematics(quad, state)
        target = PoseTarget(position=home.ee_position + np.array([-0.25, 0.15, -0.15]))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            res = planner.plan(state, target, mode="perch")
        lo, hi = quad.q_limits()
        band = planner.config.zeta_f * (hi - lo)
        for s in res.steps:
            q = s.zeta[6:]
            assert np.all(q >= lo + band - 1e-9)
            assert np.all(q <= hi - band - 1e-9)
        assert max(s.worst_violation for s in res.steps) <= 1e-8

    def test_unreachable_target_reports_failure(self, quad):
        planner = Planner(quad, PlannerConfig(max_iters=120))
        state = straight_state(quad)
        target = PoseTarget(position=np.array([5.0, 0.0, 0.0]))
        res = planner.plan(state, target, mode="perch")
        assert not res.converged
        assert res.final_error > 1.0
