"""LQI design, PID, attitude and vectoring-angle allocation checks."""

import numpy as np
import pytest

from rdmperch.allocation import build_allocation, reduced_allocation
from rdmperch.flight import (
    AltitudeAttitudeLqi,
    DesignError,
    FlightParams,
    PositionGains,
    PositionPid,
    TrackingTarget,
    desired_attitude,
    flight_thrust,
    gyro_compensation,
    linearize,
    solve_lqi,
    vectoring_angles,
)
from rdmperch.model import GeneralizedState, inertia_about_cog

from conftest import random_state


def straight_state(model, **kw):
    return GeneralizedState(p=np.zeros(3), eta=np.zeros(3), q=np.zeros(model.n_q), **kw)


class TestLinearize:
    def test_integrator_chain_eigenvalues(self, quad):
        Abar, Bbar, C, _ = linearize(quad, straight_state(quad))
        assert np.allclose(np.linalg.eigvals(Abar), 0.0, atol=1e-12)

    def test_b_block_assembly(self, quad):
        rng = np.random.default_rng(67)
        state = random_state(quad, rng, attitude_scale=0.1)
        Abar, Bbar, C, Qbar = linearize(quad, state)
        I = inertia_about_cog(quad, state)
        Mbar = np.zeros((4, 4))
        Mbar[0, 0] = quad.total_mass
        Mbar[1:, 1:] = I
        assert np.allclose(Bbar[4:8], np.linalg.solve(Mbar, Qbar), atol=1e-12)
        assert np.allclose(Bbar[:4], 0.0)
        assert np.allclose(Bbar[8:], 0.0)


class TestSolveLqi:
    def test_scalar_double_integrator_analytic_gain(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0], [1.0]])
        K, P, res = solve_lqi(A, B, np.eye(2), np.array([[1.0]]))
        assert np.allclose(K, [[1.0, np.sqrt(3.0)]], atol=1e-6)
        assert res < 1e-8

    def test_bundled_robot_50_configs(self, quad):
        rng = np.random.default_rng(71)
        W1 = np.eye(12)
        W2 = np.diag([20.0, 30.0, 90.0, 12.8])
        for _ in range(50):
            state = random_state(quad, rng, attitude_scale=0.05)
            Abar, Bbar, _, _ = linearize(quad, state)
            K, P, res = solve_lqi(Abar, Bbar, W1, W2)
            assert res < 1e-8 * max(1.0, np.linalg.norm(P))
            eig = np.linalg.eigvals(Abar - Bbar @ K)
            assert np.max(eig.real) < 0.0

    def test_heavier_input_weight_shrinks_gain(self, quad):
        Abar, Bbar, _, _ = linearize(quad, straight_state(quad))
        K1, _, _ = solve_lqi(Abar, Bbar, np.eye(12), np.eye(4))
        K2, _, _ = solve_lqi(Abar, Bbar, np.eye(12), 10.0 * np.eye(4))
        assert np.linalg.norm(K2) < np.linalg.norm(K1)

    def test_non_stabilizable_rejected(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0]])
        B = np.array([[0.0], [0.0]])
        with pytest.raises(DesignError):
            solve_lqi(A, B, np.eye(2), np.array([[1.0]]))


class TestFlightThrust:
    def test_zero_state_zero_thrust(self, quad):
        state = straight_state(quad)
        ctrl = AltitudeAttitudeLqi(quad, FlightParams(), state)
        lam, sat = flight_thrust(
            ctrl.design, quad, state, np.zeros(12), np.full(4, -50.0), np.full(4, 50.0)
        )
        assert np.allclose(lam, 0.0, atol=1e-12)
        assert not sat

    def test_pure_z_error_equalish_thrust(self, quad):
        from rdmperch.flight import LqiWeights

        state = straight_state(quad)
        # symmetry needs a rotor-symmetric input weight
        params = FlightParams(weights=LqiWeights(W2=np.diag([20.0] * 4)))
        ctrl = AltitudeAttitudeLqi(quad, params, state)
        x = np.zeros(12)
        x[0] = -0.1  # below target altitude
        lam, _ = flight_thrust(ctrl.design, quad, state, x, np.full(4, -50.0), np.full(4, 50.0))
        assert np.all(lam > 0.0)
        # y-symmetric pairs must match
        assert lam[0] == pytest.approx(lam[1], rel=1e-9)
        assert lam[2] == pytest.approx(lam[3], rel=1e-9)

    def test_gyro_compensation_residual(self, quad):
        rng = np.random.default_rng(73)
        for _ in range(10):
            state = random_state(quad, rng, attitude_scale=0.1)
            state.omega = rng.normal(scale=1.0, size=3)
            A = build_allocation(quad, state, horizontal=True)
            Qbar = reduced_allocation(A)
            lam = gyro_compensation(quad, state, Qbar)
            I = inertia_about_cog(quad, state)
            target = np.concatenate([[0.0], np.cross(state.omega, I @ state.omega)])
            assert np.allclose(Qbar @ lam, target, atol=1e-9)

    def test_error_feedback_shift_invariance(self, quad):
        state = straight_state(quad)
        ctrl = AltitudeAttitudeLqi(quad, FlightParams(), state)
        target = TrackingTarget(p=np.array([0.0, 0.0, 1.0]))
        lam1 = ctrl.update(state, target, (0.0, 0.0), 0.025)
        shifted = straight_state(quad)
        shifted.p = shifted.p + np.array([0.0, 0.0, 5.0])
        ctrl2 = AltitudeAttitudeLqi(quad, FlightParams(), shifted)
        target2 = TrackingTarget(p=np.array([0.0, 0.0, 6.0]))
        lam2 = ctrl2.update(shifted, target2, (0.0, 0.0), 0.025)
        assert np.allclose(lam1, lam2, atol=1e-9)

    def test_gain_rescheduling_threshold(self, quad):
        state = straight_state(quad)
        ctrl = AltitudeAttitudeLqi(quad, FlightParams(), state)
        near = straight_state(quad)
        near.q = near.q + 0.04
        assert not ctrl.maybe_reschedule(near)
        far = straight_state(quad)
        far.q = far.q + 0.06
        assert ctrl.maybe_reschedule(far)

    def test_prime_hover_balances_gravity(self, quad):
        state = straight_state(quad)
        ctrl = AltitudeAttitudeLqi(quad, FlightParams(), state)
        ctrl.prime_hover(state)
        target = TrackingTarget(p=np.zeros(3))
        lam = ctrl.update(state, target, (0.0, 0.0), 1e-9)
        Qbar = ctrl.design.Qbar
        w = Qbar @ lam
        assert w[0] == pytest.approx(quad.total_mass * 9.81, rel=1e-6)
        assert np.allclose(w[1:], 0.0, atol=1e-6)


class TestPositionPid:
    def test_zero_error_zero_output(self):
        pid = PositionPid(PositionGains())
        out = pid.update(np.zeros(2), np.zeros(2), 0.025)
        assert np.allclose(out, 0.0)

    def test_first_step_proportional(self):
        pid = PositionPid(PositionGains())
        dt = 1e-9
        out = pid.update(np.array([1.0, 0.0]), np.zeros(2), dt)
        assert out[0] == pytest.approx(4.6, abs=1e-6)

    def test_integral_clamped(self):
        pid = PositionPid(PositionGains())
        for _ in range(10000):
            out = pid.update(np.array([1.0, 1.0]), np.zeros(2), 0.025)
        g = PositionGains()
        bound = g.k_p[0] + g.k_i[0] * g.integral_clamp
        assert abs(out[0]) <= bound + 1e-9


class TestAttitudeAllocation:
    def test_zero_roll_gain(self):
        phi_d, theta_d = desired_attitude(np.array([1.0, 2.0]), 0.3, 0.0, 1.0)
        assert phi_d == 0.0

    def test_pitch_formula(self):
        phi_d, theta_d = desired_attitude(np.array([0.981, 0.0]), 0.0, 0.0, 1.0, g=9.81)
        assert theta_d == pytest.approx(0.1, abs=1e-12)

    def test_yaw_quarter_turn_swaps_roles(self):
        a = np.array([1.3, 0.0])
        _, th0 = desired_attitude(a, 0.0, 0.0, 1.0)
        _, th90 = desired_attitude(np.array([0.0, 1.3]), np.pi / 2, 0.0, 1.0)
        assert th0 == pytest.approx(th90, abs=1e-12)

    def test_vectoring_hover_level(self, quad):
        state = straight_state(quad)
        angles = vectoring_angles(quad, state, np.zeros(2), 0.0, PositionGains())
        for alpha, beta in angles:
            assert alpha == pytest.approx(0.0, abs=1e-12)
            assert beta == pytest.approx(0.0, abs=1e-12)

    def test_vectoring_full_g_forward(self, quad):
        state = straight_state(quad)
        gains = PositionGains(k_theta=(1.0, 0.0), k_phi=(0.0, 0.0))
        angles = vectoring_angles(quad, state, np.array([9.81, 0.0]), 0.0, gains)
        alpha, beta = angles[0]
        assert alpha == pytest.approx(0.0, abs=1e-12)
        assert beta == pytest.approx(np.pi / 4, abs=1e-12)

    def test_zero_gain_unit_stays_level(self, quad):
        state = straight_state(quad)
        angles = vectoring_angles(quad, state, np.array([3.0, -2.0]), 0.4, PositionGains())
        alpha2, beta2 = angles[1]  # arm unit has zero gains
        assert alpha2 == pytest.approx(0.0, abs=1e-12)
        assert beta2 == pytest.approx(0.0, abs=1e-12)

    def test_vectoring_tilt_matches_direction(self, quad):
        # commanded +y acceleration: foot-unit thrust direction gains +y
        from rdmperch.geometry import rot_x, rot_y

        state = straight_state(quad)
        gains = PositionGains()
        angles = vectoring_angles(quad, state, np.array([0.0, 2.0]), 0.0, gains)
        alpha, beta = angles[0]
        u = rot_x(alpha) @ rot_y(beta) @ np.array([0.0, 0.0, 1.0])
        assert u[1] > 0.0
