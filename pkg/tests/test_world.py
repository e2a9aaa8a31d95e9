import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resqsim import kernels
from resqsim.scenario import apply_overrides, default_scenario, validate
from resqsim.world import (
    ActuationInput,
    CasualtyState,
    ContactEvent,
    PhaseId,
    Pose2D,
    RobotState,
    StrapState,
    WorldState,
    friction_force,
    loading_dynamics,
    step,
)

from .reference import fine_step_drag


def make_world(cfg, x=None, y=None, theta=None, v_base=0.0, head_vel=0.0,
               contacted=False, onboard=0.0):
    start = cfg["robot"]["start"]
    c = cfg["casualty"]
    return WorldState(
        time=0.0,
        robot=RobotState(
            pose=Pose2D(
                start["x"] if x is None else x,
                start["y"] if y is None else y,
                start["theta"] if theta is None else theta,
            ),
            v_base=v_base,
            omega=0.0,
            v_belt=0.0,
            strap=StrapState.OPEN,
            bed_angle=cfg["robot"]["bed_angle"],
        ),
        casualty=CasualtyState(
            upper_pos=0.0,
            lower_pos=c["upper_length"],
            head_pos=0.0,
            head_vel=head_vel,
            head_acc=0.0,
            onboard_fraction=onboard,
            m_head=c["m_head"],
            m_upper=c["m_upper"],
            mu_s=c["mu_s"],
            mu_k=c["mu_k"],
        ),
        phase=PhaseId.PoseAdjustment,
        rng_seed=0,
        contacted=contacted,
    )


class TestFrictionForce:
    def test_static_grip_cancels_applied_force(self):
        assert friction_force(44.1, 0.52, 0.45, 3.0, 0.0) == -3.0

    def test_breakaway_goes_kinetic(self):
        # 0.52 * 44.1 = 22.93 N breakaway < 30 N applied
        f = friction_force(44.1, 0.52, 0.45, 30.0, 0.0)
        assert f == pytest.approx(-19.8, abs=0.05)
        assert f == pytest.approx(-0.45 * 44.1)

    def test_zero_normal_load(self):
        assert friction_force(0.0, 0.6, 0.5, 12.0, 0.0) == 0.0
        assert friction_force(0.0, 0.6, 0.5, 12.0, 1.0) == 0.0

    def test_kinetic_opposes_slip(self):
        assert friction_force(10.0, 0.6, 0.5, 0.0, 0.3) == pytest.approx(-5.0)
        assert friction_force(10.0, 0.6, 0.5, 0.0, -0.3) == pytest.approx(5.0)

    def test_negative_normal_rejected(self):
        with pytest.raises(ValueError):
            friction_force(-1.0, 0.5, 0.4, 0.0, 0.0)

    @given(
        n=st.floats(0.0, 100.0),
        mu_k=st.floats(0.05, 1.0),
        extra=st.floats(0.0, 1.0),
        f=st.floats(-50.0, 50.0),
        v=st.floats(-1.0, 1.0),
    )
    def test_reaction_never_exceeds_breakaway(self, n, mu_k, extra, f, v):
        mu_s = mu_k + extra
        r = friction_force(n, mu_s, mu_k, f, v)
        assert abs(r) <= mu_s * n + 1e-12


class TestStep:
    def test_equilibrium_state_only_advances_clock(self, cfg):
        w = make_world(cfg)
        w2, contact = step(w, ActuationInput(0.0, 0.0, 0.0), cfg["sim"]["dt"], cfg)
        assert contact is None
        assert w2.time == pytest.approx(cfg["sim"]["dt"])
        assert w2.robot.pose == w.robot.pose
        assert w2.robot.v_base == 0.0
        assert w2.casualty.head_pos == 0.0
        assert w2.casualty.head_vel == 0.0
        assert w2.casualty.head_acc == 0.0

    def test_unicycle_forward_integration(self, make_cfg):
        cfg = make_cfg(**{"sim.dt": 0.01, "sim.control_rate_hz": 100, "imu.rate_hz": 100})
        w = make_world(cfg, x=-2.0, v_base=0.1)
        w = WorldState(
            time=0.0,
            robot=RobotState(
                pose=Pose2D(-2.0, 0.0, 0.0),
                v_base=0.1, omega=0.0, v_belt=0.0,
                strap=StrapState.OPEN, bed_angle=cfg["robot"]["bed_angle"],
            ),
            casualty=w.casualty, phase=w.phase, rng_seed=0,
        )
        w2, _ = step(w, ActuationInput(0.1, 0.0, 0.0), 0.01, cfg)
        assert w2.robot.pose.x == pytest.approx(-2.0 + 0.001, rel=1e-12)
        assert w2.robot.pose.y == 0.0
        assert w2.robot.pose.theta == 0.0

    def test_contact_event_crossing_time(self, make_cfg):
        # bed edge 0.005 m short of the head, closing at 0.1 m/s, dt = 0.1:
        # crossing happens at t = 0.05 within the step
        cfg = make_cfg(**{"sim.dt": 0.1, "sim.control_rate_hz": 10, "imu.rate_hz": 10})
        bed_off = cfg["robot"]["bed_edge_offset"]
        w = make_world(cfg, x=-bed_off - 0.005, y=0.0, theta=0.0, v_base=0.1)
        w2, contact = step(w, ActuationInput(0.1, 0.0, 0.0), 0.1, cfg)
        assert isinstance(contact, ContactEvent)
        assert contact.t_contact == pytest.approx(0.05, rel=1e-6)
        assert contact.relative_speed == pytest.approx(0.1, rel=1e-9)
        assert w2.contacted

    def test_dt_mismatch_rejected(self, cfg):
        with pytest.raises(ValueError):
            step(make_world(cfg), ActuationInput(0.0, 0.0, 0.0), 0.5, cfg)

    def test_time_is_exact_multiple_of_dt(self, cfg):
        w = make_world(cfg)
        dt = cfg["sim"]["dt"]
        for k in range(1, 50):
            w, _ = step(w, ActuationInput(0.0, 0.0, 0.0), dt, cfg)
            assert w.time == k * dt

    def test_divergence_error_carries_last_state(self, cfg):
        from resqsim.errors import SimulationDiverged

        w = make_world(cfg, v_base=float("nan"))
        with pytest.raises(SimulationDiverged) as exc:
            step(w, ActuationInput(0.0, 0.0, 0.0), cfg["sim"]["dt"], cfg)
        assert exc.value.last_state is w


class TestLoadingDynamics:
    def _casualty(self, cfg, head_vel=0.0, onboard=0.5):
        c = cfg["casualty"]
        return CasualtyState(
            upper_pos=0.0, lower_pos=c["upper_length"], head_pos=0.0,
            head_vel=head_vel, head_acc=0.0, onboard_fraction=onboard,
            m_head=c["m_head"], m_upper=c["m_upper"], mu_s=c["mu_s"], mu_k=c["mu_k"],
        )

    def _robot(self, cfg, v_base=0.0, v_belt=0.0, bed_angle=None):
        return RobotState(
            pose=Pose2D(0.0, 0.0, 0.0), v_base=v_base, omega=0.0, v_belt=v_belt,
            strap=StrapState.OPEN,
            bed_angle=cfg["robot"]["bed_angle"] if bed_angle is None else bed_angle,
        )

    def test_perfect_sync_holds_head_stationary(self, cfg):
        cas = self._casualty(cfg)
        robot = self._robot(cfg, v_base=0.08, v_belt=-0.08)
        for _ in range(2000):
            cas = loading_dynamics(cas, robot, True, cfg["sim"]["dt"])
        assert cas.head_vel == 0.0
        assert cas.head_acc == 0.0
        assert cas.head_pos == 0.0

    def test_sustained_sync_error_drags_head_to_belt_speed(self, cfg):
        # belt surface moving at +0.16 in the world frame
        cas = self._casualty(cfg)
        robot = self._robot(cfg, v_base=0.21, v_belt=-0.05)
        peak = 0.0
        for _ in range(2000):
            cas = loading_dynamics(cas, robot, True, cfg["sim"]["dt"])
            peak = max(peak, abs(cas.head_vel))
        assert peak == pytest.approx(0.16, abs=1e-9)
        assert cas.head_vel == pytest.approx(0.16, abs=1e-9)

    def test_no_contact_no_motion_zero_acceleration(self, cfg):
        cas = self._casualty(cfg, onboard=0.0)
        out = loading_dynamics(cas, self._robot(cfg), False, cfg["sim"]["dt"])
        assert out.head_acc == 0.0
        assert out.head_vel == 0.0

    def test_displacement_matches_fine_step_oracle(self, cfg):
        # 0.05 m/s sync error held for 1 s, then zero; flat bed
        dt = cfg["sim"]["dt"]
        mu_s, mu_k = cfg["casualty"]["mu_s"], cfg["casualty"]["mu_k"]

        cas = self._casualty(cfg)
        robot_on = self._robot(cfg, v_base=0.05, v_belt=0.0, bed_angle=0.0)
        robot_off = self._robot(cfg, v_base=0.0, v_belt=0.0, bed_angle=0.0)
        for k in range(round(1.5 / dt)):
            robot = robot_on if k * dt < 1.0 else robot_off
            cas = loading_dynamics(cas, robot, True, dt)

        ref_pos, _, _ = fine_step_drag(
            lambda t: 0.05 if t < 1.0 else 0.0,
            duration=1.5, mu_s=mu_s, mu_k=mu_k, g=cfg["sim"]["gravity"],
            v_stick=cfg["contact"]["v_stick"], bed_angle=0.0,
        )
        assert cas.head_pos == pytest.approx(ref_pos, rel=0.02)


class TestInvariants:
    @given(v_base=st.floats(-0.5, 0.5))
    @settings(max_examples=25, deadline=None)
    def test_sync_neutrality_any_base_speed(self, v_base):
        cfg = validate(default_scenario())
        c = cfg["casualty"]
        cas = CasualtyState(
            upper_pos=0.0, lower_pos=c["upper_length"], head_pos=0.0,
            head_vel=0.0, head_acc=0.0, onboard_fraction=0.5,
            m_head=c["m_head"], m_upper=c["m_upper"], mu_s=c["mu_s"], mu_k=c["mu_k"],
        )
        robot = RobotState(
            pose=Pose2D(0.0, 0.0, 0.0), v_base=v_base, omega=0.0, v_belt=-v_base,
            strap=StrapState.OPEN, bed_angle=cfg["robot"]["bed_angle"],
        )
        for _ in range(1000):
            cas = loading_dynamics(cas, robot, True, cfg["sim"]["dt"])
            assert abs(cas.head_vel) <= 1e-9

    def test_kinetic_energy_non_increasing_without_actuation(self, cfg):
        w = make_world(cfg, x=-1.5, v_base=0.3, head_vel=0.2)
        m_head = cfg["casualty"]["m_head"]
        dt = cfg["sim"]["dt"]
        prev = 0.5 * 100.0 * w.robot.v_base**2 + 0.5 * m_head * w.casualty.head_vel**2
        for _ in range(2000):
            w, _ = step(w, ActuationInput(0.0, 0.0, 0.0), dt, cfg)
            ke = 0.5 * 100.0 * w.robot.v_base**2 + 0.5 * m_head * w.casualty.head_vel**2
            assert ke <= prev + 1e-15
            prev = ke

    def test_integrator_convergence_under_dt_halving(self, make_cfg):
        from resqsim.harness import TrialConfig, run_trial
        from resqsim.scenario import rough_scenario

        base = validate(rough_scenario())
        displacements = []
        for dt in (0.001, 0.0005):
            cfg = validate(apply_overrides(base, {"sim.dt": dt}))
            res = run_trial(TrialConfig(scenario=cfg, mode="direct", seed=3))
            assert res.status == "done"
            displacements.append(res.report.head_displacement)
        d1, d2 = displacements
        assert abs(d1 - d2) / max(abs(d2), 1e-9) < 0.01

    def test_onboard_fraction_non_decreasing_during_loading(self, cfg, tmp_path):
        from resqsim.harness import TrialConfig, run_trial
        from resqsim.logs import load_trial_log

        res = run_trial(
            TrialConfig(scenario=cfg, mode="direct", seed=5, out_dir=tmp_path, trial_id="t")
        )
        assert res.status == "done"
        log = load_trial_log(tmp_path / "t.jsonl")
        onboard = [rec["onboard"] for rec in log.ticks if rec["phase"] == "Loading"]
        assert len(onboard) > 10
        assert all(b - a >= -1e-12 for a, b in zip(onboard, onboard[1:]))


class TestDomainTypes:
    def test_pose_theta_normalized(self):
        assert Pose2D(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
        assert -math.pi < Pose2D(0, 0, -math.pi).theta <= math.pi

    def test_casualty_invariants_enforced(self):
        with pytest.raises(ValueError):
            CasualtyState(0, 0.7, 0, 0, 0, 0.0, 4.5, 40.0, mu_s=0.3, mu_k=0.4)
        with pytest.raises(ValueError):
            CasualtyState(0, 0.7, 0, 0, 0, 1.5, 4.5, 40.0, mu_s=0.5, mu_k=0.4)
