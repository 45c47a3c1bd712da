"""Expert controller quality and trajectory replay fidelity."""

import math

import numpy as np
import pytest

from rfrlf.envs import LineTrack, PixelTrack
from rfrlf.expertgen import (ExpertTrajectory, centerline_control,
                             pure_pursuit_control, record_expert,
                             trajectory_quality)
from rfrlf.errors import ConfigurationError


class TestPurePursuit:

    def test_straight_road_gives_zero_steer(self):
        env = LineTrack()
        s = env.reset()
        steer, throttle = pure_pursuit_control(s, env.config)
        assert steer == pytest.approx(0.0, abs=1e-12)
        # at reference speed the throttle holds the drag equilibrium
        assert throttle == pytest.approx(0.75, abs=1e-9)

    def test_steering_points_toward_target(self):
        env = LineTrack()
        s = env.reset().copy()
        s[12], s[13] = 1.2, 0.5     # third lookahead point up-left
        steer_left, _ = pure_pursuit_control(s, env.config)
        s[13] = -0.5
        steer_right, _ = pure_pursuit_control(s, env.config)
        assert steer_left > 0 > steer_right
        assert steer_left == pytest.approx(-steer_right, abs=1e-12)

    def test_geometric_formula(self):
        env = LineTrack()
        s = env.reset().copy()
        s[12], s[13] = 0.9, 0.6
        d = math.hypot(0.9, 0.6)
        alpha = math.atan2(0.6, 0.9)
        expect = math.atan(2.0 * env.config.wheelbase * math.sin(alpha) / d)
        steer, _ = pure_pursuit_control(s, env.config)
        assert steer == pytest.approx(expect, abs=1e-12)

    def test_throttle_clipped_to_bins_range(self):
        env = LineTrack()
        s = env.reset().copy()
        s[6] = 5.0     # far above reference speed
        _, throttle = pure_pursuit_control(s, env.config)
        assert throttle == 0.6
        s[6] = -5.0
        _, throttle = pure_pursuit_control(s, env.config)
        assert throttle == 1.0


class TestRecordExpert:

    def test_tracking_quality_gate(self):
        env = LineTrack()
        trajs = record_expert(env, 5, seed=2024)
        q = trajectory_quality(trajs)
        assert q["mean_abs_ey"] < 0.05
        assert q["min_length"] > 100

    def test_deterministic_given_seed(self):
        env = LineTrack()
        a = record_expert(env, 2, seed=5)
        b = record_expert(env, 2, seed=5)
        for ta, tb in zip(a, b):
            assert np.array_equal(ta.states, tb.states)
            assert np.array_equal(ta.poses, tb.poses)

    def test_episodes_differ_across_seeds(self):
        env = LineTrack()
        a = record_expert(env, 1, seed=5)[0]
        b = record_expert(env, 1, seed=6)[0]
        assert not np.array_equal(a.states[0], b.states[0])

    def test_states_and_poses_aligned(self):
        env = LineTrack()
        t = record_expert(env, 1, seed=9)[0]
        assert len(t.states) == len(t.poses)
        assert t.poses.shape[1] == 4

    def test_reset_from_first_pose_reproduces_first_state(self):
        env = LineTrack()
        t = record_expert(env, 3, seed=31)
        for traj in t:
            s0 = env.reset(start=tuple(traj.poses[0]))
            assert np.max(np.abs(s0 - traj.states[0])) < 1e-6

    def test_full_replay_from_first_pose(self):
        # recorded states must be reachable by the dynamics: re-simulate the
        # deterministic controller from the recorded start pose and demand
        # the whole state sequence matches
        env = LineTrack()
        for traj in record_expert(env, 2, seed=77):
            s = env.reset(start=tuple(traj.poses[0]))
            replayed = [s]
            for _ in range(len(traj) - 1):
                res = env.step(pure_pursuit_control(s, env.config))
                s = res.state
                replayed.append(s)
                if res.done:
                    break
            replayed = np.stack(replayed)
            assert replayed.shape == traj.states.shape
            assert np.max(np.abs(replayed - traj.states)) < 1e-6

    def test_pixeltrack_recording(self):
        env = PixelTrack()
        trajs = record_expert(env, 2, seed=8)
        for t in trajs:
            assert t.states.shape[1:] == (3, 24, 32)
            assert t.env_kind == "pixeltrack"
            assert len(t) > 50

    def test_pixel_replay_from_first_pose(self):
        env = PixelTrack()
        traj = record_expert(env, 1, seed=13)[0]
        s = env.reset(start=tuple(traj.poses[0]))
        replayed = [s]
        for _ in range(len(traj) - 1):
            res = env.step(centerline_control(env))
            replayed.append(res.state)
            if res.done:
                break
        replayed = np.stack(replayed)
        assert replayed.shape == traj.states.shape
        assert np.max(np.abs(replayed - traj.states)) < 1e-6

    def test_bad_episode_count(self):
        with pytest.raises(ConfigurationError):
            record_expert(LineTrack(), 0, seed=1)

    def test_quality_requires_trajectories(self):
        with pytest.raises(ConfigurationError):
            trajectory_quality([])
