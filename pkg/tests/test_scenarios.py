"""Scenario generators: analytic profiles, frame attachment, gridding."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import rotation_2d
from poltrans import PointSet
from poltrans.scenarios import (
    CANONICAL_GOAL,
    CANONICAL_START,
    SURFACE_PROFILES,
    FrameScenario,
    Pose,
    SurfaceScenario,
    frame_pairing,
    gridify_pointcloud,
    load_scenario,
    make_frame_scenario,
    make_surface_scenario,
    random_frame_scenario,
    save_scenario,
    surface_map,
)


class TestSurfaceScenarios:
    def test_flat_profile_is_the_identity(self):
        scenario = make_surface_scenario("flat", seed=1)
        assert_array_equal(
            scenario.keypoints.source.points, scenario.keypoints.target.points
        )
        assert_array_equal(
            scenario.demonstration.positions, scenario.reference.positions
        )

    def test_tilt_rotates_about_the_baseline_start(self):
        scenario = make_surface_scenario("tilt", seed=2)
        rot = rotation_2d(scenario.params["angle"])
        expected = scenario.keypoints.source.points @ rot.T
        assert_allclose(scenario.keypoints.target.points, expected, atol=1e-15)

    def test_sine_ordinates_evaluated_pointwise(self):
        scenario = make_surface_scenario("sine", seed=3)
        a = scenario.params["amplitude"]
        f = scenario.params["frequency"]
        xs = scenario.keypoints.source.points[:, 0]
        target = scenario.keypoints.target.points
        assert_allclose(target[:, 0], xs, atol=0)
        assert_allclose(target[:, 1], a * np.sin(2 * np.pi * f * xs), atol=1e-15)

    def test_step_profile_formula(self):
        scenario = make_surface_scenario("step", seed=4)
        h = scenario.params["height"]
        pos = scenario.params["position"]
        w = scenario.params["width"]
        xs = scenario.keypoints.source.points[:, 0]
        expected = 0.5 * h * (1.0 + np.tanh((xs - pos) / w))
        assert_allclose(scenario.keypoints.target.points[:, 1], expected, atol=1e-15)

    def test_composite_is_sine_then_rotation(self):
        scenario = make_surface_scenario("composite", seed=5)
        src = scenario.keypoints.source.points
        bumped = surface_map("sine", scenario.params)(src)
        expected = bumped @ rotation_2d(scenario.params["angle"]).T
        assert_allclose(scenario.keypoints.target.points, expected, atol=1e-15)

    def test_source_keypoints_live_on_the_baseline(self):
        scenario = make_surface_scenario("sine", n_keypoints=17, seed=6)
        src = scenario.keypoints.source.points
        assert src.shape == (17, 2)
        assert np.all(src[:, 1] == 0.0)
        assert np.all((src[:, 0] >= 0.0) & (src[:, 0] <= 1.0))
        assert np.all(np.diff(src[:, 0]) >= 0.0)

    def test_demonstration_loop_hits_its_waypoints(self):
        scenario = make_surface_scenario("flat", seed=0)
        demo = scenario.demonstration
        assert demo.m == 200
        assert_array_equal(demo.times, np.arange(200) / 200)
        assert_allclose(demo.positions[0], [0.0, 0.3], atol=0)
        assert_allclose(demo.positions[30], [0.0, 0.0], atol=1e-15)  # t = 0.15
        assert_allclose(demo.positions[120], [1.0, 0.0], atol=1e-15)  # t = 0.6
        assert_allclose(demo.positions[150], [1.0, 0.3], atol=1e-15)  # t = 0.75

    def test_reference_is_the_mapped_demonstration(self):
        scenario = make_surface_scenario("sine", seed=7)
        mapping = surface_map("sine", scenario.params)
        assert_allclose(
            scenario.reference.positions,
            mapping(scenario.demonstration.positions),
            atol=0,
        )

    def test_param_overrides(self):
        scenario = make_surface_scenario("sine", seed=8, params={"amplitude": 0.2})
        assert scenario.params["amplitude"] == 0.2
        xs = scenario.keypoints.source.points[:, 0]
        assert_allclose(
            scenario.keypoints.target.points[:, 1],
            0.2 * np.sin(2 * np.pi * scenario.params["frequency"] * xs),
            atol=1e-15,
        )

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown profile"):
            make_surface_scenario("bumpy")
        with pytest.raises(ValueError, match="two keypoints"):
            make_surface_scenario("flat", n_keypoints=1)

    def test_deterministic_and_name(self):
        a = make_surface_scenario("step", n_keypoints=9, seed=11)
        b = make_surface_scenario("step", n_keypoints=9, seed=11)
        assert a.name == "surface-step-11"
        assert_array_equal(a.keypoints.source.points, b.keypoints.source.points)
        assert_array_equal(a.keypoints.target.points, b.keypoints.target.points)

    def test_every_profile_generates(self):
        for profile in SURFACE_PROFILES:
            scenario = make_surface_scenario(profile, seed=0)
            assert np.isfinite(scenario.keypoints.target.points).all()


class TestFrameScenarios:
    def test_canonical_poses_give_identity_pairing(self):
        scenario = make_frame_scenario(CANONICAL_START, CANONICAL_GOAL)
        assert_allclose(
            scenario.keypoints.source.points, scenario.keypoints.target.points, atol=0
        )
        assert_allclose(
            scenario.demonstration.positions, scenario.reference.positions, atol=0
        )

    def test_pure_translation_moves_keypoints_exactly(self):
        shift = np.array([0.4, -0.3])
        start = Pose(xy=tuple(CANONICAL_START.position + shift), heading=CANONICAL_START.heading)
        goal = Pose(xy=tuple(CANONICAL_GOAL.position + shift), heading=CANONICAL_GOAL.heading)
        scenario = make_frame_scenario(start, goal, keypoints_per_frame=4)
        assert_allclose(
            scenario.keypoints.target.points,
            scenario.keypoints.source.points + shift,
            atol=1e-12,
        )

    def test_rotated_goal_frame_matches_manual_rotation(self):
        extra = np.pi / 4
        goal = Pose(xy=CANONICAL_GOAL.xy, heading=CANONICAL_GOAL.heading + extra)
        scenario = make_frame_scenario(CANONICAL_START, goal, keypoints_per_frame=5)
        src = scenario.keypoints.source.points
        tgt = scenario.keypoints.target.points
        # start-frame group untouched
        assert_allclose(tgt[:5], src[:5], atol=1e-12)
        # goal-frame group rotates about the goal origin
        rot = rotation_2d(extra)
        expected = CANONICAL_GOAL.position + (src[5:] - CANONICAL_GOAL.position) @ rot.T
        assert_allclose(tgt[5:], expected, atol=1e-12)

    def test_keypoint_layout(self):
        scenario = make_frame_scenario(CANONICAL_START, CANONICAL_GOAL, keypoints_per_frame=3)
        src = scenario.keypoints.source.points
        assert scenario.keypoints.n == 6
        assert_allclose(src[0], CANONICAL_START.position, atol=0)
        assert_allclose(src[3], CANONICAL_GOAL.position, atol=0)

    def test_curve_shape_and_contact_clearance(self):
        scenario = random_frame_scenario(seed=42)
        curve = scenario.reference
        goal = scenario.goal_pose
        assert curve.m == 200
        assert_allclose(curve.positions[0], scenario.start_pose.position, atol=1e-12)
        contact = goal.position - 0.06 * goal.direction
        assert_allclose(curve.positions[-1], contact, atol=1e-12)
        # docking tail runs along the goal heading
        tail = np.diff(curve.positions[-20:], axis=0)
        tail_dirs = tail / np.linalg.norm(tail, axis=1)[:, None]
        assert_allclose(tail_dirs, np.tile(goal.direction, (19, 1)), atol=1e-9)

    def test_poses_stable_across_keypoint_counts(self):
        a = random_frame_scenario(seed=9, keypoints_per_frame=2)
        b = random_frame_scenario(seed=9, keypoints_per_frame=5)
        assert_array_equal(a.start_pose.position, b.start_pose.position)
        assert a.start_pose.heading == b.start_pose.heading
        assert_array_equal(a.goal_pose.position, b.goal_pose.position)
        assert a.goal_pose.heading == b.goal_pose.heading
        assert a.name == "frame-9"

    def test_coincident_frames_rejected(self):
        pose = Pose(xy=(0.2, 0.2), heading=0.0)
        with pytest.raises(ValueError, match="coincide"):
            make_frame_scenario(pose, pose)

    def test_frame_pairing_semantics(self):
        train = random_frame_scenario(seed=1)
        test = random_frame_scenario(seed=2)
        pairing = frame_pairing(train, test)
        assert_array_equal(pairing.source.points, train.keypoints.target.points)
        assert_array_equal(pairing.target.points, test.keypoints.target.points)
        with pytest.raises(ValueError, match="keypoints-per-frame"):
            frame_pairing(train, random_frame_scenario(seed=2, keypoints_per_frame=2))


class TestScenarioSerialization:
    def test_surface_round_trip_is_bitwise_stable(self, tmp_path):
        scenario = make_surface_scenario("composite", seed=13)
        first = tmp_path / "a.json"
        save_scenario(scenario, first)
        loaded = load_scenario(first)
        assert isinstance(loaded, SurfaceScenario)
        second = tmp_path / "b.json"
        save_scenario(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert_array_equal(
            loaded.keypoints.target.points, scenario.keypoints.target.points
        )

    def test_frame_round_trip_is_bitwise_stable(self, tmp_path):
        scenario = random_frame_scenario(seed=21)
        first = tmp_path / "a.json"
        save_scenario(scenario, first)
        loaded = load_scenario(first)
        assert isinstance(loaded, FrameScenario)
        second = tmp_path / "b.json"
        save_scenario(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert_array_equal(loaded.reference.positions, scenario.reference.positions)

    def test_repeated_generation_serializes_identically(self, tmp_path):
        for idx, path in enumerate(("x.json", "y.json")):
            save_scenario(make_surface_scenario("sine", seed=3), tmp_path / path)
        assert (tmp_path / "x.json").read_bytes() == (tmp_path / "y.json").read_bytes()

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"kind": "volume"}')
        with pytest.raises(ValueError, match="unknown scenario kind"):
            load_scenario(path)


UNIT_CORNERS = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


class TestGridify:
    def test_planar_cloud_stays_planar(self):
        rng = np.random.default_rng(0)
        xy = rng.uniform(0.0, 1.0, (300, 2))
        cloud = PointSet(np.column_stack([xy, np.full(300, 0.7)]))
        grid = gridify_pointcloud(cloud, (6, 5), UNIT_CORNERS)
        assert grid.n == 30
        assert_allclose(grid.points[:, 2], 0.7, atol=1e-12)

    def test_two_by_two_grid_equals_the_corners(self):
        cloud = PointSet(
            [
                [0.0, 0.0, 0.1],
                [1.0, 0.0, 0.2],
                [1.0, 1.0, 0.3],
                [0.0, 1.0, 0.4],
            ]
        )
        grid = gridify_pointcloud(cloud, (2, 2), UNIT_CORNERS, smoothing_window=1)
        # row-major in v then u: (u0,v0), (u1,v0), (u0,v1), (u1,v1)
        assert_allclose(grid.points[0], [0.0, 0.0, 0.1], atol=1e-12)
        assert_allclose(grid.points[1], [1.0, 0.0, 0.2], atol=1e-12)
        assert_allclose(grid.points[2], [0.0, 1.0, 0.4], atol=1e-12)
        assert_allclose(grid.points[3], [1.0, 1.0, 0.3], atol=1e-12)

    def test_sloped_cloud_matches_plane_at_nodes(self):
        rng = np.random.default_rng(1)
        xy = rng.uniform(0.0, 1.0, (4000, 2))
        cloud = PointSet(np.column_stack([xy, xy[:, 0]]))  # z = x
        cell = 1.0 / 7.0
        for window in (1, 3):
            grid = gridify_pointcloud(cloud, (8, 8), UNIT_CORNERS, smoothing_window=window)
            assert np.abs(grid.points[:, 2] - grid.points[:, 0]).max() < 0.6 * cell

    def test_row_major_layout_and_bilinear_xy(self):
        corners = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]
        cloud = PointSet(
            np.column_stack([np.random.default_rng(2).uniform(0, 1, (50, 2)) * [2, 1], np.zeros(50)])
        )
        grid = gridify_pointcloud(cloud, (3, 2), corners)
        assert grid.n == 6
        xy = grid.points[:, :2]
        assert_allclose(xy[0], [0.0, 0.0], atol=0)
        assert_allclose(xy[1], [1.0, 0.0], atol=1e-15)
        assert_allclose(xy[2], [2.0, 0.0], atol=0)
        assert_allclose(xy[3], [0.0, 1.0], atol=0)
        assert_allclose(xy[5], [2.0, 1.0], atol=0)

    def test_empty_cells_filled_from_neighbors(self):
        # all the data sits near the left edge; right-edge nodes inherit z
        xy = np.column_stack(
            [np.full(40, 0.05), np.linspace(0.0, 1.0, 40)]
        )
        cloud = PointSet(np.column_stack([xy, np.full(40, 2.5)]))
        grid = gridify_pointcloud(cloud, (4, 4), UNIT_CORNERS)
        assert np.isfinite(grid.points[:, 2]).all()
        assert_allclose(grid.points[:, 2], 2.5, atol=1e-12)

    def test_validation(self):
        flat_cloud = PointSet([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError, match="3D"):
            gridify_pointcloud(flat_cloud, (3, 3), UNIT_CORNERS)
        small = PointSet([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        with pytest.raises(ValueError, match="four input points"):
            gridify_pointcloud(small, (3, 3), UNIT_CORNERS)
        ok = PointSet(np.column_stack([np.random.default_rng(3).uniform(0, 1, (9, 2)), np.ones(9)]))
        with pytest.raises(ValueError, match="at least 2x2"):
            gridify_pointcloud(ok, (1, 3), UNIT_CORNERS)
        with pytest.raises(ValueError, match="four 2D vectors"):
            gridify_pointcloud(ok, (3, 3), [[0.0, 0.0], [1.0, 0.0]])
        degenerate = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]
        with pytest.raises(ValueError, match="degenerate"):
            gridify_pointcloud(ok, (3, 3), degenerate)
        with pytest.raises(ValueError, match="smoothing window"):
            gridify_pointcloud(ok, (3, 3), UNIT_CORNERS, smoothing_window=0)

    def test_far_points_are_ignored_but_all_far_is_an_error(self):
        near = np.column_stack(
            [np.random.default_rng(4).uniform(0, 1, (30, 2)), np.zeros(30)]
        )
        outlier = np.array([[50.0, 50.0, 9.9]])
        grid = gridify_pointcloud(PointSet(np.vstack([near, outlier])), (3, 3), UNIT_CORNERS)
        assert np.abs(grid.points[:, 2]).max() < 1e-12  # outlier never aggregated
        all_far = PointSet(np.column_stack([np.full((5, 2), 99.0), np.ones(5)]))
        with pytest.raises(ValueError, match="no input points"):
            gridify_pointcloud(all_far, (3, 3), UNIT_CORNERS)
