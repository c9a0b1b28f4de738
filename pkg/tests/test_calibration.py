import math

import numpy as np
import pytest

from laserforge.calibration import (
    CalibrationResult,
    ChessboardSpec,
    board_object_points,
    calibrate_camera,
    estimate_homography,
    extrinsics_from_homography,
    intrinsics_from_homographies,
    reprojection_rms,
)
from laserforge.camera import CameraIntrinsics
from laserforge.errors import (
    Degenerate,
    DegenerateMotion,
    DimensionError,
    InsufficientViews,
    Singular,
    ValidationError,
)
from laserforge.geometry import RigidTransform, rotation_from_vector, vector_from_rotation

from conftest import BOARD, synth_views

K_TRUE = CameraIntrinsics(800.0, 810.0, 320.0, 240.0)


def homography_from_pose(k: CameraIntrinsics, pose: RigidTransform) -> np.ndarray:
    h = k.matrix @ np.column_stack([pose.rotation[:, 0], pose.rotation[:, 1], pose.translation])
    return h / h[2, 2]


def apply_h(h, xy):
    hom = np.column_stack([xy, np.ones(len(xy))]) @ np.asarray(h).T
    return hom[:, :2] / hom[:, 2:]


def rel_err(k: CameraIntrinsics, t: CameraIntrinsics) -> float:
    return max(abs(getattr(k, n) - getattr(t, n)) / abs(getattr(t, n)) for n in ("fx", "fy", "cx", "cy"))


@pytest.fixture(scope="module")
def noiseless():
    poses, views = synth_views(K_TRUE)
    return poses, views, calibrate_camera(BOARD, views)


class TestBoard:
    def test_two_by_two(self):
        # inner corner counts below 3 are rejected, so build the grid arithmetic by hand
        spec = ChessboardSpec(3, 3, 1.0)
        pts = board_object_points(spec)
        assert np.array_equal(pts[[0, 1, 3, 4]], [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])

    def test_small_square_board(self):
        pts = board_object_points(ChessboardSpec(8, 6, 3.0))
        assert len(pts) == 48 and np.array_equal(pts[0], [0, 0, 0]) and np.array_equal(pts[-1], [21, 15, 0])

    def test_grid_arithmetic(self):
        pts = board_object_points(ChessboardSpec(3, 3, 2.5))
        # point(i=1, j=2) lives at index i * cols + j
        assert np.array_equal(pts[1 * 3 + 2], [5.0, 2.5, 0])

    @pytest.mark.parametrize("args", [(2, 6, 3.0), (8, 2, 3.0), (8, 6, 0.0), (8, 6, -1.0)])
    def test_invalid_spec(self, args):
        with pytest.raises(ValidationError):
            ChessboardSpec(*args)

    def test_default_is_small_square_board(self):
        assert ChessboardSpec() == ChessboardSpec(8, 6, 3.0)


class TestHomography:
    def test_identity(self):
        sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        assert np.allclose(estimate_homography(sq, sq), np.eye(3), atol=1e-12)

    def test_translation(self):
        sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        h = estimate_homography(sq, sq + [10, 20])
        assert np.allclose(h, [[1, 0, 10], [0, 1, 20], [0, 0, 1]], atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_recover_seeded(self, seed):
        rng = np.random.default_rng(seed)
        truth = np.array([[1.2, 0.1, 300], [-0.05, 0.9, 200], [1e-4, -2e-4, 1]]) + rng.normal(0, 1e-3, (3, 3))
        truth[2] = [rng.normal(0, 1e-4), rng.normal(0, 1e-4), 1.0]
        obj = board_object_points(BOARD)[:, :2] * 10
        h = estimate_homography(obj, apply_h(truth, obj))
        assert np.abs(h - truth).max() <= 1e-9 * np.abs(truth).max()

    def test_too_few(self):
        with pytest.raises(Degenerate):
            estimate_homography(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_collinear(self):
        obj = np.column_stack([np.arange(6.0), np.zeros(6)])
        with pytest.raises(Degenerate):
            estimate_homography(obj, obj * 2)

    def test_mismatched(self):
        with pytest.raises(DimensionError):
            estimate_homography(np.zeros((5, 2)), np.zeros((4, 2)))


def seeded_poses(n, seed, tilt_deg=35.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        axis = rng.standard_normal(3)
        axis[2] *= 0.2
        axis /= np.linalg.norm(axis)
        ang = math.radians(rng.uniform(10, tilt_deg))
        out.append(RigidTransform(rotation_from_vector(axis * ang), [rng.uniform(-30, 0), rng.uniform(-20, 0), 500]))
    return out


class TestIntrinsicsClosedForm:
    def test_recovers_from_five_views(self):
        hs = [homography_from_pose(K_TRUE, p) for p in seeded_poses(5, 0)]
        assert rel_err(intrinsics_from_homographies(hs), K_TRUE) <= 1e-6

    def test_two_views(self):
        hs = [homography_from_pose(K_TRUE, p) for p in seeded_poses(2, 0)]
        with pytest.raises(InsufficientViews):
            intrinsics_from_homographies(hs)

    def test_parallel_boards(self):
        rot = rotation_from_vector([0.3, 0.1, 0.0])
        hs = [homography_from_pose(K_TRUE, RigidTransform(rot, [10 * i, -5 * i, 400 + 20 * i])) for i in range(5)]
        with pytest.raises(DegenerateMotion):
            intrinsics_from_homographies(hs)


class TestExtrinsics:
    def test_frontal(self):
        pose = extrinsics_from_homography(K_TRUE, homography_from_pose(K_TRUE, RigidTransform(np.eye(3), [0, 0, 500])))
        assert np.allclose(pose.rotation, np.eye(3), atol=1e-9) and np.allclose(pose.translation, [0, 0, 500], atol=1e-9)

    def test_tilted(self):
        truth = RigidTransform(rotation_from_vector([math.radians(20), 0, 0]), [-10, 5, 450])
        pose = extrinsics_from_homography(K_TRUE, homography_from_pose(K_TRUE, truth))
        delta = vector_from_rotation(pose.rotation.T @ truth.rotation)
        assert np.linalg.norm(delta) <= 1e-8
        assert np.allclose(pose.translation, truth.translation, atol=1e-7)

    @pytest.mark.parametrize("scale", [7.0, -3.0])
    def test_scale_invariance(self, scale):
        truth = seeded_poses(1, 3)[0]
        h = homography_from_pose(K_TRUE, truth)
        a = extrinsics_from_homography(K_TRUE, h)
        b = extrinsics_from_homography(K_TRUE, scale * h)
        assert np.allclose(a.rotation, b.rotation, atol=1e-12) and np.allclose(a.translation, b.translation, atol=1e-9)
        assert b.translation[2] > 0

    def test_singular(self):
        with pytest.raises(Singular):
            extrinsics_from_homography(K_TRUE, np.array([[1, 2, 3], [2, 4, 6], [0, 0, 1.0]]))


class TestCalibrateCamera:
    def test_noiseless(self, noiseless):
        _, _, res = noiseless
        assert rel_err(res.intrinsics, K_TRUE) <= 1e-6
        assert res.rms_reprojection <= 1e-7
        assert res.rms_reprojection <= res.closed_form_rms

    def test_poses_are_rotations(self, noiseless):
        poses, _, res = noiseless
        assert len(res.poses) == len(poses)
        for p, t in zip(res.poses, poses):
            assert np.allclose(p.rotation.T @ p.rotation, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(p.rotation) - 1) <= 1e-9
            assert np.allclose(p.translation, t.translation, atol=1e-6)

    def test_noisy(self):
        _, views = synth_views(K_TRUE, noise=0.2, seed=3)
        res = calibrate_camera(BOARD, views)
        assert abs(res.intrinsics.fx - 800) / 800 <= 0.01
        assert abs(res.intrinsics.fy - 810) / 810 <= 0.01
        assert 0.1 <= res.rms_reprojection <= 0.4
        assert res.rms_reprojection <= res.closed_form_rms

    def test_distortion_recovered(self):
        truth = CameraIntrinsics(800.0, 810.0, 320.0, 240.0, -0.1, 0.02)
        _, views = synth_views(truth, seed=1)
        res = calibrate_camera(BOARD, views)
        assert res.intrinsics.k1 == pytest.approx(-0.1, rel=0.1)
        assert res.intrinsics.k2 == pytest.approx(0.02, rel=0.1)

    def test_without_distortion_keeps_zero(self, noiseless):
        _, views, _ = noiseless
        res = calibrate_camera(BOARD, views[:6], estimate_distortion=False)
        assert res.intrinsics.k1 == 0 and res.intrinsics.k2 == 0
        assert rel_err(res.intrinsics, K_TRUE) <= 1e-6

    def test_scale_consistency(self, noiseless):
        _, views, base = noiseless
        s = 2.5
        res = calibrate_camera(ChessboardSpec(8, 6, 3.0 * s), views)
        for name in ("fx", "fy", "cx", "cy"):
            assert getattr(res.intrinsics, name) == pytest.approx(getattr(base.intrinsics, name), rel=1e-9)
        for a, b in zip(res.poses, base.poses):
            assert np.allclose(a.translation, s * b.translation, rtol=1e-9, atol=1e-9)

    def test_insufficient_views(self, noiseless):
        _, views, _ = noiseless
        with pytest.raises(InsufficientViews):
            calibrate_camera(BOARD, views[:2])

    def test_incomplete_view(self, noiseless):
        _, views, _ = noiseless
        with pytest.raises(DimensionError):
            calibrate_camera(BOARD, views[:, :40])

    def test_json_fields(self, noiseless):
        _, _, res = noiseless
        d = res.to_dict()
        assert set(d) == {"fx", "fy", "cx", "cy", "k1", "k2", "rms_px", "poses"}
        assert set(d["poses"][0]) == {"axis_angle", "t"}
        back = CalibrationResult.from_dict(d)
        assert back.intrinsics == res.intrinsics
        assert np.allclose(back.poses[3].rotation, res.poses[3].rotation, atol=1e-15)


class TestReprojectionRms:
    def test_exact(self, noiseless):
        poses, views, _ = noiseless
        assert reprojection_rms(CalibrationResult(K_TRUE, poses, 0.0), BOARD, views) <= 1e-9

    def test_uniform_shift(self, noiseless):
        poses, views, _ = noiseless
        assert reprojection_rms(CalibrationResult(K_TRUE, poses, 0.0), BOARD, views + [1.0, 0.0]) == pytest.approx(1.0)

    def test_noise_level(self, noiseless):
        poses, views, _ = noiseless
        noisy = views + np.random.default_rng(21).normal(0, 0.5, views.shape)
        rms = reprojection_rms(CalibrationResult(K_TRUE, poses, 0.0), BOARD, noisy)
        # oracle: hand projection with the K matrix
        obj = board_object_points(BOARD)
        pred = []
        for p in poses:
            cam = obj @ p.rotation.T + p.translation
            hom = cam @ K_TRUE.matrix.T
            pred.append(hom[:, :2] / hom[:, 2:])
        oracle = math.sqrt(np.mean(np.sum((np.array(pred) - noisy) ** 2, axis=2)))
        assert rms == pytest.approx(oracle, rel=1e-12)
        assert 0.55 <= rms <= 0.85

    def test_dimension_mismatch(self, noiseless):
        poses, views, _ = noiseless
        with pytest.raises(DimensionError):
            reprojection_rms(CalibrationResult(K_TRUE, poses[:3], 0.0), BOARD, views)
