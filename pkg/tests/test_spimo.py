import numpy as np
import pytest

from sweepdepth.core.adaquant import QuantizationConfig, quantization_levels
from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose, plane_project
from sweepdepth.core.errors import ConfigError, DegenerateError, NumericalError
from sweepdepth.core.spimo import (DEFAULT_OFFSETS, OffsetSensitiveEstimator, build_depth_volume, compute_mask,
                                   dispersion, offsets_from_lists, project_mask)
from sweepdepth.core.synth import occlusion_mask, synthesize_view


def _volume(*channels):
    return np.array(channels, dtype=np.float64).reshape(len(channels), 1, 1)


def test_dispersed_pixel_is_marked_moving():
    volume = _volume(10.0, 10.0, 10.0, 20.0)
    assert dispersion(volume)[0, 0] == pytest.approx(0.16)
    assert compute_mask(volume, 0.03)[0, 0] == 0.0


def test_consistent_pixel_is_static():
    volume = _volume(10.0, 10.1, 9.9, 10.0)
    assert dispersion(volume)[0, 0] == pytest.approx(0.02 / 300.0)
    assert compute_mask(volume, 0.03)[0, 0] == 1.0


def test_dispersion_is_scale_invariant():
    volume = np.random.default_rng(0).uniform(1.0, 5.0, size=(4, 3, 3))
    np.testing.assert_allclose(dispersion(volume * 7.5), dispersion(volume), rtol=1e-12)


def test_larger_gamma_never_removes_static_pixels():
    volume = np.random.default_rng(1).uniform(1.0, 2.0, size=(4, 6, 6))
    strict = compute_mask(volume, 0.01)
    loose = compute_mask(volume, 0.05)
    assert np.all(strict <= loose)


def test_zero_mean_is_degenerate():
    with pytest.raises(DegenerateError, match="degenerate depth"):
        dispersion(np.zeros((4, 2, 2)))


def test_single_channel_is_rejected():
    with pytest.raises(ConfigError):
        dispersion(np.ones((1, 2, 2)))


def test_offset_lists_must_match():
    assert offsets_from_lists([0, 0.5], [0, -0.25]) == [(0.0, 0.0), (0.5, -0.25)]
    with pytest.raises(ConfigError):
        offsets_from_lists([0.0], [0.0, 1.0])


def test_offset_sensitive_region_is_detected():
    region = np.zeros((4, 5))
    region[1:3, 2:4] = 1.0
    estimator = OffsetSensitiveEstimator(base_depth=np.full((4, 5), 5.0), region=region, sensitivity=1.0)
    volume = build_depth_volume(estimator, np.zeros((4, 5, 3)), DEFAULT_OFFSETS, max_workers=1)
    assert volume.shape == (4, 4, 5)
    mask = compute_mask(volume)
    np.testing.assert_array_equal(mask, 1.0 - region)


def test_boosted_disparity_is_appended_as_depth():
    estimator = OffsetSensitiveEstimator(base_depth=np.full((2, 2), 4.0))
    volume = build_depth_volume(estimator, np.zeros((2, 2)), boosted=np.full((2, 2), 0.5))
    assert volume.shape == (5, 2, 2)
    np.testing.assert_allclose(volume[-1], 2.0)
    with pytest.raises(NumericalError):
        build_depth_volume(estimator, np.zeros((2, 2)), boosted=np.zeros((2, 2)))


def test_invalid_estimates_are_rejected():
    estimator = OffsetSensitiveEstimator(base_depth=np.array([[1.0, -1.0]]))
    with pytest.raises(NumericalError):
        build_depth_volume(estimator, np.zeros((1, 2)))
    with pytest.raises(ConfigError):
        build_depth_volume(estimator, np.zeros((1, 2)), offsets=())


def test_project_mask_identity_keeps_mask():
    camera = CameraIntrinsics(fx=8.0, fy=8.0, cx=3.5, cy=2.5, width=8, height=6)
    levels = quantization_levels(QuantizationConfig(levels=5, d_min=0.05, d_max=0.5), np.ones((6, 8))).value
    mask = (np.random.default_rng(2).uniform(size=(6, 8)) > 0.4).astype(np.float64)
    logits = np.random.default_rng(3).normal(size=levels.shape)
    projected = project_mask(mask, logits, levels, RigidPose.identity(), camera, camera)
    np.testing.assert_array_equal(projected, mask)


def test_constructed_volume_separates_movers_from_static_pixels():
    rng = np.random.default_rng(11)
    base = rng.uniform(2.0, 40.0, size=(24, 32))
    moving = np.zeros((24, 32), dtype=bool)
    moving[6:14, 10:22] = True
    # ±1% no fundo, ±20% no objeto móvel
    jitter = rng.uniform(-0.01, 0.01, size=(4, 24, 32))
    jitter[:, moving] = np.array([-0.2, 0.2, -0.2, 0.2])[:, None]
    mask = compute_mask(base * (1.0 + jitter), gamma=0.03)
    assert np.mean(mask[moving] == 0.0) >= 0.99
    assert np.mean(mask[~moving] == 0.0) <= 0.01


def test_all_static_mask_projects_to_occlusion_mask():
    camera = CameraIntrinsics(fx=16.0, fy=16.0, cx=7.5, cy=5.5, width=16, height=12)
    levels = quantization_levels(QuantizationConfig(levels=5, d_min=0.05, d_max=0.4), np.ones((12, 16))).value
    logits = 2.0 * np.random.default_rng(8).normal(size=levels.shape)
    pose = RigidPose.translation(0.5, 0.1)
    projected = project_mask(np.ones((12, 16)), logits, levels, pose, camera, camera)
    expected = occlusion_mask(synthesize_view(np.zeros((12, 16)), logits, levels, pose, camera, camera))
    np.testing.assert_array_equal(projected, expected)


def test_projected_hole_follows_plane_motion():
    camera = CameraIntrinsics(fx=16.0, fy=16.0, cx=7.5, cy=5.5, width=16, height=12)
    levels = np.broadcast_to(np.array([0.1, 0.25, 0.4])[:, None, None], (3, 12, 16)).copy()
    logits = np.zeros((3, 12, 16))
    logits[1] = 30.0
    mask = np.ones((12, 16))
    mask[4:8, 5:9] = 0.0
    pose = RigidPose.translation(0.25)

    projected = project_mask(mask, logits, levels, pose, camera, camera)
    occlusion = occlusion_mask(synthesize_view(np.zeros((12, 16)), logits, levels, pose, camera, camera))
    rows, cols = np.nonzero((projected == 0.0) & (occlusion == 1.0))
    moved, valid = plane_project(np.array([6.5, 5.5]), 0.25, pose, camera, camera)
    assert valid
    assert cols.mean() == pytest.approx(moved[0], abs=1e-9)
    assert rows.mean() == pytest.approx(moved[1], abs=1e-9)
    assert len(rows) == 16


def test_depth_and_inverse_depth_volumes_can_disagree():
    depth = _volume(10.0, 10.0, 10.0, 14.0)
    assert compute_mask(depth, 0.03)[0, 0] == 0.0
    assert compute_mask(1.0 / depth, 0.03)[0, 0] == 1.0
