import numpy as np
import pytest

from sweepdepth.core.adaquant import QuantizationConfig, quantization_levels
from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose, rotation_from_euler, warp_plane
from sweepdepth.core.synth import (INVALID_LOGIT, occlusion_mask, project_probability_volume,
                                   synthesize_view)
from sweepdepth.data.scenes import SceneSpec, relative_pose, render


@pytest.fixture
def camera():
    """Câmera 12×16 usada em todas as fixtures de síntese."""
    return CameraIntrinsics(fx=16.0, fy=16.0, cx=7.5, cy=5.5, width=16, height=12)


@pytest.fixture
def levels():
    """Volume de 7 níveis com β = 1."""
    return quantization_levels(QuantizationConfig(levels=7, d_min=0.05, d_max=0.4), np.ones((12, 16))).value


@pytest.fixture
def image():
    rng = np.random.default_rng(4)
    return rng.uniform(size=(12, 16, 3))


def test_identity_pose_reproduces_target(camera, levels, image):
    logits = np.random.default_rng(0).normal(size=levels.shape)
    result = synthesize_view(image, logits, levels, RigidPose.identity(), camera, camera)
    np.testing.assert_allclose(result.image.value, image, atol=1e-6)
    np.testing.assert_allclose(result.mass, 1.0, atol=1e-12)
    assert np.all(occlusion_mask(result) == 1.0)


def test_projected_probabilities_sum_to_one(camera, levels):
    logits = np.random.default_rng(1).normal(size=levels.shape)
    probabilities, validity = project_probability_volume(logits, levels, RigidPose.translation(0.3, 0.1),
                                                         camera, camera)
    np.testing.assert_allclose(np.sum(probabilities.value, axis=0), 1.0)
    assert validity.shape == levels.shape


def test_softmax_before_warp_is_available_for_comparison(camera, levels):
    logits = np.zeros(levels.shape)
    probabilities, validity = project_probability_volume(logits, levels, RigidPose.translation(0.3),
                                                         camera, camera, order='probabilities')
    np.testing.assert_allclose(probabilities.value, validity / levels.shape[0])
    with pytest.raises(ValueError):
        project_probability_volume(logits, levels, RigidPose.identity(), camera, camera, order='other')


def test_peaked_volume_matches_single_plane_warp(camera, levels, image):
    """Com logits concentrados no nível k, a síntese coincide com o warp pelo plano d_k."""
    k = 4
    pose = RigidPose.translation(0.2, -0.05)
    logits = np.zeros(levels.shape)
    logits[k] = 20.0
    result = synthesize_view(image, logits, levels, pose, camera, camera)
    expected, _ = warp_plane(image, levels[k], pose, camera, camera)
    interior = np.all(result.validity == 1.0, axis=0)
    assert interior.any()
    np.testing.assert_allclose(result.image.value[interior], expected.value[interior], atol=1e-6)


def test_out_of_view_pixels_are_occluded(camera, levels, image):
    result = synthesize_view(image, np.zeros(levels.shape), levels, RigidPose.translation(0.5), camera, camera)
    # deslocamento mínimo fx·0.5·d_min = 0.4 px: a primeira coluna não vê a câmera 0
    np.testing.assert_array_equal(result.mass[:, 0], 0.0)
    assert np.all(occlusion_mask(result)[:, 0] == 0.0)
    assert np.all(occlusion_mask(result)[:, 8] == 1.0)


def test_invalid_samples_get_negligible_probability(camera, levels):
    pose = RigidPose.translation(0.5)
    probabilities, validity = project_probability_volume(np.zeros(levels.shape), levels, pose, camera, camera)
    column = validity[:, :, 2]
    assert np.any(column == 0.0) and np.any(column == 1.0)
    invalid = probabilities.value[:, :, 2][column == 0.0]
    assert np.all(invalid < np.exp(INVALID_LOGIT + 1.0))


def test_grayscale_images_are_supported(camera, levels):
    gray = np.random.default_rng(2).uniform(size=(12, 16))
    result = synthesize_view(gray, np.zeros(levels.shape), levels, RigidPose.identity(), camera, camera)
    assert result.image.shape == (12, 16)
    np.testing.assert_allclose(result.image.value, gray, atol=1e-6)


def test_one_hot_plane_matches_rendered_view():
    """Plano texturizado a 5 m, translação pura de 2 px: PSNR interior acima de 40 dB."""
    camera = CameraIntrinsics(fx=100.0, fy=100.0, cx=63.5, cy=47.5, width=128, height=96)
    scene = SceneSpec(camera=camera, poses=(RigidPose.identity(), RigidPose.translation(-0.1)),
                      background_depth=5.0, background_seed=2)
    target, reference = render(scene, 0), render(scene, 1)
    values = np.array([0.1, 0.15, 0.2, 0.25, 0.3])
    levels = np.broadcast_to(values[:, None, None], (5, 96, 128)).copy()
    logits = np.zeros((5, 96, 128))
    logits[2] = 30.0

    result = synthesize_view(target.image, logits, levels, relative_pose(scene, 0, 1), camera, camera)
    interior = (slice(4, -4), slice(4, -4))
    mse = np.mean((result.image.value[interior] - reference.image[interior]) ** 2)
    psnr = 10.0 * np.log10(1.0 / max(mse, 1e-30))
    assert psnr > 40.0


def test_two_uniform_levels_split_evenly_after_translation(camera):
    levels = quantization_levels(QuantizationConfig(levels=2, d_min=0.05, d_max=0.4), np.ones((12, 16))).value
    probabilities, validity = project_probability_volume(np.zeros(levels.shape), levels,
                                                         RigidPose.translation(0.3), camera, camera)
    both = np.all(validity == 1.0, axis=0)
    assert both.any()
    np.testing.assert_allclose(probabilities.value[:, both], 0.5, rtol=0, atol=1e-15)


def test_pure_rotation_ignores_depth(camera, levels, image):
    pose = RigidPose(rotation_from_euler(0.02, -0.015, 0.01), np.zeros(3))
    first = synthesize_view(image, np.random.default_rng(5).normal(size=levels.shape), levels, pose, camera, camera)
    second = synthesize_view(image, 5.0 * np.random.default_rng(6).normal(size=levels.shape), levels, pose,
                             camera, camera)
    homography, _ = warp_plane(image, np.zeros((12, 16)), pose, camera, camera)
    np.testing.assert_allclose(first.image.value, second.image.value, atol=1e-9)
    np.testing.assert_allclose(first.image.value, homography.value, atol=1e-9)


def test_warping_logits_differs_from_warping_probabilities(camera, levels):
    logits = 3.0 * np.random.default_rng(7).normal(size=levels.shape)
    pose = RigidPose.translation(0.3)
    from_logits, validity = project_probability_volume(logits, levels, pose, camera, camera)
    from_probabilities, _ = project_probability_volume(logits, levels, pose, camera, camera, order='probabilities')
    interior = np.all(validity == 1.0, axis=0)
    difference = np.abs(from_logits.value - from_probabilities.value)[:, interior]
    assert difference.max() > 1e-3
