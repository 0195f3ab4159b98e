import os

import numpy as np
import pytest

from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose
from sweepdepth.core.errors import ConfigError
from sweepdepth.data.scenes import Layer, Mover, SceneSpec, load_scene, naive_disparity, relative_pose, render

EXAMPLE_SCENE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data', 'example_scene.json')


@pytest.fixture
def camera():
    return CameraIntrinsics(fx=20.0, fy=20.0, cx=11.5, cy=7.5, width=24, height=16)


def test_background_only_has_constant_depth(camera):
    result = render(SceneSpec(camera=camera, poses=(RigidPose.identity(),), background_depth=6.0), 0)
    np.testing.assert_allclose(result.depth, 6.0)
    np.testing.assert_allclose(result.disparity, 1.0 / 6.0)
    assert np.all(result.moving == 1.0)
    assert result.image.shape == (16, 24, 3)
    assert result.image.min() >= 0.0 and result.image.max() <= 1.0


def test_horizontal_baseline_shifts_by_stereo_disparity(camera):
    """fx·B/z = 20·0.5/5 = 2 pixels."""
    spec = SceneSpec(camera=camera, poses=(RigidPose.identity(), RigidPose.translation(-0.5)),
                     background_depth=5.0, background_seed=4)
    first, second = render(spec, 0), render(spec, 1)
    np.testing.assert_allclose(second.image[:, :-2], first.image[:, 2:], atol=1e-9)


def test_layer_occludes_background(camera):
    spec = SceneSpec(camera=camera, poses=(RigidPose.identity(),), background_depth=8.0,
                     layers=(Layer(depth=2.0, extent=(4.5, 3.5, 12.5, 9.5)),))
    depth = render(spec, 0).depth
    assert depth[5, 8] == pytest.approx(2.0)
    assert depth[12, 20] == pytest.approx(8.0)


def test_mover_following_the_camera_stays_still(camera):
    mover = Mover(rect=(5.5, 4.5, 14.5, 10.5), depth=3.0, velocity=(0.2, 0.0, 0.0), texture_seed=9)
    spec = SceneSpec(camera=camera, poses=(RigidPose.identity(), RigidPose.translation(-0.2)),
                     background_depth=9.0, movers=(mover,))
    first, second = render(spec, 0), render(spec, 1)
    np.testing.assert_array_equal(first.moving, second.moving)
    inside = first.moving == 0.0
    assert inside.sum() == 9 * 6
    np.testing.assert_allclose(second.image[inside], first.image[inside], atol=1e-9)
    np.testing.assert_allclose(second.depth[inside], 3.0)


def test_scene_validation(camera):
    with pytest.raises(ConfigError):
        SceneSpec(camera=camera, poses=(), background_depth=5.0)
    with pytest.raises(ConfigError):
        SceneSpec(camera=camera, poses=(RigidPose.identity(),), background_depth=5.0,
                  layers=(Layer(depth=6.0, extent=(0, 0, 4, 4)),))
    with pytest.raises(ConfigError):
        SceneSpec(camera=camera, poses=(RigidPose.identity(),), background_depth=5.0,
                  movers=(Mover(rect=(0, 0, 4, 4), depth=2.0), Mover(rect=(2, 2, 6, 6), depth=3.0)))
    with pytest.raises(ConfigError):
        render(SceneSpec(camera=camera, poses=(RigidPose.identity(),), background_depth=5.0), 1)


def test_scene_dict_round_trip(camera):
    spec = SceneSpec(camera=camera, poses=(RigidPose.identity(), RigidPose.translation(0.1)), background_depth=7.0,
                     layers=(Layer(depth=3.0, extent=(1, 1, 5, 5), texture_seed=2),),
                     movers=(Mover(rect=(10, 2, 14, 6), depth=2.5, velocity=(0.0, 0.1, 0.0)),))
    restored = SceneSpec.from_dict(spec.to_dict())
    assert restored.layers == spec.layers and restored.movers == spec.movers
    assert restored.background_depth == 7.0 and restored.frame_count == 2


def test_relative_pose_chains_world_poses():
    spec_poses = (RigidPose.translation(0.1), RigidPose.translation(0.3, -0.2))
    camera = CameraIntrinsics(fx=1.0, fy=1.0, cx=0.5, cy=0.5, width=2, height=2)
    spec = SceneSpec(camera=camera, poses=spec_poses, background_depth=3.0)
    np.testing.assert_allclose(relative_pose(spec, 0, 1).t, [0.2, -0.2, 0.0])


def test_example_scene_loads():
    spec = load_scene(EXAMPLE_SCENE)
    assert spec.frame_count == 3
    assert spec.camera.width == 128


def test_naive_disparity_is_vertical_gradient():
    disparity = naive_disparity(5, 4)
    assert disparity.shape == (4, 5)
    np.testing.assert_array_equal(disparity[0], 0.0)
    np.testing.assert_array_equal(disparity[-1], 1.0)
    with pytest.raises(ConfigError):
        naive_disparity(5, 1)
