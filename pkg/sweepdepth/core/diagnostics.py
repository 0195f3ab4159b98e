"""
Bateria de verificações de gradiente (adjuntos contra diferenças centrais) em
fixtures pequenas, usada pelo comando gradcheck e pelos testes.
"""
import logging
from typing import Callable, Dict, Tuple

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.adaquant import QuantizationConfig, aggregate_disparity, beta_from_raw, quantization_levels
from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose, rotation_from_euler
from sweepdepth.core.objective import (FeatureExtractor, LossWeights, boosting_loss, smoothness_loss,
                                       stage_losses, synthesis_loss)
from sweepdepth.core.spimo import project_mask
from sweepdepth.core.synth import occlusion_mask, synthesize_view

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4


def fixture_camera(height: int, width: int) -> CameraIntrinsics:
    return CameraIntrinsics(fx=10.0, fy=10.0, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                            width=width, height=height)


def fixture_pose() -> RigidPose:
    return RigidPose(rotation_from_euler(0.01, -0.02, 0.005), np.array([0.1, 0.05, 0.02]))


def _weighted_sum(value: gc.DiffValue, weights: np.ndarray) -> gc.DiffValue:
    return gc.reduce_sum(value * weights)


def _stage_builder(stage: int, cfg: QuantizationConfig, target: np.ndarray, reference: np.ndarray,
                   pose: RigidPose, camera: CameraIntrinsics, logits0: np.ndarray, raw0: np.ndarray,
                   weights: LossWeights, extractor: FeatureExtractor, rng: np.random.Generator):
    # máscaras calculadas uma vez e mantidas fixas durante as perturbações
    levels0 = quantization_levels(cfg, beta_from_raw(raw0))
    occlusion = occlusion_mask(synthesize_view(target, logits0, levels0, pose, camera, camera))
    static = (rng.uniform(size=target.shape[:2]) > 0.3).astype(np.float64)
    projected = project_mask(static, logits0, levels0, pose, camera, camera)
    boosted = rng.uniform(0.05, 0.3, size=target.shape[:2])

    def build(tape: gc.Tape, params: Dict[str, gc.DiffValue]) -> gc.DiffValue:
        levels = quantization_levels(cfg, beta_from_raw(params['raw_beta']))
        disparity = aggregate_disparity(params['logits'], levels)
        result = synthesize_view(target, params['logits'], levels, pose, camera, camera)
        if stage == 1:
            synthesis = synthesis_loss(result.image, reference, occlusion, weights=weights,
                                       extractor=extractor).total
            return stage_losses(1, synthesis, smoothness_loss(disparity, target), weights=weights)
        synthesis = synthesis_loss(result.image, reference, occlusion, static, projected,
                                   weights=weights, extractor=extractor).total
        boosting = boosting_loss(disparity, boosted, static)
        return stage_losses(2, synthesis, smoothness_loss(disparity, target), boosting, weights)

    return build


def run_gradient_suite(size: Tuple[int, int] = (8, 12), levels: int = 5, seed: int = 0,
                       h: float = 1e-6) -> Dict[str, float]:
    """
    Executa check_gradients em cada operação e perda.

    :param size: (H, W) da fixture
    :param levels: Número de níveis N
    :return: Erro relativo máximo por verificação
    """
    height, width = size
    rng = np.random.default_rng(seed)
    cfg = QuantizationConfig(levels=levels, d_min=0.05, d_max=0.5)
    camera = fixture_camera(height, width)
    pose = fixture_pose()
    target = rng.uniform(size=(height, width, 3))
    reference = rng.uniform(size=(height, width, 3))
    logits0 = rng.normal(scale=0.5, size=(levels, height, width))
    raw0 = rng.normal(scale=0.3, size=(height, width))
    weights = LossWeights()
    extractor = FeatureExtractor(seed=seed, in_channels=3)

    probe = rng.normal(size=(height, width))
    probe3 = rng.normal(size=(height, width, 3))
    probe_volume = rng.normal(size=(levels, height, width))

    checks: Dict[str, Tuple[Callable, Dict[str, np.ndarray]]] = {
        'elementwise': (
            lambda tape, p: _weighted_sum(
                gc.exp(p['a'] * 0.5) * p['b'] / (p['a'] + 2.0) + gc.ln(p['a'])
                + gc.power(p['a'], p['b']) - gc.absolute(p['b'] - 1.0)
                + gc.clamp(p['b'], 0.6, 1.4) + gc.tanh(p['a']) + gc.softplus(p['b']), probe),
            {'a': rng.uniform(0.5, 1.5, size=(height, width)), 'b': rng.uniform(0.5, 1.5, size=(height, width))}),
        'softmax': (
            lambda tape, p: _weighted_sum(gc.channel_softmax(p['x'], axis=0), probe_volume),
            {'x': logits0}),
        'bilinear': (
            lambda tape, p: _weighted_sum(gc.bilinear_sample(p['src'], p['coords'])[0], probe3),
            {'src': target, 'coords': np.stack([rng.uniform(0.2, width - 1.2, size=(height, width)),
                                                rng.uniform(0.2, height - 1.2, size=(height, width))], axis=-1)}),
        'conv': (
            lambda tape, p: gc.reduce_sum(extractor(p['x'])[-1]),
            {'x': target}),
        'quantization': (
            lambda tape, p: _weighted_sum(quantization_levels(cfg, beta_from_raw(p['raw_beta'])), probe_volume),
            {'raw_beta': raw0}),
        'aggregation': (
            lambda tape, p: _weighted_sum(
                aggregate_disparity(p['logits'], quantization_levels(cfg, beta_from_raw(p['raw_beta']))), probe),
            {'logits': logits0, 'raw_beta': raw0}),
        'stage1': (
            _stage_builder(1, cfg, target, reference, pose, camera, logits0, raw0, weights, extractor, rng),
            {'logits': logits0, 'raw_beta': raw0}),
        'stage2': (
            _stage_builder(2, cfg, target, reference, pose, camera, logits0, raw0, weights, extractor, rng),
            {'logits': logits0, 'raw_beta': raw0}),
    }

    errors = {}
    for name, (builder, params) in checks.items():
        errors[name] = gc.check_gradients(builder, params, h=h)
        logger.info(f"gradcheck {name}: {errors[name]:.3e}")
    return errors
