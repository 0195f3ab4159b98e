"""
Síntese de vista livre por varredura de planos e máscaras de oclusão.
"""
import logging
from dataclasses import dataclass

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.camgeo import CameraIntrinsics, PlaneWarpGeometry, RigidPose

logger = logging.getLogger(__name__)

INVALID_LOGIT = -30.0
DEFAULT_OCCLUSION_THRESHOLD = 0.5


@dataclass
class SynthesisResult:
    """
    :ivar image: Vista sintetizada I'_c (H×W×C)
    :ivar probabilities: Volume de probabilidades projetado D^{P0→c} (N×H×W)
    :ivar mass: Massa de probabilidade projetada total por pixel (H×W)
    :ivar validity: Validade de cada warp de plano (N×H×W)
    """
    image: gc.DiffValue
    probabilities: gc.DiffValue
    mass: np.ndarray
    validity: np.ndarray


def _plane_coords(levels, pose: RigidPose, K0: CameraIntrinsics, Kc: CameraIntrinsics):
    geometry = PlaneWarpGeometry.build(pose, K0, Kc)
    coords = geometry.coords(levels)
    level_values = levels.value if isinstance(levels, gc.DiffValue) else np.asarray(levels)
    front = geometry.in_front(level_values).astype(np.float64)
    return coords, front


def project_probability_volume(logits, levels, pose: RigidPose, K0: CameraIntrinsics,
                               Kc: CameraIntrinsics, order: str = 'logits'):
    """
    Projeta o volume de logits de disparidade na câmera c e aplica softmax por canal.

    Cada canal n é deformado com seu próprio campo d_n; amostras inválidas recebem
    logit -30. Com order="probabilities" a softmax é aplicada antes do warp
    (alternativa mantida apenas para comparação).

    :return: (probabilidades N×H×W, validade N×H×W)
    """
    tape = gc.tape_of(logits, levels)
    logits = gc.lift(logits, tape)
    levels = gc.lift(levels, tape)
    coords, front = _plane_coords(levels, pose, K0, Kc)

    if order == 'probabilities':
        warped, valid = gc.sample_volume(gc.channel_softmax(logits, axis=0), coords)
        validity = valid * front
        return warped * validity, validity
    if order != 'logits':
        raise ValueError(f"Ordem desconhecida: {order}")

    warped, valid = gc.sample_volume(logits, coords)
    validity = valid * front
    masked = warped * validity + (1.0 - validity) * INVALID_LOGIT
    return gc.channel_softmax(masked, axis=0), validity


def synthesize_view(image, logits, levels, pose: RigidPose, K0: CameraIntrinsics,
                    Kc: CameraIntrinsics) -> SynthesisResult:
    """
    I'_c = Σ_n warp(I0, d_n)·D^{P0→c}_n e massa = Σ_n warp(1, d_n)·D^{P0→c}_n.

    :param image: Imagem alvo I0 (H×W×C ou H×W)
    :param logits: Volume de logits N×H×W no referencial da câmera 0
    :param levels: Volume de níveis N×H×W
    :return: SynthesisResult
    """
    tape = gc.tape_of(image, logits, levels)
    image = gc.lift(image, tape)
    levels = gc.lift(levels, tape)
    probabilities, validity = project_probability_volume(logits, levels, pose, K0, Kc)

    coords, front = _plane_coords(levels, pose, K0, Kc)
    planes, _ = gc.bilinear_sample(image, coords)
    if image.ndim == 3:
        weights = gc.expand_dims(probabilities * validity, -1)
    else:
        weights = probabilities * validity
    synthesized = gc.reduce_sum(planes * weights, axis=0)
    mass = np.sum(validity * probabilities.value, axis=0)
    return SynthesisResult(image=synthesized, probabilities=probabilities, mass=mass, validity=validity)


def occlusion_mask(result: SynthesisResult, threshold: float = DEFAULT_OCCLUSION_THRESHOLD) -> np.ndarray:
    """
    1 onde a massa projetada atinge o limiar (pixel sintetizável a partir de I0), senão 0.
    """
    return (result.mass >= threshold).astype(np.float64)
