"""
Perdas de treinamento (síntese com máscaras, suavidade, boosting) e métricas de avaliação.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.errors import ConfigError, DegenerateError

logger = logging.getLogger(__name__)

MIN_DEPTH = 1e-3
DEFAULT_DEPTH_CAP = 80.0


@dataclass(frozen=True)
class LossWeights:
    alpha_ds: float = 0.1
    alpha_b: float = 0.1
    alpha_p: float = 0.01

    def __post_init__(self):
        if min(self.alpha_ds, self.alpha_b, self.alpha_p) < 0.0:
            raise ConfigError("Pesos das perdas devem ser não negativos.")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'LossWeights':
        try:
            return cls(alpha_ds=float(payload.get('alpha_ds', 0.1)),
                       alpha_b=float(payload.get('alpha_b', 0.1)),
                       alpha_p=float(payload.get('alpha_p', 0.01)))
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"Pesos inválidos: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'alpha_ds': self.alpha_ds, 'alpha_b': self.alpha_b, 'alpha_p': self.alpha_p}


class FeatureExtractor:
    """
    Pirâmide fixa de 3 convoluções 3×3 com passo 2 e pesos aleatórios semeados.

    Cada filtro é normalizado pela sua norma L2, o que limita a constante de
    Lipschitz de cada estágio; tanh entre estágios.
    """

    def __init__(self, seed: int = 0, channels: Sequence[int] = (8, 16, 32), in_channels: int = 3):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.weights: List[np.ndarray] = []
        previous = in_channels
        for width in channels:
            kernel = rng.standard_normal((3, 3, previous, width))
            norms = np.sqrt(np.sum(kernel * kernel, axis=(0, 1, 2), keepdims=True))
            self.weights.append(kernel / norms)
            previous = width

    def __call__(self, image) -> List[gc.DiffValue]:
        """
        :param image: Imagem H×W×C (DiffValue ou ndarray)
        :return: Mapas φ¹, φ², φ³
        """
        features = []
        current = image
        if current.ndim == 2:
            current = gc.expand_dims(current, -1)
        for kernel in self.weights:
            current = gc.tanh(gc.conv2d(current, kernel, stride=2, padding=1))
            features.append(current)
        return features


class SynthesisLoss(NamedTuple):
    total: gc.DiffValue
    l1: gc.DiffValue
    perceptual: gc.DiffValue
    empty_mask: bool


def combined_mask(occlusion: np.ndarray, mask: Optional[np.ndarray] = None,
                  projected_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    W_c = O_c ⊙ M_c ⊙ M_{0→c}; máscaras omitidas valem 1 (perda de estágio 1).
    """
    weight = np.asarray(occlusion, dtype=np.float64)
    if mask is not None:
        weight = weight * mask
    if projected_mask is not None:
        weight = weight * projected_mask
    return weight


def synthesis_loss(synthesized, target: np.ndarray, occlusion: np.ndarray,
                   mask: Optional[np.ndarray] = None, projected_mask: Optional[np.ndarray] = None,
                   weights: LossWeights = LossWeights(),
                   extractor: Optional[FeatureExtractor] = None) -> SynthesisLoss:
    """
    Perda de síntese ciente de oclusão e de objetos móveis.

    L1 médio sobre os pixels ativos (W = 1) e canais, mais α_p·Σ_l média((φˡ(I') - φˡ(I^w))²)
    com I^w = (1 - W)⊙I' + W⊙I.

    :param synthesized: Vista sintetizada I'_c (H×W×C)
    :param target: Vista real I_c
    :param occlusion: Máscara O_c
    :param mask: Máscara SPIMO M_c da vista de referência (omitida no estágio 1)
    :param projected_mask: M_{0→c} (omitida no estágio 1)
    """
    tape = gc.tape_of(synthesized)
    synthesized = gc.lift(synthesized, tape)
    target = np.asarray(target, dtype=np.float64)
    weight = combined_mask(occlusion, mask, projected_mask)
    channels = synthesized.shape[-1] if synthesized.ndim == 3 else 1
    weight_c = weight[..., None] if synthesized.ndim == 3 else weight

    active = float(np.sum(weight))
    empty = active == 0.0
    if empty:
        logger.warning("Máscara de síntese vazia (W ≡ 0); termo L1 definido como 0.")
        l1 = tape.constant(0.0)
    else:
        residual = gc.absolute(synthesized - target) * weight_c
        l1 = gc.reduce_sum(residual) * (1.0 / (active * channels))

    if weights.alpha_p > 0.0:
        extractor = extractor or FeatureExtractor(in_channels=channels)
        blended = synthesized * (1.0 - weight_c) + target * weight_c
        perceptual = tape.constant(0.0)
        for phi_synth, phi_blend in zip(extractor(synthesized), extractor(blended)):
            difference = phi_synth - phi_blend
            perceptual = perceptual + gc.reduce_mean(difference * difference)
    else:
        perceptual = tape.constant(0.0)

    total = l1 + perceptual * weights.alpha_p
    return SynthesisLoss(total=total, l1=l1, perceptual=perceptual, empty_mask=empty)


def _image_gradient_weight(image: np.ndarray, axis: int) -> np.ndarray:
    gradient = np.abs(np.diff(image, axis=axis))
    if gradient.ndim == 3:
        gradient = np.mean(gradient, axis=-1)
    return np.exp(-gradient)


def smoothness_loss(disparity, image: np.ndarray) -> gc.DiffValue:
    """
    Suavidade ciente de bordas sobre a disparidade normalizada pela média.

    Eixos com um único pixel não contribuem.
    """
    tape = gc.tape_of(disparity)
    disparity = gc.lift(disparity, tape)
    image = np.asarray(image, dtype=np.float64)
    normalized = disparity / gc.reduce_mean(disparity)
    height, width = disparity.shape

    loss = tape.constant(0.0)
    if width > 1:
        grad_x = gc.absolute(normalized[:, 1:] - normalized[:, :-1])
        loss = loss + gc.reduce_mean(grad_x * _image_gradient_weight(image, axis=1))
    if height > 1:
        grad_y = gc.absolute(normalized[1:, :] - normalized[:-1, :])
        loss = loss + gc.reduce_mean(grad_y * _image_gradient_weight(image, axis=0))
    return loss


def boosting_loss(disparity, boosted: np.ndarray, static_mask: np.ndarray) -> gc.DiffValue:
    """
    (1/max D*)·média((1 - M0)⊙|D̂ - D*|): só atua nos pixels provavelmente móveis.
    """
    boosted = np.asarray(boosted, dtype=np.float64)
    peak = float(np.max(boosted))
    if peak < 1e-12:
        raise DegenerateError("degenerate disparity: max D* < 1e-12")
    moving = 1.0 - np.asarray(static_mask, dtype=np.float64)
    return gc.reduce_mean(gc.absolute(disparity - boosted) * moving) * (1.0 / peak)


def stage_losses(stage: int, synthesis, smoothness, boosting=None,
                 weights: LossWeights = LossWeights()) -> gc.DiffValue:
    """
    Estágio 1: l^o_s + α_ds·l_ds. Estágio 2: l^om_s + α_ds·l_ds + α_b·l_b.
    """
    if stage not in (1, 2):
        raise ConfigError(f"Estágio inválido: {stage}")
    total = synthesis + smoothness * weights.alpha_ds
    if stage == 2 and boosting is not None:
        total = total + boosting * weights.alpha_b
    return total


def eigen_metrics(pred_depth: np.ndarray, gt_depth: np.ndarray, valid: Optional[np.ndarray] = None,
                  cap: float = DEFAULT_DEPTH_CAP, median_scale: bool = False) -> Dict[str, float]:
    """
    Métricas abs_rel, sq_rel, rmse, rmse_log e δ<1.25^k sobre os pixels válidos.

    Pixels com GT fora de [1e-3, cap] são descartados; a predição é opcionalmente
    escalada por mediana(gt)/mediana(pred) e depois saturada em [1e-3, cap].
    """
    pred = np.asarray(pred_depth, dtype=np.float64)
    gt = np.asarray(gt_depth, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"Formas diferentes: predição {pred.shape}, GT {gt.shape}")
    keep = (gt >= MIN_DEPTH) & (gt <= cap)
    if valid is not None:
        keep &= np.asarray(valid).astype(bool)
    if not np.any(keep):
        raise ValueError("Máscara de pixels válidos vazia.")

    pred = pred[keep]
    gt = gt[keep]
    if np.any(pred <= 0.0):
        raise ValueError("Profundidades previstas devem ser positivas nos pixels válidos.")
    if median_scale:
        pred = pred * (np.median(gt) / np.median(pred))
    pred = np.clip(pred, MIN_DEPTH, cap)

    ratio = np.maximum(gt / pred, pred / gt)
    return {
        'abs_rel': float(np.mean(np.abs(gt - pred) / gt)),
        'sq_rel': float(np.mean(((gt - pred) ** 2) / gt)),
        'rmse': float(np.sqrt(np.mean((gt - pred) ** 2))),
        'rmse_log': float(np.sqrt(np.mean((np.log(gt) - np.log(pred)) ** 2))),
        'delta1': float(np.mean(ratio < 1.25)),
        'delta2': float(np.mean(ratio < 1.25 ** 2)),
        'delta3': float(np.mean(ratio < 1.25 ** 3)),
    }
