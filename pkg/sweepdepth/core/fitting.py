"""
Ajuste direto, por pixel, do volume de logits e do campo β a partir de quadros com poses conhecidas.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.adaquant import (QuantizationConfig, aggregate_disparity, beta_from_raw,
                                      quantization_levels, raw_from_beta)
from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose
from sweepdepth.core.errors import ConfigError, NumericalError
from sweepdepth.core.objective import (FeatureExtractor, LossWeights, boosting_loss, smoothness_loss,
                                       stage_losses, synthesis_loss)
from sweepdepth.core.spimo import project_mask
from sweepdepth.core.synth import occlusion_mask, synthesize_view

logger = logging.getLogger(__name__)

OPTIMIZERS = ('gd', 'adam')
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class FrameObservation:
    """
    Quadro de referência c.

    :ivar image: Imagem I_c (H×W×C)
    :ivar pose: Pose relativa da câmera alvo (0) para a câmera c
    :ivar mask: Máscara SPIMO M_c do próprio quadro (opcional, estágio 2)
    """
    image: np.ndarray
    pose: RigidPose
    mask: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FitOptions:
    quantization: QuantizationConfig = field(default_factory=QuantizationConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    steps: int = 2000
    lr: float = 1.0
    lr_decay: float = 0.9995
    optimizer: str = 'gd'
    seed: int = 0
    tau_o: float = 0.5
    log_every: int = 100

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"Otimizador desconhecido: {self.optimizer!r}. Use um de {OPTIMIZERS}.")
        if self.steps < 0:
            raise ConfigError("steps deve ser não negativo.")
        if self.lr <= 0.0 or not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("Exige lr > 0 e 0 < lr_decay <= 1.")


@dataclass
class FitResult:
    logits: np.ndarray
    beta: np.ndarray
    disparity: np.ndarray
    trace: List[Dict[str, Any]]

    @property
    def depth(self) -> np.ndarray:
        return 1.0 / self.disparity


class _Adam:
    def __init__(self, shapes: Dict[str, tuple]):
        self.first = {name: np.zeros(shape) for name, shape in shapes.items()}
        self.second = {name: np.zeros(shape) for name, shape in shapes.items()}
        self.count = 0

    def direction(self, grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        self.count += 1
        b1, b2 = ADAM_BETAS
        out = {}
        for name, grad in grads.items():
            self.first[name] = b1 * self.first[name] + (1 - b1) * grad
            self.second[name] = b2 * self.second[name] + (1 - b2) * grad * grad
            m_hat = self.first[name] / (1 - b1 ** self.count)
            v_hat = self.second[name] / (1 - b2 ** self.count)
            out[name] = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        return out


def _check_inputs(target: np.ndarray, references: Sequence[FrameObservation], camera: CameraIntrinsics):
    if not references:
        raise ConfigError("São necessários ao menos 2 quadros (alvo e uma referência).")
    expected = (camera.height, camera.width)
    for image in [target] + [ref.image for ref in references]:
        if image.shape[:2] != expected:
            raise ConfigError(f"Imagem com forma {image.shape[:2]}, câmera espera {expected}.")


def evaluate_losses(logits: gc.DiffValue, raw_beta: gc.DiffValue, target: np.ndarray,
                    references: Sequence[FrameObservation], camera: CameraIntrinsics, options: FitOptions,
                    stage: int = 1, static_mask: Optional[np.ndarray] = None,
                    boosted: Optional[np.ndarray] = None,
                    extractor: Optional[FeatureExtractor] = None) -> Dict[str, gc.DiffValue]:
    """
    Monta o grafo de perdas de um passo.

    As máscaras de oclusão e a máscara projetada M_{0→c} são tratadas como constantes.

    :return: Dicionário com 'total' e cada componente
    """
    levels = quantization_levels(options.quantization, beta_from_raw(raw_beta))
    disparity = aggregate_disparity(logits, levels)

    per_view = []
    for ref in references:
        result = synthesize_view(target, logits, levels, ref.pose, camera, camera)
        occlusion = occlusion_mask(result, options.tau_o)
        mask = projected = None
        if stage == 2:
            mask = ref.mask
            if static_mask is not None:
                projected = project_mask(static_mask, logits, levels, ref.pose, camera, camera)
        view_loss = synthesis_loss(result.image, ref.image, occlusion, mask, projected,
                                   options.weights, extractor)
        per_view.append(view_loss)

    scale = 1.0 / len(per_view)
    synthesis = per_view[0].total * scale
    for view_loss in per_view[1:]:
        synthesis = synthesis + view_loss.total * scale

    smoothness = smoothness_loss(disparity, target)
    boosting = None
    if stage == 2 and boosted is not None:
        moving_from = static_mask if static_mask is not None else np.ones(disparity.shape)
        boosting = boosting_loss(disparity, boosted, moving_from)
    total = stage_losses(stage, synthesis, smoothness, boosting, options.weights)

    losses = {'total': total, 'synthesis': synthesis, 'smoothness': smoothness, 'disparity': disparity,
              'levels': levels}
    if boosting is not None:
        losses['boosting'] = boosting
    return losses


def fit_depth(target: np.ndarray, references: Sequence[FrameObservation], camera: CameraIntrinsics,
              options: FitOptions = FitOptions(), stage: int = 1,
              static_mask: Optional[np.ndarray] = None,
              boosted: Optional[np.ndarray] = None,
              init_logits: Optional[np.ndarray] = None) -> FitResult:
    """
    Descida de gradiente sobre logits (início 0) e β bruto (início em β = 1).

    O passo é escalado por H·W, já que as perdas são médias por pixel. Uma nova fita
    é criada a cada passo.

    :param target: Imagem alvo I0
    :param references: Quadros de referência com poses relativas ao alvo
    :param stage: 1 (oclusão apenas) ou 2 (máscaras SPIMO e boosting)
    :param static_mask: M0, máscara SPIMO do quadro alvo
    :param boosted: D*, disparidade reforçada do quadro alvo
    :return: FitResult
    """
    target = np.asarray(target, dtype=np.float64)
    _check_inputs(target, references, camera)
    if stage not in (1, 2):
        raise ConfigError(f"Estágio inválido: {stage}")
    cfg = options.quantization
    height, width = camera.height, camera.width

    logits = np.zeros((cfg.levels, height, width)) if init_logits is None else np.array(init_logits, dtype=np.float64)
    raw_beta = np.full((height, width), float(raw_from_beta(1.0)))
    channels = target.shape[-1] if target.ndim == 3 else 1
    extractor = FeatureExtractor(seed=options.seed, in_channels=channels) if options.weights.alpha_p > 0 else None
    adam = _Adam({'logits': logits.shape, 'raw_beta': raw_beta.shape}) if options.optimizer == 'adam' else None
    pixel_scale = float(height * width)

    logger.info(f"Ajuste estágio {stage}: {options.steps} passos, {len(references)} referências, "
                f"{cfg.levels} níveis, otimizador {options.optimizer}.")
    trace: List[Dict[str, Any]] = []
    lr = options.lr
    for step in range(options.steps + 1):
        try:
            tape = gc.Tape()
            logits_var = tape.variable(logits, name='logits')
            raw_var = tape.variable(raw_beta, name='raw_beta')
            losses = evaluate_losses(logits_var, raw_var, target, references, camera, options, stage,
                                     static_mask, boosted, extractor)
            total = losses['total']
            row = {'step': step, 'loss': float(total.value), 'synthesis': float(losses['synthesis'].value),
                   'smoothness': float(losses['smoothness'].value),
                   'boosting': float(losses['boosting'].value) if 'boosting' in losses else 0.0,
                   'lr': lr}
            trace.append(row)
            if step == options.steps:
                break
            tape.backward(total)
            grads = {'logits': logits_var.adjoint * pixel_scale, 'raw_beta': raw_var.adjoint * pixel_scale}
            if adam is not None:
                grads = adam.direction(grads)
            logits = logits - lr * grads['logits']
            raw_beta = raw_beta - lr * grads['raw_beta']
            if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(raw_beta))):
                raise NumericalError("parâmetros não finitos após a atualização")
        except NumericalError as exc:
            raise type(exc)(f"Divergência no passo {step}: {exc}") from exc

        if options.log_every and step % options.log_every == 0:
            logger.info(f"passo {step}: perda {row['loss']:.6f} (lr {lr:.4g})")
        lr *= options.lr_decay

    final_beta = np.array(beta_from_raw(raw_beta).value)
    disparity = np.array(losses['disparity'].value)
    logger.info(f"Ajuste concluído: perda final {trace[-1]['loss']:.6f}")
    return FitResult(logits=logits, beta=final_beta, disparity=disparity, trace=trace)
