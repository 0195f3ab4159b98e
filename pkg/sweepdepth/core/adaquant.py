"""
Quantização adaptativa da profundidade inversa e agregação da disparidade.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.errors import ConfigError

logger = logging.getLogger(__name__)

BETA_EPS = 1e-3


@dataclass(frozen=True)
class QuantizationConfig:
    levels: int = 33
    d_min: float = 0.01
    d_max: float = 0.3

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError(f"São necessários ao menos 2 níveis, recebeu {self.levels}.")
        if not 0.0 < self.d_min < self.d_max:
            raise ConfigError(f"Exige 0 < d_min < d_max, recebeu d_min={self.d_min}, d_max={self.d_max}.")

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'QuantizationConfig':
        try:
            return cls(levels=int(payload.get('levels', 33)),
                       d_min=float(payload.get('d_min', 0.01)),
                       d_max=float(payload.get('d_max', 0.3)))
        except (TypeError, AttributeError) as exc:
            raise ConfigError(f"Quantização inválida: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'levels': self.levels, 'd_min': self.d_min, 'd_max': self.d_max}


def beta_from_raw(raw) -> gc.DiffValue:
    """
    β = softplus(raw) + ε, sempre positivo.
    """
    return gc.softplus(raw) + BETA_EPS


def raw_from_beta(beta) -> np.ndarray:
    """
    Inversa de beta_from_raw, usada para inicializar β = 1.
    """
    target = np.asarray(beta, dtype=np.float64) - BETA_EPS
    if np.any(target <= 0.0):
        raise ConfigError(f"β deve ser maior que {BETA_EPS}.")
    return target + np.log(-np.expm1(-target))


def fixed_levels(cfg: QuantizationConfig) -> np.ndarray:
    """
    Curva exponencial fixa (β = 1): d_n = d_max·exp((n/(N-1) - 1)·ln(d_max/d_min)).
    """
    fractions = np.arange(cfg.levels, dtype=np.float64) / (cfg.levels - 1)
    return cfg.d_max * np.exp(np.log(cfg.d_max / cfg.d_min) * (fractions - 1.0))


def quantization_levels(cfg: QuantizationConfig, beta) -> gc.DiffValue:
    """
    Níveis de profundidade inversa por pixel.

    O canal n vale d_max·exp(ln(d_max/d_min)·((n/(N-1))^β(p) - 1)); as extremidades
    são fixadas exatamente em d_min e d_max.

    :param cfg: Configuração da quantização
    :param beta: Campo H×W positivo (DiffValue ou ndarray)
    :return: Volume N×H×W
    """
    tape = gc.tape_of(beta)
    beta = gc.lift(beta, tape)
    if np.any(beta.value <= 0.0):
        raise ConfigError("β deve ser positivo em todos os pixels.")
    plane_shape = (1,) + beta.shape
    first = tape.constant(np.full(plane_shape, cfg.d_min))
    last = tape.constant(np.full(plane_shape, cfg.d_max))
    if cfg.levels == 2:
        return gc.concat([first, last], axis=0)

    fractions = (np.arange(1, cfg.levels - 1, dtype=np.float64) / (cfg.levels - 1))
    fractions = fractions.reshape((-1,) + (1,) * beta.ndim)
    curve = gc.power(fractions, gc.expand_dims(beta, 0))
    interior = gc.exp((curve - 1.0) * float(np.log(cfg.d_max / cfg.d_min))) * cfg.d_max
    return gc.concat([first, interior, last], axis=0)


def aggregate_disparity(logits, levels) -> gc.DiffValue:
    """
    D̂(p) = Σ_n d_n(p)·softmax(logits)(n, p).
    """
    tape = gc.tape_of(logits, levels)
    logits = gc.lift(logits, tape)
    levels = gc.lift(levels, tape)
    if logits.shape != levels.shape:
        raise ValueError(f"Formas diferentes: logits {logits.shape}, níveis {levels.shape}")
    probabilities = gc.channel_softmax(logits, axis=0)
    return gc.reduce_sum(probabilities * levels, axis=0)
