"""
Máscaras de objetos móveis por informação posicional deslocada.

Um estimador de profundidade condicionado às coordenadas da imagem tende a
"memorizar" a profundidade de objetos que se movem junto com a câmera; ao
deslocar as coordenadas de entrada, essas regiões respondem muito mais do que
a cena estática. A dispersão relativa das estimativas separa as duas.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose
from sweepdepth.core.errors import ConfigError, DegenerateError, NumericalError
from sweepdepth.core.synth import synthesize_view
from sweepdepth.utils.helpers import ordered_map

logger = logging.getLogger(__name__)

Offset = Tuple[float, float]

DEFAULT_GAMMA = 0.03
DEFAULT_OFFSETS: Tuple[Offset, ...] = ((0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, -0.25))
MEAN_EPS = 1e-12


class DepthEstimator(Protocol):
    def __call__(self, image: np.ndarray, offset: Offset) -> np.ndarray:
        ...


@dataclass
class OffsetSensitiveEstimator:
    """
    Estimador de referência: devolve um mapa base e, dentro de uma região marcada,
    uma perturbação proporcional ao deslocamento, depth·(1 + s·(u + v)).

    Simula a resposta de um estimador treinado a coordenadas deslocadas sem depender
    da rede; também serve para reproduzir passes gravados (--replay).
    """
    base_depth: np.ndarray
    region: Optional[np.ndarray] = None
    sensitivity: float = 0.0

    def __post_init__(self):
        self.base_depth = np.asarray(self.base_depth, dtype=np.float64)
        if self.region is not None:
            self.region = np.asarray(self.region, dtype=np.float64)
            if self.region.shape != self.base_depth.shape:
                raise ConfigError("Região e profundidade base devem ter a mesma forma.")

    def __call__(self, image: np.ndarray, offset: Offset) -> np.ndarray:
        if self.region is None or self.sensitivity == 0.0:
            return self.base_depth.copy()
        u, v = offset
        factor = 1.0 + self.sensitivity * (u + v) * self.region
        return self.base_depth * factor


def offsets_from_lists(u: Sequence[float], v: Sequence[float]) -> List[Offset]:
    if len(u) != len(v):
        raise ConfigError(f"Listas de deslocamento com tamanhos diferentes: {len(u)} e {len(v)}.")
    return [(float(a), float(b)) for a, b in zip(u, v)]


def build_depth_volume(estimator: DepthEstimator, image: np.ndarray,
                       offsets: Sequence[Offset] = DEFAULT_OFFSETS,
                       boosted: Optional[np.ndarray] = None,
                       max_workers: Optional[int] = None) -> np.ndarray:
    """
    Volume de profundidades D^v: canal i = estimator(image, offsets[i]).

    :param boosted: Disparidade D*; se fornecida, 1/D* é anexada como canal extra
    :param max_workers: Limite de threads para os passes do estimador
    :return: Volume N×H×W
    """
    if not offsets:
        raise ConfigError("É necessário ao menos um deslocamento.")
    channels = ordered_map(lambda offset: np.asarray(estimator(image, offset), dtype=np.float64),
                           offsets, max_workers=max_workers)
    if boosted is not None:
        boosted = np.asarray(boosted, dtype=np.float64)
        if np.any(boosted <= 0.0):
            raise NumericalError("Disparidade reforçada deve ser positiva para entrar no volume.")
        channels.append(1.0 / boosted)

    volume = np.stack(channels, axis=0)
    if np.any(~np.isfinite(volume)) or np.any(volume <= 0.0):
        raise NumericalError("O estimador retornou profundidades não positivas ou não finitas.")
    logger.debug(f"Volume de profundidade com {volume.shape[0]} canais.")
    return volume


def dispersion(volume: np.ndarray) -> np.ndarray:
    """
    s² = Σ_i (D_i - média)² / (média²·(N-1)), por pixel.
    """
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3 or volume.shape[0] < 2:
        raise ConfigError("O volume precisa de ao menos 2 canais (N×H×W).")
    mean = np.mean(volume, axis=0)
    if np.any(np.abs(mean) < MEAN_EPS):
        raise DegenerateError("degenerate depth: mean < 1e-12")
    squared = np.sum((volume - mean) ** 2, axis=0)
    return squared / (mean * mean * (volume.shape[0] - 1))


def compute_mask(volume: np.ndarray, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """
    :return: Máscara H×W (1 = estático, 0 = provavelmente móvel)
    """
    mask = (dispersion(volume) < gamma).astype(np.float64)
    logger.info(f"Máscara SPIMO: {int(mask.size - mask.sum())} de {mask.size} pixels marcados como móveis.")
    return mask


def _values(operand) -> np.ndarray:
    return np.asarray(operand.value if isinstance(operand, gc.DiffValue) else operand, dtype=np.float64)


def project_mask(mask: np.ndarray, logits, levels, pose: RigidPose, K0: CameraIntrinsics,
                 Kc: CameraIntrinsics, threshold: float = 0.5) -> np.ndarray:
    """
    M_{0→c}: a máscara da vista alvo sintetizada na câmera c como imagem de 1 canal.

    Regiões sem amostras válidas recebem 0.
    """
    result = synthesize_view(np.asarray(mask, dtype=np.float64), _values(logits), _values(levels),
                             pose, K0, Kc)
    return (result.image.value >= threshold).astype(np.float64)
