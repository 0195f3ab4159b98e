"""
Disparidade reforçada por três escalas, usada como pseudo-supervisão nas regiões móveis.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Protocol, Tuple

import numpy as np

from sweepdepth.core.camgeo import resize_bilinear
from sweepdepth.core.errors import DegenerateError, NumericalError
from sweepdepth.utils.helpers import ordered_map

logger = logging.getLogger(__name__)

REDUCED_FACTOR = 3.0 / 4.0
AUGMENTED_FACTOR = 5.0 / 4.0
PEAK_EPS = 1e-12


class DisparityEstimator(Protocol):
    def __call__(self, image: np.ndarray, positions: np.ndarray) -> np.ndarray:
        ...


@dataclass
class BoostTriple:
    """
    Estimativas em resolução cheia, reduzida (3/4) e aumentada (5/4), todas já
    reamostradas para a resolução cheia e com a disparidade reescalada.
    """
    full: np.ndarray
    reduced: np.ndarray
    augmented: np.ndarray

    def __post_init__(self):
        self.full = np.asarray(self.full, dtype=np.float64)
        self.reduced = np.asarray(self.reduced, dtype=np.float64)
        self.augmented = np.asarray(self.augmented, dtype=np.float64)
        if not self.full.shape == self.reduced.shape == self.augmented.shape:
            raise ValueError(f"Mapas com formas diferentes: {self.full.shape}, "
                             f"{self.reduced.shape}, {self.augmented.shape}")


def normalized_positions(height: int, width: int) -> np.ndarray:
    """
    Coordenadas normalizadas (U, V): centro em (0, 0) e canto superior esquerdo em (-1, -1).

    :return: Array H×W×2
    """
    xs = (np.arange(width, dtype=np.float64) - (width - 1) / 2.0) / ((width - 1) / 2.0 if width > 1 else 1.0)
    ys = (np.arange(height, dtype=np.float64) - (height - 1) / 2.0) / ((height - 1) / 2.0 if height > 1 else 1.0)
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.stack([grid_x, grid_y], axis=-1)


def intermediate_size(shape: Tuple[int, int], factor: float) -> Tuple[int, int]:
    height, width = shape
    return int(round(height * factor)), int(round(width * factor))


def _scaled_pass(estimator: DisparityEstimator, image: np.ndarray, positions: np.ndarray,
                 factor: float) -> np.ndarray:
    height, width = image.shape[:2]
    small_h, small_w = intermediate_size((height, width), factor)
    estimate = estimator(resize_bilinear(image, small_h, small_w),
                         resize_bilinear(positions, small_h, small_w))
    # disparidade escala com a imagem; volta ao referencial da resolução cheia
    return resize_bilinear(np.asarray(estimate, dtype=np.float64), height, width) / factor


def make_triple(estimator: DisparityEstimator, image: np.ndarray,
                positions: Optional[np.ndarray] = None,
                max_workers: Optional[int] = None) -> BoostTriple:
    """
    Executa o estimador nas três escalas (em paralelo quando permitido).

    :param positions: Coordenadas H×W×2; padrão normalized_positions
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    if positions is None:
        positions = normalized_positions(height, width)

    def run(factor: float) -> np.ndarray:
        if factor == 1.0:
            return np.asarray(estimator(image, positions), dtype=np.float64)
        return _scaled_pass(estimator, image, positions, factor)

    full, reduced, augmented = ordered_map(run, (1.0, REDUCED_FACTOR, AUGMENTED_FACTOR),
                                           max_workers=max_workers)
    logger.debug(f"Passes intermediários: {intermediate_size((height, width), REDUCED_FACTOR)} e "
                 f"{intermediate_size((height, width), AUGMENTED_FACTOR)}")
    return BoostTriple(full=full, reduced=reduced, augmented=augmented)


def blend_weights(mean_disparity: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pesos (cheia, reduzida, aumentada) = (1, D̄, 1 - D̄²).

    Objetos próximos (D̄ alto) confiam no passe reduzido; distantes, no aumentado.
    """
    mean_disparity = np.asarray(mean_disparity, dtype=np.float64)
    return np.ones_like(mean_disparity), mean_disparity, 1.0 - mean_disparity ** 2


def normalized_mean_disparity(triple: BoostTriple) -> np.ndarray:
    total = triple.full + triple.reduced + triple.augmented
    peak = float(np.max(total))
    if peak < PEAK_EPS:
        raise DegenerateError("degenerate disparity: max of the triple sum < 1e-12")
    return total / peak


def blend(triple: BoostTriple, literal: bool = False) -> np.ndarray:
    """
    Combinação seletiva D* das três estimativas.

    Por padrão o denominador é a soma dos pesos, 2 + D̄ - D̄², o que faz de
    blend(D, D, D) = D um ponto fixo exato. literal=True usa 2 + D̄ + D̄².
    """
    mean = normalized_mean_disparity(triple)
    w_full, w_reduced, w_augmented = blend_weights(mean)
    if literal:
        numerator = w_full * triple.full + w_reduced * triple.reduced + w_augmented * triple.augmented
        boosted = numerator / (1.0 + mean + 1.0 + mean ** 2)
    else:
        correction = w_reduced * (triple.reduced - triple.full) + w_augmented * (triple.augmented - triple.full)
        boosted = triple.full + correction / (w_full + w_reduced + w_augmented)
    if not np.all(np.isfinite(boosted)):
        raise NumericalError("Disparidade reforçada não finita.")
    return boosted
