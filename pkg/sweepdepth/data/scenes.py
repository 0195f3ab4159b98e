"""
Gerador procedural de cenas com geometria conhecida: planos fronto-paralelos
texturizados, um fundo e caixas que se movem de forma independente.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from sweepdepth.core.camgeo import CameraIntrinsics, RigidPose
from sweepdepth.core.errors import ConfigError

logger = logging.getLogger(__name__)

TEXTURE_COMPONENTS = 8
DEFAULT_TEXTURE_FREQUENCY = 0.15

Rect = Tuple[float, float, float, float]


def _rect(values) -> Rect:
    try:
        x0, y0, x1, y1 = (float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Retângulo inválido: {values!r}") from exc
    if x1 <= x0 or y1 <= y0:
        raise ConfigError(f"Retângulo vazio: {values!r}")
    return x0, y0, x1, y1


@dataclass(frozen=True)
class Layer:
    """
    Plano fronto-paralelo texturizado.

    :ivar extent: (x0, y0, x1, y1) em pixels, como visto pela câmera do mundo (pose identidade)
    """
    depth: float
    extent: Rect
    texture_seed: int = 0

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'Layer':
        try:
            return cls(depth=float(payload['depth']), extent=_rect(payload['extent']),
                       texture_seed=int(payload.get('texture_seed', 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Camada inválida: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'depth': self.depth, 'extent': list(self.extent), 'texture_seed': self.texture_seed}


@dataclass(frozen=True)
class Mover:
    """
    Caixa plana que se desloca velocity (unidades de mundo) a cada quadro.
    """
    rect: Rect
    depth: float
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    texture_seed: int = 0

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'Mover':
        try:
            velocity = tuple(float(v) for v in payload.get('velocity', (0.0, 0.0, 0.0)))
            if len(velocity) != 3:
                raise ValueError("velocity exige 3 componentes")
            return cls(rect=_rect(payload['rect']), depth=float(payload['depth']),
                       velocity=velocity, texture_seed=int(payload.get('texture_seed', 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Objeto móvel inválido: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'rect': list(self.rect), 'depth': self.depth, 'velocity': list(self.velocity),
                'texture_seed': self.texture_seed}


def _overlaps(a: Rect, b: Rect) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraIntrinsics
    poses: Tuple[RigidPose, ...]
    background_depth: float
    layers: Tuple[Layer, ...] = ()
    movers: Tuple[Mover, ...] = ()
    background_seed: int = 0
    texture_frequency: float = DEFAULT_TEXTURE_FREQUENCY

    def __post_init__(self):
        if not self.poses:
            raise ConfigError("A cena precisa de ao menos uma pose.")
        depths = [layer.depth for layer in self.layers] + [m.depth for m in self.movers] + [self.background_depth]
        if min(depths) <= 0.0:
            raise ConfigError("Profundidades devem ser positivas.")
        layer_depths = [layer.depth for layer in self.layers] + [self.background_depth]
        if any(near > far for near, far in zip(layer_depths, layer_depths[1:])):
            raise ConfigError("Camadas devem estar ordenadas da mais próxima para a mais distante.")
        for i, first in enumerate(self.movers):
            for second in self.movers[i + 1:]:
                if _overlaps(first.rect, second.rect):
                    raise ConfigError("Objetos móveis não podem se sobrepor.")
        if self.texture_frequency <= 0.0:
            raise ConfigError("texture_frequency deve ser positiva.")

    @property
    def frame_count(self) -> int:
        return len(self.poses)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'SceneSpec':
        try:
            background = payload['background']
            return cls(camera=CameraIntrinsics.from_dict(payload['camera']),
                       poses=tuple(RigidPose.from_dict(p) for p in payload['poses']),
                       background_depth=float(background['depth']),
                       background_seed=int(background.get('texture_seed', 0)),
                       layers=tuple(Layer.from_dict(item) for item in payload.get('layers', [])),
                       movers=tuple(Mover.from_dict(item) for item in payload.get('movers', [])),
                       texture_frequency=float(payload.get('texture_frequency', DEFAULT_TEXTURE_FREQUENCY)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Cena inválida: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'camera': self.camera.to_dict(),
                'poses': [pose.to_dict() for pose in self.poses],
                'background': {'depth': self.background_depth, 'texture_seed': self.background_seed},
                'layers': [layer.to_dict() for layer in self.layers],
                'movers': [mover.to_dict() for mover in self.movers],
                'texture_frequency': self.texture_frequency}


def load_scene(path: str) -> SceneSpec:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON de cena inválido em {path}: {exc}") from exc
    return SceneSpec.from_dict(payload)


@dataclass
class RenderResult:
    image: np.ndarray
    depth: np.ndarray
    disparity: np.ndarray
    moving: np.ndarray = field(repr=False)


def _texture(seed: int, frequency: float, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Soma de senoides com frequência limitada; valores em [0, 1], 3 canais.
    """
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, np.pi, TEXTURE_COMPONENTS)
    freqs = frequency * rng.uniform(0.5, 1.0, TEXTURE_COMPONENTS)
    phases = rng.uniform(0.0, 2.0 * np.pi, (TEXTURE_COMPONENTS, 3))
    expand = (slice(None),) + (None,) * u.ndim
    projection = np.cos(angles)[expand] * u + np.sin(angles)[expand] * v
    argument = 2.0 * np.pi * freqs[expand] * projection
    waves = np.sin(argument[..., None] + phases.reshape((TEXTURE_COMPONENTS,) + (1,) * u.ndim + (3,)))
    return 0.5 + 0.5 * np.sum(waves, axis=0) / TEXTURE_COMPONENTS


def _world_rect(rect: Rect, depth: float, camera: CameraIntrinsics) -> Rect:
    x0, y0, x1, y1 = rect
    return ((x0 - camera.cx) * depth / camera.fx, (y0 - camera.cy) * depth / camera.fy,
            (x1 - camera.cx) * depth / camera.fx, (y1 - camera.cy) * depth / camera.fy)


def render(spec: SceneSpec, k: int) -> RenderResult:
    """
    Renderiza o quadro k por interseção raio-plano; a superfície mais próxima vence.

    :return: RenderResult com imagem H×W×3, profundidade, disparidade (1/profundidade)
             e máscara de movimento (0 nos objetos móveis)
    """
    if not 0 <= k < spec.frame_count:
        raise ConfigError(f"Quadro {k} fora do intervalo [0, {spec.frame_count}).")
    camera = spec.camera
    pose = spec.poses[k]
    rays = camera.pixel_grid()
    rays = np.concatenate([rays, np.ones(rays.shape[:-1] + (1,))], axis=-1) @ camera.inverse.T
    origin = -pose.R.T @ pose.t
    directions = rays @ pose.R

    height, width = camera.height, camera.width
    depth = np.full((height, width), np.inf)
    image = np.zeros((height, width, 3))
    moving = np.ones((height, width))

    def intersect(plane_z: float, shift: np.ndarray):
        with np.errstate(divide='ignore', invalid='ignore'):
            lam = (plane_z - origin[2]) / directions[..., 2]
        points = origin + lam[..., None] * directions - shift
        return np.where(np.isfinite(lam) & (lam > 0.0), lam, np.inf), points

    def paint(lam, points, rect_world: Optional[Rect], plane_depth: float, seed: int, is_mover: bool):
        inside = np.isfinite(lam)
        if rect_world is not None:
            x0, y0, x1, y1 = rect_world
            inside &= (points[..., 0] >= x0) & (points[..., 0] < x1) & (points[..., 1] >= y0) & (points[..., 1] < y1)
        closer = inside & (lam < depth)
        if not np.any(closer):
            return
        # coordenadas da textura em pixels da vista de referência
        u = points[..., 0] * camera.fx / plane_depth + camera.cx
        v = points[..., 1] * camera.fy / plane_depth + camera.cy
        texture = _texture(seed, spec.texture_frequency, u[closer], v[closer])
        depth[closer] = lam[closer]
        image[closer] = texture
        moving[closer] = 0.0 if is_mover else 1.0

    no_shift = np.zeros(3)
    lam, points = intersect(spec.background_depth, no_shift)
    paint(lam, points, None, spec.background_depth, spec.background_seed, False)
    for layer in spec.layers:
        lam, points = intersect(layer.depth, no_shift)
        paint(lam, points, _world_rect(layer.extent, layer.depth, camera), layer.depth, layer.texture_seed, False)
    for mover in spec.movers:
        shift = np.asarray(mover.velocity, dtype=np.float64) * k
        lam, points = intersect(mover.depth + shift[2], shift)
        paint(lam, points, _world_rect(mover.rect, mover.depth, camera), mover.depth, mover.texture_seed, True)

    if not np.all(np.isfinite(depth)):
        raise ConfigError("Há pixels sem superfície visível (fundo atrás da câmera?).")
    return RenderResult(image=image, depth=depth, disparity=1.0 / depth, moving=moving)


def relative_pose(spec: SceneSpec, target: int, k: int) -> RigidPose:
    """
    Pose que leva pontos da câmera do quadro target para a câmera do quadro k.
    """
    return spec.poses[k].compose(spec.poses[target].inverse())


def naive_disparity(width: int, height: int) -> np.ndarray:
    """
    Gradiente vertical: linha r vale r/(H-1), primeira linha 0 e última 1.
    """
    if height < 2:
        raise ConfigError("naive_disparity exige altura >= 2.")
    column = np.arange(height, dtype=np.float64) / (height - 1)
    return np.repeat(column[:, None], width, axis=1)
