"""
Câmeras pinhole, projeções induzidas por planos e o aumento de dados por
redimensionamento/recorte que preserva as pistas de profundidade.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from sweepdepth.core import gradcore as gc
from sweepdepth.core.errors import ConfigError

logger = logging.getLogger(__name__)

PROJECTIVE_EPS = 1e-6
ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"Distâncias focais devem ser positivas: fx={self.fx}, fy={self.fy}")
        if self.width < 2 or self.height < 2:
            raise ConfigError(f"Imagem deve ter ao menos 2×2 pixels: {self.width}×{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse(self) -> np.ndarray:
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def pixel_grid(self) -> np.ndarray:
        """
        Grade (H, W, 2) com as coordenadas (x, y) de cada pixel.
        """
        xs, ys = np.meshgrid(np.arange(self.width, dtype=np.float64),
                             np.arange(self.height, dtype=np.float64))
        return np.stack([xs, ys], axis=-1)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'CameraIntrinsics':
        try:
            return cls(fx=float(payload['fx']), fy=float(payload['fy']),
                       cx=float(payload['cx']), cy=float(payload['cy']),
                       width=int(payload['width']), height=int(payload['height']))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Intrínsecos inválidos: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
                'width': self.width, 'height': self.height}


@dataclass(frozen=True, eq=False)
class RigidPose:
    """
    Transformação da câmera 0 para a câmera c: X_c = R X_0 + t.
    """
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.array(self.R, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.t, dtype=np.float64).reshape(3)
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ROTATION_TOL, rtol=0.0):
            raise ConfigError("R não é ortonormal (RᵀR ≠ I).")
        if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
            raise ConfigError("det R deve ser 1.")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, 'R', rotation)
        object.__setattr__(self, 't', translation)

    @classmethod
    def identity(cls) -> 'RigidPose':
        return cls()

    @classmethod
    def translation(cls, tx: float, ty: float = 0.0, tz: float = 0.0) -> 'RigidPose':
        return cls(np.eye(3), np.array([tx, ty, tz]))

    def inverse(self) -> 'RigidPose':
        return RigidPose(self.R.T, -self.R.T @ self.t)

    def compose(self, other: 'RigidPose') -> 'RigidPose':
        """
        Aplica other e depois self.
        """
        return RigidPose(self.R @ other.R, self.R @ other.t + self.t)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'RigidPose':
        try:
            rotation = np.array(payload['R'], dtype=np.float64)
            translation = np.array(payload['t'], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Pose inválida: {exc}") from exc
        if rotation.size != 9 or translation.size != 3:
            raise ConfigError("Pose exige R com 9 valores e t com 3 valores.")
        return cls(rotation.reshape(3, 3), translation)

    def to_dict(self) -> Dict[str, Any]:
        return {'R': [float(v) for v in self.R.reshape(-1)], 't': [float(v) for v in self.t]}


def rotation_from_euler(rx: float, ry: float, rz: float) -> np.ndarray:
    """
    Matriz de rotação Rz·Ry·Rx a partir de ângulos em radianos.
    """
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    rot_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    rot_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rot_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rot_z @ rot_y @ rot_x


class TranslationMode(str, Enum):
    INVARIANT = 'invariant'
    INVERSE = 'inverse'
    DIRECT = 'direct'


@dataclass(frozen=True)
class AugmentationSpec:
    scale: float = 1.0
    crop: Optional[Tuple[int, int, int, int]] = None
    mode: TranslationMode = TranslationMode.DIRECT

    def __post_init__(self):
        if not 0.5 <= self.scale <= 1.5:
            raise ConfigError(f"Escala fora de [0.5, 1.5]: {self.scale}")
        object.__setattr__(self, 'mode', TranslationMode(self.mode))
        if self.crop is not None:
            crop = tuple(int(v) for v in self.crop)
            if len(crop) != 4 or crop[2] < 2 or crop[3] < 2 or crop[0] < 0 or crop[1] < 0:
                raise ConfigError(f"Recorte inválido: {self.crop}")
            object.__setattr__(self, 'crop', crop)

    def scaled_size(self, width: int, height: int) -> Tuple[int, int]:
        return int(round(self.scale * width)), int(round(self.scale * height))

    def window(self, width: int, height: int) -> Tuple[int, int, int, int]:
        """
        Janela (u0, v0, w, h) validada dentro da imagem redimensionada.
        """
        scaled_w, scaled_h = self.scaled_size(width, height)
        u0, v0, w, h = self.crop if self.crop is not None else (0, 0, scaled_w, scaled_h)
        if u0 + w > scaled_w or v0 + h > scaled_h:
            raise ConfigError(f"Recorte {self.crop} fora da imagem redimensionada {scaled_w}×{scaled_h}.")
        return u0, v0, w, h

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'AugmentationSpec':
        try:
            crop = payload.get('crop')
            return cls(scale=float(payload.get('scale', 1.0)),
                       crop=tuple(crop) if crop is not None else None,
                       mode=TranslationMode(payload.get('mode', 'direct')))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Aumento inválido: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'scale': self.scale, 'crop': list(self.crop) if self.crop is not None else None,
                'mode': self.mode.value}


def plane_project(p0: np.ndarray, d, pose: RigidPose, K0: CameraIntrinsics,
                  Kc: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """
    Projeta pixels da câmera 0 na câmera c para pontos no plano de profundidade inversa d.

    :param p0: Pixels (..., 2)
    :param d: Profundidade inversa (escalar ou com forma p0.shape[:-1])
    :return: (pixels (..., 2) na câmera c, flag de validade; False = atrás da câmera)
    """
    p0 = np.asarray(p0, dtype=np.float64)
    d = np.broadcast_to(np.asarray(d, dtype=np.float64), p0.shape[:-1])
    if np.any(d < 0.0):
        raise ConfigError("Profundidade inversa deve ser não negativa.")
    homogeneous = np.concatenate([p0, np.ones(p0.shape[:-1] + (1,))], axis=-1)
    rays = homogeneous @ K0.inverse.T
    points = rays @ pose.R.T + d[..., None] * pose.t
    projected = points @ Kc.matrix.T
    depth = projected[..., 2]
    valid = depth > PROJECTIVE_EPS
    safe = np.where(valid, depth, 1.0)
    pixels = projected[..., :2] / safe[..., None]
    return np.where(valid[..., None], pixels, 0.0), valid


@dataclass(frozen=True, eq=False)
class PlaneWarpGeometry:
    """
    Mapa inverso por pixel da câmera c: coordenadas na imagem 0 = offset + d·slope.

    Como a profundidade inversa entra de forma linear em p_c ∝ Kc(R K0⁻¹ p̃0 + d t),
    a inversão também é afim em d para cada pixel alvo.
    """
    offset: np.ndarray
    slope: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    ray_ok: np.ndarray

    @classmethod
    def build(cls, pose: RigidPose, K0: CameraIntrinsics, Kc: CameraIntrinsics) -> 'PlaneWarpGeometry':
        grid = Kc.pixel_grid()
        homogeneous = np.concatenate([grid, np.ones(grid.shape[:-1] + (1,))], axis=-1)
        rays = homogeneous @ Kc.inverse.T
        a = rays @ pose.R
        b = pose.R.T @ pose.t
        a_z = a[..., 2]
        ray_ok = np.abs(a_z) > PROJECTIVE_EPS
        safe = np.where(ray_ok, a_z, 1.0)
        focal = np.array([K0.fx, K0.fy])
        center = np.array([K0.cx, K0.cy])
        offset = focal * a[..., :2] / safe[..., None] + center
        slope = focal * (a[..., :2] * b[2] / safe[..., None] - b[:2])
        return cls(offset=offset, slope=slope, lam0=1.0 / safe, lam1=b[2] / safe, ray_ok=ray_ok)

    def coords(self, d) -> gc.DiffValue:
        """
        :param d: Campo H×W ou volume N×H×W de profundidades inversas (DiffValue ou ndarray)
        """
        return gc.expand_dims(d, -1) * self.slope + self.offset

    def in_front(self, d_values: np.ndarray) -> np.ndarray:
        lam = self.lam0 + d_values * self.lam1
        return (lam > PROJECTIVE_EPS) & self.ray_ok


def warp_plane(src, d_map, pose: RigidPose, K0: CameraIntrinsics,
               Kc: CameraIntrinsics) -> Tuple[gc.DiffValue, np.ndarray]:
    """
    Warp inverso: para cada pixel q da câmera c usa d_map(q) para achar o pixel fonte.

    d_map é avaliado nas coordenadas da câmera c (aproximação usual em varreduras de planos).

    :param src: Imagem H×W(×C) da câmera 0
    :param d_map: Campo H×W de profundidade inversa na grade da câmera c
    :return: (imagem sintetizada, validade 0/1)
    """
    geometry = PlaneWarpGeometry.build(pose, K0, Kc)
    coords = geometry.coords(d_map)
    warped, valid = gc.bilinear_sample(src, coords)
    d_values = d_map.value if isinstance(d_map, gc.DiffValue) else np.asarray(d_map, dtype=np.float64)
    front = geometry.in_front(np.broadcast_to(d_values, valid.shape)).astype(np.float64)
    validity = valid * front
    if np.any(front == 0.0):
        mask = front if warped.ndim == front.ndim else front[..., None]
        warped = warped * mask
    return warped, validity


def disparity_rescale(mode: TranslationMode, scale: float) -> float:
    """
    Fator pelo qual a disparidade que reproduz o movimento observado muda
    quando a imagem é redimensionada por scale.
    """
    mode = TranslationMode(mode)
    if mode is TranslationMode.DIRECT:
        return scale
    if mode is TranslationMode.INVERSE:
        return 1.0 / scale
    return 1.0


def apply_augmentation(spec: AugmentationSpec, K: CameraIntrinsics,
                       pose: RigidPose) -> Tuple[CameraIntrinsics, RigidPose]:
    """
    Escala e depois recorta: atualiza intrínsecos e reescala a translação conforme o modo.

    :return: (K', pose')
    """
    u0, v0, w, h = spec.window(K.width, K.height)
    s = spec.scale
    new_K = CameraIntrinsics(fx=s * K.fx, fy=s * K.fy, cx=s * K.cx - u0, cy=s * K.cy - v0,
                             width=w, height=h)
    if spec.mode is TranslationMode.INVARIANT:
        return new_K, pose
    if spec.mode is TranslationMode.INVERSE:
        return new_K, RigidPose(pose.R, pose.t * s)
    return new_K, RigidPose(pose.R, pose.t / s)


def resize_bilinear(image: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """
    Redimensionamento bilinear com a convenção u' = s·u (compatível com K' = s·K).
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    xs = np.arange(out_width, dtype=np.float64) * (width / out_width)
    ys = np.arange(out_height, dtype=np.float64) * (height / out_height)
    grid_x, grid_y = np.meshgrid(np.clip(xs, 0, width - 1), np.clip(ys, 0, height - 1))
    sampled, _ = gc.bilinear_sample(image, np.stack([grid_x, grid_y], axis=-1))
    return np.array(sampled.value)


def augment_image(image: np.ndarray, spec: AugmentationSpec) -> np.ndarray:
    height, width = image.shape[:2]
    scaled_w, scaled_h = spec.scaled_size(width, height)
    u0, v0, w, h = spec.window(width, height)
    resized = resize_bilinear(image, scaled_h, scaled_w)
    return resized[v0:v0 + h, u0:u0 + w]


def sample_augmentation(rng: np.random.Generator, width: int, height: int,
                        crop_size: Optional[Tuple[int, int]] = None,
                        mode: TranslationMode = TranslationMode.DIRECT) -> AugmentationSpec:
    """
    Sorteia escala em [0.5, 1.5] e um recorte dentro da imagem redimensionada.

    :param crop_size: (w, h) do recorte; limitado ao tamanho redimensionado
    """
    scale = float(rng.uniform(0.5, 1.5))
    probe = AugmentationSpec(scale=scale, mode=mode)
    scaled_w, scaled_h = probe.scaled_size(width, height)
    crop_w, crop_h = crop_size if crop_size is not None else (scaled_w, scaled_h)
    crop_w, crop_h = min(crop_w, scaled_w), min(crop_h, scaled_h)
    u0 = int(rng.integers(0, scaled_w - crop_w + 1))
    v0 = int(rng.integers(0, scaled_h - crop_h + 1))
    return replace(probe, crop=(u0, v0, crop_w, crop_h))


def photometric_jitter(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Gama, brilho e deslocamento de cor aleatórios, com saturação em [0, 1].
    """
    gamma = rng.uniform(0.8, 1.2)
    brightness = rng.uniform(0.5, 2.0)
    colors = rng.uniform(0.8, 1.2, size=image.shape[-1] if image.ndim == 3 else 1)
    jittered = np.power(np.clip(image, 0.0, 1.0), gamma) * brightness
    jittered = jittered * (colors if image.ndim == 3 else colors[0])
    return np.clip(jittered, 0.0, 1.0)


def flip_horizontal(image: np.ndarray, K: CameraIntrinsics,
                    pose: RigidPose) -> Tuple[np.ndarray, CameraIntrinsics, RigidPose]:
    """
    Espelha a imagem e conjuga a pose por diag(-1, 1, 1).
    """
    mirror = np.diag([-1.0, 1.0, 1.0])
    flipped_K = replace(K, cx=K.width - 1 - K.cx)
    flipped_pose = RigidPose(mirror @ pose.R @ mirror, mirror @ pose.t)
    return np.ascontiguousarray(image[:, ::-1]), flipped_K, flipped_pose

