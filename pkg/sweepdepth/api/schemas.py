"""
Configuração de execução (RunConfig) e leitura dos arquivos JSON de entrada.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from sweepdepth.core.adaquant import QuantizationConfig
from sweepdepth.core.camgeo import AugmentationSpec, CameraIntrinsics, RigidPose, TranslationMode
from sweepdepth.core.errors import ConfigError
from sweepdepth.core.fitting import FitOptions
from sweepdepth.core.objective import LossWeights
from sweepdepth.core.spimo import DEFAULT_GAMMA, DEFAULT_OFFSETS, Offset, offsets_from_lists

logger = logging.getLogger(__name__)

RUN_CONFIG_KEYS = {
    'quantization', 'weights', 'augmentation', 'random_augmentation', 'gamma', 'tau_o', 'offsets',
    'eq8_literal', 'seed', 'steps', 'lr', 'lr_decay', 'optimizer', 'log_every',
}


def load_json(path: str) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON inválido em {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"Não foi possível ler {path}: {exc}") from exc


@dataclass(frozen=True)
class RandomAugmentation:
    """
    Aumento sorteado a partir da semente da execução: escala e recorte aleatórios,
    espelhamento horizontal e perturbação fotométrica opcionais.

    :ivar crop: (w, h) do recorte; None mantém a imagem redimensionada inteira
    """
    crop: Optional[Tuple[int, int]] = None
    mode: TranslationMode = TranslationMode.DIRECT
    flip: bool = False
    jitter: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'mode', TranslationMode(self.mode))
        if self.crop is not None:
            crop = tuple(int(v) for v in self.crop)
            if len(crop) != 2 or min(crop) < 2:
                raise ConfigError(f"Recorte aleatório inválido: {self.crop}")
            object.__setattr__(self, 'crop', crop)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'RandomAugmentation':
        try:
            crop = payload.get('crop')
            return cls(crop=tuple(crop) if crop is not None else None,
                       mode=TranslationMode(payload.get('mode', 'direct')),
                       flip=bool(payload.get('flip', False)),
                       jitter=bool(payload.get('jitter', False)))
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError(f"Aumento aleatório inválido: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'crop': list(self.crop) if self.crop is not None else None, 'mode': self.mode.value,
                'flip': self.flip, 'jitter': self.jitter}


@dataclass(frozen=True)
class RunConfig:
    quantization: QuantizationConfig = field(default_factory=QuantizationConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    augmentation: Optional[AugmentationSpec] = None
    random_augmentation: Optional[RandomAugmentation] = None
    gamma: float = DEFAULT_GAMMA
    tau_o: float = 0.5
    offsets: Tuple[Offset, ...] = DEFAULT_OFFSETS
    eq8_literal: bool = False
    seed: int = 0
    steps: int = 2000
    lr: float = 1.0
    lr_decay: float = 0.9995
    optimizer: str = 'gd'
    log_every: int = 100

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ConfigError("gamma deve ser positivo.")
        if not 0.0 < self.tau_o <= 1.0:
            raise ConfigError("tau_o deve estar em (0, 1].")
        if self.augmentation is not None and self.random_augmentation is not None:
            raise ConfigError("Use augmentation ou random_augmentation, não ambos.")
        # valida os campos do otimizador na construção
        self.fit_options()

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'RunConfig':
        if not isinstance(payload, dict):
            raise ConfigError("A configuração deve ser um objeto JSON.")
        unknown = set(payload) - RUN_CONFIG_KEYS
        if unknown:
            raise ConfigError(f"Chaves desconhecidas na configuração: {sorted(unknown)}")

        offsets = DEFAULT_OFFSETS
        if 'offsets' in payload:
            try:
                offsets = tuple(offsets_from_lists(payload['offsets']['u'], payload['offsets']['v']))
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"offsets inválido: {exc}") from exc
        augmentation = payload.get('augmentation')
        random_augmentation = payload.get('random_augmentation')

        try:
            return cls(
                quantization=QuantizationConfig.from_dict(payload.get('quantization', {})),
                weights=LossWeights.from_dict(payload.get('weights', {})),
                augmentation=AugmentationSpec.from_dict(augmentation) if augmentation is not None else None,
                random_augmentation=(RandomAugmentation.from_dict(random_augmentation)
                                     if random_augmentation is not None else None),
                gamma=float(payload.get('gamma', DEFAULT_GAMMA)),
                tau_o=float(payload.get('tau_o', 0.5)),
                offsets=offsets,
                eq8_literal=bool(payload.get('eq8_literal', False)),
                seed=int(payload.get('seed', 0)),
                steps=int(payload.get('steps', 2000)),
                lr=float(payload.get('lr', 1.0)),
                lr_decay=float(payload.get('lr_decay', 0.9995)),
                optimizer=str(payload.get('optimizer', 'gd')),
                log_every=int(payload.get('log_every', 100)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"Configuração inválida: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {
            'quantization': self.quantization.to_dict(),
            'weights': self.weights.to_dict(),
            'augmentation': self.augmentation.to_dict() if self.augmentation is not None else None,
            'random_augmentation': (self.random_augmentation.to_dict()
                                    if self.random_augmentation is not None else None),
            'gamma': self.gamma,
            'tau_o': self.tau_o,
            'offsets': {'u': [u for u, _ in self.offsets], 'v': [v for _, v in self.offsets]},
            'eq8_literal': self.eq8_literal,
            'seed': self.seed,
            'steps': self.steps,
            'lr': self.lr,
            'lr_decay': self.lr_decay,
            'optimizer': self.optimizer,
            'log_every': self.log_every,
        }

    def fit_options(self) -> FitOptions:
        return FitOptions(quantization=self.quantization, weights=self.weights, steps=self.steps,
                          lr=self.lr, lr_decay=self.lr_decay, optimizer=self.optimizer,
                          seed=self.seed, tau_o=self.tau_o, log_every=self.log_every)


def load_run_config(path: Optional[str]) -> RunConfig:
    """
    :param path: Caminho do JSON; None usa os padrões
    """
    if path is None:
        return RunConfig()
    config = RunConfig.from_dict(load_json(path))
    logger.info(f"Configuração carregada de {path}")
    return config


@dataclass(frozen=True)
class PoseFile:
    """
    Conteúdo de poses.json: câmera, índice do quadro alvo e pose de cada quadro
    relativa ao alvo.
    """
    camera: CameraIntrinsics
    target: int
    poses: List[RigidPose]

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'PoseFile':
        try:
            return cls(camera=CameraIntrinsics.from_dict(payload['camera']),
                       target=int(payload.get('target', 0)),
                       poses=[RigidPose.from_dict(p) for p in payload['poses']])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"Arquivo de poses inválido: {exc}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return {'camera': self.camera.to_dict(), 'target': self.target,
                'poses': [pose.to_dict() for pose in self.poses]}


def load_pose_file(path: str) -> PoseFile:
    return PoseFile.from_dict(load_json(path))
