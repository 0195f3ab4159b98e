"""
Interface de linha de comando: cada subcomando lê e grava artefatos em disco.

Códigos de saída: 0 sucesso, 1 uso, 2 entrada inválida ou erro de E/S, 3 falha numérica.
"""
import argparse
import glob
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from sweepdepth.api.schemas import PoseFile, RunConfig, load_json, load_pose_file, load_run_config
from sweepdepth.config import settings
from sweepdepth.core.adaquant import quantization_levels
from sweepdepth.core.boost import BoostTriple, blend
from sweepdepth.core.camgeo import (AugmentationSpec, CameraIntrinsics, RigidPose, apply_augmentation, augment_image,
                                    disparity_rescale, flip_horizontal, photometric_jitter, sample_augmentation)
from sweepdepth.core.diagnostics import GRADIENT_TOLERANCE, run_gradient_suite
from sweepdepth.core.errors import ConfigError, FormatError, NumericalError, SweepDepthError
from sweepdepth.core.fitting import FrameObservation, fit_depth
from sweepdepth.core.objective import DEFAULT_DEPTH_CAP, eigen_metrics
from sweepdepth.core.spimo import OffsetSensitiveEstimator, build_depth_volume, compute_mask
from sweepdepth.core.synth import occlusion_mask, synthesize_view
from sweepdepth.data import image_io
from sweepdepth.data.cache import CachedEstimator
from sweepdepth.data.scenes import load_scene, relative_pose, render
from sweepdepth.utils.helpers import atomic_write_bytes, atomic_write_csv, atomic_write_json
from sweepdepth.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

USAGE_EXIT = 1
IO_EXIT = 2
TRACE_FIELDS = ('step', 'loss', 'synthesis', 'smoothness', 'boosting', 'lr')


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: erro: {message}\n")


def _pose_to(pose_file: PoseFile, source: int, k: int) -> RigidPose:
    """
    Pose do quadro source para o quadro k a partir de poses relativas ao alvo do arquivo.
    """
    try:
        return pose_file.poses[k].compose(pose_file.poses[source].inverse())
    except IndexError as exc:
        raise ConfigError(f"Quadro {k} ou {source} ausente no arquivo de poses.") from exc


def _read_image(path: str) -> np.ndarray:
    if path.lower().endswith('.pfm'):
        return image_io.read_pfm(path)
    return image_io.read_ppm(path)


def _require_shape(shape, expected, path: str) -> None:
    if tuple(shape) != tuple(expected):
        raise FormatError(f"{path}: forma {tuple(shape)}, esperada {tuple(expected)}.")


def _write_config_beside(out_path: str, payload) -> None:
    """
    Grava a configuração usada em <saída>.config.json, ao lado do artefato.
    """
    atomic_write_json(os.path.splitext(out_path)[0] + '.config.json', payload)


def cmd_render(args) -> int:
    spec = load_scene(args.scene)
    os.makedirs(args.out, exist_ok=True)
    for k in range(spec.frame_count):
        result = render(spec, k)
        image_io.write_ppm(os.path.join(args.out, f"frame_{k}.ppm"), result.image)
        image_io.write_pfm(os.path.join(args.out, f"depth_{k}.pfm"), result.depth)
        image_io.write_pfm(os.path.join(args.out, f"disparity_{k}.pfm"), result.disparity)
        image_io.write_pgm(os.path.join(args.out, f"moving_{k}.pgm"), result.moving)
    poses = PoseFile(camera=spec.camera, target=0,
                     poses=[relative_pose(spec, 0, k) for k in range(spec.frame_count)])
    atomic_write_json(os.path.join(args.out, 'poses.json'), poses.to_dict())
    logger.info(f"{spec.frame_count} quadros renderizados em {args.out}")
    return 0


@dataclass
class _FitInputs:
    """Quadros, poses e máscaras de um ajuste, no referencial em que o ajuste roda."""
    camera: CameraIntrinsics
    images: List[np.ndarray]
    poses: Dict[int, RigidPose]
    static_mask: Optional[np.ndarray] = None
    frame_masks: Optional[List[np.ndarray]] = None
    boosted: Optional[np.ndarray] = None

    def map_pixels(self, images, masks) -> None:
        """
        Aplica as funções dadas às imagens e aos mapas (máscaras são re-binarizadas).
        """
        self.images = [images(image) for image in self.images]
        if self.static_mask is not None:
            self.static_mask = np.round(masks(self.static_mask))
        if self.frame_masks is not None:
            self.frame_masks = [np.round(masks(mask)) for mask in self.frame_masks]
        if self.boosted is not None:
            self.boosted = masks(self.boosted)


def _apply_scale_crop(inputs: _FitInputs, spec: AugmentationSpec) -> None:
    camera = inputs.camera
    for k in inputs.poses:
        _, inputs.poses[k] = apply_augmentation(spec, camera, inputs.poses[k])
    inputs.camera, _ = apply_augmentation(spec, camera, RigidPose.identity())
    inputs.map_pixels(lambda image: augment_image(image, spec), lambda field: augment_image(field, spec))
    if inputs.boosted is not None:
        inputs.boosted = inputs.boosted * disparity_rescale(spec.mode, spec.scale)


def _augment_inputs(inputs: _FitInputs, config: RunConfig, target_index: int) -> None:
    """
    Aumento fixo (augmentation) ou sorteado pela semente (random_augmentation).
    """
    if config.augmentation is not None:
        _apply_scale_crop(inputs, config.augmentation)
    elif config.random_augmentation is not None:
        policy = config.random_augmentation
        rng = np.random.default_rng(config.seed)
        spec = sample_augmentation(rng, inputs.camera.width, inputs.camera.height, policy.crop, policy.mode)
        logger.info(f"Aumento sorteado: escala {spec.scale:.3f}, recorte {spec.crop}")
        _apply_scale_crop(inputs, spec)
        if policy.flip:
            camera = inputs.camera
            for k in inputs.poses:
                inputs.images[k], _, inputs.poses[k] = flip_horizontal(inputs.images[k], camera, inputs.poses[k])
            inputs.images[target_index], inputs.camera, _ = flip_horizontal(inputs.images[target_index], camera,
                                                                            RigidPose.identity())
            mirror = lambda field: np.ascontiguousarray(field[:, ::-1])  # noqa: E731
            inputs.map_pixels(lambda image: image, mirror)
        if policy.jitter:
            # mesma perturbação em todos os quadros
            jitter_seed = int(rng.integers(2 ** 31))
            inputs.images = [photometric_jitter(image, np.random.default_rng(jitter_seed))
                             for image in inputs.images]
    else:
        return
    logger.info(f"Aumento aplicado; saídas no referencial {inputs.camera.width}×{inputs.camera.height}.")


def cmd_fit(args) -> int:
    config = load_run_config(args.config)
    pose_file = load_pose_file(args.poses)
    if len(args.frames) < 2:
        raise ConfigError("fit exige ao menos 2 quadros.")
    target_index = args.target if args.target is not None else 0
    if not 0 <= target_index < len(args.frames):
        raise ConfigError(f"--target {target_index} fora do intervalo.")

    camera = pose_file.camera
    expected = (camera.height, camera.width)
    images = [_read_image(path) for path in args.frames]
    for path, image in zip(args.frames, images):
        _require_shape(image.shape[:2], expected, path)
    static_mask = image_io.read_pgm(args.mask) if args.mask else None
    if static_mask is not None:
        _require_shape(static_mask.shape, expected, args.mask)
    frame_masks = [image_io.read_pgm(path) for path in args.frame_masks] if args.frame_masks else None
    if frame_masks is not None:
        if len(frame_masks) != len(images):
            raise ConfigError("--frame-masks exige uma máscara por quadro.")
        for path, mask in zip(args.frame_masks, frame_masks):
            _require_shape(mask.shape, expected, path)
    boosted = image_io.read_pfm(args.boosted) if args.boosted else None
    if boosted is not None:
        _require_shape(boosted.shape, expected, args.boosted)

    inputs = _FitInputs(camera=camera, images=images,
                        poses={k: _pose_to(pose_file, target_index, k)
                               for k in range(len(images)) if k != target_index},
                        static_mask=static_mask, frame_masks=frame_masks, boosted=boosted)
    _augment_inputs(inputs, config, target_index)

    if inputs.frame_masks is not None and inputs.static_mask is None:
        inputs.static_mask = inputs.frame_masks[target_index]
    references = [FrameObservation(image=inputs.images[k], pose=pose,
                                   mask=inputs.frame_masks[k] if inputs.frame_masks else None)
                  for k, pose in sorted(inputs.poses.items())]
    result = fit_depth(inputs.images[target_index], references, inputs.camera, config.fit_options(),
                       stage=args.stage, static_mask=inputs.static_mask, boosted=inputs.boosted)

    os.makedirs(os.path.join(args.out, 'logits'), exist_ok=True)
    image_io.write_pfm(os.path.join(args.out, 'disparity.pfm'), result.disparity)
    image_io.write_pfm(os.path.join(args.out, 'depth.pfm'), result.depth)
    image_io.write_pfm(os.path.join(args.out, 'beta.pfm'), result.beta)
    for n, level in enumerate(result.logits):
        image_io.write_pfm(os.path.join(args.out, 'logits', f"level_{n:03d}.pfm"), level)
    atomic_write_csv(os.path.join(args.out, 'loss.csv'), result.trace, TRACE_FIELDS)
    atomic_write_json(os.path.join(args.out, 'config.json'), config.to_dict())
    logger.info(f"Ajuste gravado em {args.out}")
    return 0


def cmd_synthesize(args) -> int:
    config = load_run_config(args.config)
    pose_file = load_pose_file(args.poses)
    camera = pose_file.camera
    expected = (camera.height, camera.width)
    image = _read_image(args.frame)
    _require_shape(image.shape[:2], expected, args.frame)
    paths = sorted(glob.glob(os.path.join(args.logits_dir, 'level_*.pfm')))
    if len(paths) != config.quantization.levels:
        raise ConfigError(f"Esperados {config.quantization.levels} níveis em {args.logits_dir}, "
                          f"encontrados {len(paths)}.")
    channels = [image_io.read_pfm(path) for path in paths]
    for path, channel in zip(paths, channels):
        _require_shape(channel.shape, expected, path)
    logits = np.stack(channels, axis=0)
    beta = image_io.read_pfm(args.beta) if args.beta else np.ones(expected)
    if args.beta:
        _require_shape(beta.shape, expected, args.beta)
    levels = quantization_levels(config.quantization, beta)

    pose = _pose_to(pose_file, pose_file.target, args.reference)
    result = synthesize_view(image, logits, levels, pose, camera, camera)
    os.makedirs(args.out, exist_ok=True)
    image_io.write_ppm(os.path.join(args.out, 'synth.ppm'), result.image.value)
    image_io.write_pfm(os.path.join(args.out, 'mass.pfm'), result.mass)
    image_io.write_pgm(os.path.join(args.out, 'occlusion.pgm'), occlusion_mask(result, config.tau_o))
    atomic_write_json(os.path.join(args.out, 'config.json'), config.to_dict())
    return 0


def _replay_estimator(path: str):
    """
    replay.json: {"image": ..., "base_depth": ..., "region": ... (opcional), "sensitivity": ...};
    caminhos relativos ao próprio arquivo.
    """
    payload = load_json(path)
    root = os.path.dirname(os.path.abspath(path))
    try:
        image = _read_image(os.path.join(root, payload['image']))
        base_depth = image_io.read_pfm(os.path.join(root, payload['base_depth']))
        region = image_io.read_pgm(os.path.join(root, payload['region'])) if payload.get('region') else None
        sensitivity = float(payload.get('sensitivity', 0.0))
    except SweepDepthError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Arquivo de replay inválido: {exc}") from exc
    if region is not None:
        _require_shape(region.shape, base_depth.shape, payload['region'])
    return image, OffsetSensitiveEstimator(base_depth, region, sensitivity)


def cmd_spimo(args) -> int:
    config = load_run_config(args.config)
    boosted = image_io.read_pfm(args.boosted) if args.boosted else None
    if args.volume_dir:
        paths = sorted(glob.glob(os.path.join(args.volume_dir, '*.pfm')))
        if len(paths) < 2:
            raise ConfigError(f"O volume em {args.volume_dir} precisa de ao menos 2 canais.")
        channels = [image_io.read_pfm(path) for path in paths]
        for path, channel in zip(paths, channels):
            _require_shape(channel.shape, channels[0].shape, path)
        if boosted is not None:
            _require_shape(boosted.shape, channels[0].shape, args.boosted)
            if np.any(boosted <= 0.0):
                raise NumericalError("Disparidade reforçada deve ser positiva para entrar no volume.")
            channels.append(1.0 / boosted)
        volume = np.stack(channels, axis=0)
    else:
        image, estimator = _replay_estimator(args.replay)
        if boosted is not None:
            _require_shape(boosted.shape, estimator.base_depth.shape, args.boosted)
        if settings.redis_url:
            estimator = CachedEstimator(estimator, namespace='spimo')
        volume = build_depth_volume(estimator, image, config.offsets, boosted=boosted)
    mask = compute_mask(volume, config.gamma)
    image_io.write_pgm(args.out, mask)
    _write_config_beside(args.out, config.to_dict())
    return 0


def cmd_boost(args) -> int:
    config = load_run_config(args.config)
    full = image_io.read_pfm(args.full)
    reduced = image_io.read_pfm(args.reduced)
    augmented = image_io.read_pfm(args.augmented)
    _require_shape(reduced.shape, full.shape, args.reduced)
    _require_shape(augmented.shape, full.shape, args.augmented)
    triple = BoostTriple(full=full, reduced=reduced, augmented=augmented)
    image_io.write_pfm(args.out, blend(triple, literal=config.eq8_literal))
    _write_config_beside(args.out, config.to_dict())
    return 0


def cmd_metrics(args) -> int:
    pred = image_io.read_pfm(args.pred)
    gt = image_io.read_pfm(args.gt)
    _require_shape(pred.shape, gt.shape, args.pred)
    valid = image_io.read_pgm(args.valid) >= 0.5 if args.valid else None
    if valid is not None:
        _require_shape(valid.shape, gt.shape, args.valid)
    try:
        metrics = eigen_metrics(pred, gt, valid=valid, cap=args.cap, median_scale=args.median_scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = json.dumps(metrics, indent=2, sort_keys=True) + '\n'
    sys.stdout.write(text)
    if args.out:
        atomic_write_bytes(args.out, text.encode('utf-8'))
        _write_config_beside(args.out, {'cap': args.cap, 'median_scale': args.median_scale,
                                        'valid': args.valid})
    return 0


def _parse_size(text: str):
    try:
        height, width = (int(part) for part in text.lower().split('x'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"tamanho inválido: {text!r} (use HxW)")
    return height, width


def cmd_gradcheck(args) -> int:
    errors = run_gradient_suite(size=args.size, levels=args.levels, seed=args.seed)
    worst = max(errors.values())
    for name, error in errors.items():
        sys.stdout.write(f"{name}: {error:.3e}\n")
    sys.stdout.write(f"max: {worst:.3e}\n")
    if worst >= GRADIENT_TOLERANCE:
        raise NumericalError(f"Verificação de gradientes falhou: {worst:.3e} >= {GRADIENT_TOLERANCE}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog='sweepdepth', description="Profundidade por síntese de vista livre diferenciável.")
    parser.add_argument('--log-level', default=None, help="Nível de log (padrão: AQUA_LOG_LEVEL ou INFO)")
    commands = parser.add_subparsers(dest='command', required=True, parser_class=UsageParser)

    p = commands.add_parser('render', help="Renderiza uma cena sintética com verdade de solo")
    p.add_argument('scene')
    p.add_argument('out')
    p.set_defaults(handler=cmd_render)

    p = commands.add_parser('fit', help="Ajusta logits e β aos quadros")
    p.add_argument('frames', nargs='+')
    p.add_argument('--poses', required=True)
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.add_argument('--target', type=int, default=None, help="Índice do quadro alvo (padrão: o primeiro)")
    p.add_argument('--stage', type=int, choices=(1, 2), default=1)
    p.add_argument('--mask', help="Máscara SPIMO do quadro alvo (PGM)")
    p.add_argument('--frame-masks', nargs='+', help="Máscaras SPIMO de todos os quadros, na ordem dos quadros")
    p.add_argument('--boosted', help="Disparidade reforçada D* (PFM)")
    p.set_defaults(handler=cmd_fit)

    p = commands.add_parser('synthesize', help="Sintetiza a vista de um quadro de referência")
    p.add_argument('frame')
    p.add_argument('logits_dir')
    p.add_argument('--poses', required=True)
    p.add_argument('--config')
    p.add_argument('--reference', type=int, required=True)
    p.add_argument('--beta')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_synthesize)

    p = commands.add_parser('spimo', help="Máscara de objetos móveis")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--volume-dir')
    source.add_argument('--replay')
    p.add_argument('--boosted', help="Disparidade D* (PFM); 1/D* entra como canal extra do volume")
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_spimo)

    p = commands.add_parser('boost', help="Combina as três escalas em D*")
    p.add_argument('--full', required=True)
    p.add_argument('--reduced', required=True)
    p.add_argument('--augmented', required=True)
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_boost)

    p = commands.add_parser('metrics', help="Métricas de profundidade")
    p.add_argument('pred')
    p.add_argument('gt')
    p.add_argument('--median-scale', action='store_true')
    p.add_argument('--cap', type=float, default=DEFAULT_DEPTH_CAP)
    p.add_argument('--valid', help="Máscara PGM dos pixels avaliados")
    p.add_argument('--out')
    p.set_defaults(handler=cmd_metrics)

    p = commands.add_parser('gradcheck', help="Verifica gradientes por diferenças finitas")
    p.add_argument('--size', type=_parse_size, default=(8, 12))
    p.add_argument('--levels', type=int, default=5)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    logger.info(f"Comando {args.command} iniciado.")
    try:
        code = args.handler(args)
    except SweepDepthError as e:
        logger.error(f"Falha em {args.command}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"Erro de E/S em {args.command}: {e}")
        return IO_EXIT
    logger.info(f"Comando {args.command} concluído.")
    return code
