"""
Leitura e escrita de PFM (campos reais), PPM P6 (imagens) e PGM P5 (máscaras).
"""
import logging
import re
from typing import Tuple

import numpy as np

from sweepdepth.core.errors import FormatError
from sweepdepth.utils.helpers import atomic_write_bytes

logger = logging.getLogger(__name__)

_HEADER_TOKEN = re.compile(rb'\s*(#[^\n]*\n\s*)*(\S+)')


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, 'rb') as handle:
            return handle.read()
    except OSError as exc:
        raise FormatError(f"Não foi possível ler {path}: {exc}") from exc


def _tokens(data: bytes, count: int, path: str) -> Tuple[list, int]:
    """
    Lê count tokens do cabeçalho (ignorando comentários) e devolve o deslocamento
    do primeiro byte após o separador final.
    """
    tokens = []
    position = 0
    for _ in range(count):
        match = _HEADER_TOKEN.match(data, position)
        if match is None:
            raise FormatError(f"Cabeçalho truncado em {path}.")
        tokens.append(match.group(2))
        position = match.end()
    if position >= len(data) or not data[position:position + 1].isspace():
        raise FormatError(f"Cabeçalho sem separador final em {path}.")
    return tokens, position + 1


def _parse_size(tokens, path: str) -> Tuple[int, int]:
    try:
        width, height = int(tokens[0]), int(tokens[1])
    except ValueError as exc:
        raise FormatError(f"Dimensões inválidas em {path}.") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"Dimensões inválidas em {path}: {width}×{height}")
    return width, height


def write_pfm(path: str, array: np.ndarray) -> None:
    """
    PFM little-endian (escala -1.0), linhas gravadas de baixo para cima.

    :param array: H×W (Pf) ou H×W×3 (PF)
    """
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 2:
        kind = b'Pf'
    elif array.ndim == 3 and array.shape[2] == 3:
        kind = b'PF'
    else:
        raise FormatError(f"PFM exige H×W ou H×W×3, recebeu {array.shape}")
    height, width = array.shape[:2]
    header = kind + b'\n' + f"{width} {height}\n".encode('ascii') + b'-1.0\n'
    body = np.ascontiguousarray(array[::-1].astype('<f4')).tobytes()
    atomic_write_bytes(path, header + body)


def read_pfm(path: str) -> np.ndarray:
    data = _read_bytes(path)
    tokens, offset = _tokens(data, 4, path)
    kind = tokens[0]
    if kind not in (b'PF', b'Pf'):
        raise FormatError(f"Assinatura PFM inválida em {path}: {kind!r}")
    width, height = _parse_size(tokens[1:3], path)
    try:
        scale = float(tokens[3])
    except ValueError as exc:
        raise FormatError(f"Escala PFM inválida em {path}.") from exc
    if scale == 0.0:
        raise FormatError(f"Escala PFM nula em {path}.")
    channels = 3 if kind == b'PF' else 1
    dtype = '<f4' if scale < 0 else '>f4'
    expected = width * height * channels * 4
    if len(data) - offset < expected:
        raise FormatError(f"Dados PFM truncados em {path}.")
    values = np.frombuffer(data, dtype=dtype, count=width * height * channels, offset=offset)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return values.reshape(shape)[::-1].astype(np.float64)


def _write_netpbm(path: str, magic: bytes, pixels: np.ndarray) -> None:
    height, width = pixels.shape[:2]
    header = magic + b'\n' + f"{width} {height}\n255\n".encode('ascii')
    atomic_write_bytes(path, header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def _read_netpbm(path: str, magic: bytes, channels: int) -> np.ndarray:
    data = _read_bytes(path)
    tokens, offset = _tokens(data, 4, path)
    if tokens[0] != magic:
        raise FormatError(f"Assinatura {magic.decode()} esperada em {path}, encontrada {tokens[0]!r}")
    width, height = _parse_size(tokens[1:3], path)
    if tokens[3] != b'255':
        raise FormatError(f"Apenas maxval 255 é suportado ({path}).")
    count = width * height * channels
    if len(data) - offset < count:
        raise FormatError(f"Dados truncados em {path}.")
    pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return pixels.reshape(shape).astype(np.float64) / 255.0


def write_ppm(path: str, image: np.ndarray) -> None:
    """
    :param image: H×W×3 com valores em [0, 1]
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(f"PPM exige H×W×3, recebeu {image.shape}")
    _write_netpbm(path, b'P6', np.round(np.clip(image, 0.0, 1.0) * 255.0))


def read_ppm(path: str) -> np.ndarray:
    return _read_netpbm(path, b'P6', 3)


def write_pgm(path: str, mask: np.ndarray) -> None:
    """
    Máscara binária: 255 onde mask >= 0.5, senão 0.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise FormatError(f"PGM exige H×W, recebeu {mask.shape}")
    _write_netpbm(path, b'P5', np.where(mask >= 0.5, 255, 0))


def read_pgm(path: str) -> np.ndarray:
    return _read_netpbm(path, b'P5', 1)
