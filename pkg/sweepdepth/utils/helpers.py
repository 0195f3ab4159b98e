import os
import csv
import io
import json
import hashlib
import logging
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from sweepdepth.config import settings

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def atomic_write_bytes(path: str, data: bytes) -> None:
    """
    Grava bytes em um arquivo temporário no mesmo diretório e renomeia.

    :param path: Caminho final
    :param data: Conteúdo
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def atomic_write_json(path: str, payload: Any) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + '\n'
    atomic_write_bytes(path, text.encode('utf-8'))


def atomic_write_csv(path: str, rows: Sequence[Dict[str, Any]], fieldnames: Sequence[str]) -> None:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({key: row.get(key, '') for key in fieldnames})
    atomic_write_bytes(path, buffer.getvalue().encode('utf-8'))


def array_digest(array: np.ndarray, *extra: Any) -> str:
    """
    SHA-256 do conteúdo de um array (forma, dtype e bytes) mais parâmetros extras.
    """
    contiguous = np.ascontiguousarray(array)
    digest = hashlib.sha256()
    digest.update(str(contiguous.shape).encode('utf-8'))
    digest.update(str(contiguous.dtype).encode('utf-8'))
    digest.update(contiguous.tobytes())
    for item in extra:
        digest.update(repr(item).encode('utf-8'))
    return digest.hexdigest()


def ordered_map(func: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """
    Aplica func a cada item, em paralelo quando permitido, preservando a ordem.

    :param max_workers: Limite de threads; None usa AQUA_THREADS
    """
    items = list(items)
    workers = settings.threads if max_workers is None else max_workers
    workers = max(1, min(workers, len(items) or 1))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
