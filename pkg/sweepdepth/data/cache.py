import json
import base64
import logging
from typing import Any, Callable, Optional

import numpy as np
import redis

from sweepdepth.config import settings
from sweepdepth.utils.helpers import array_digest

logger = logging.getLogger(__name__)

KEY_PREFIX = 'sweepdepth'


class EstimateCache:
    """
    Cache de passes do estimador em Redis. Falhas nunca interrompem o pipeline:
    são registradas e tratadas como ausência no cache.
    """
    _instance = None

    def __new__(cls):
        """
        Implementação de Singleton para garantir uma única conexão com o Redis.
        """
        if not cls._instance:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """
        Conecta usando REDIS_URL; sem ela o cache fica desativado.
        """
        if hasattr(self, 'initialized'):
            return

        redis_url = settings.redis_url
        if not redis_url:
            logger.warning("REDIS_URL não configurada. O cache será desativado.")
            self.client = None
            self.initialized = True
            return

        try:
            self.client = redis.from_url(
                redis_url,
                decode_responses=True,
                socket_timeout=5,
                socket_connect_timeout=5
            )
            self.client.ping()
            logger.info("Conexão com Redis estabelecida com sucesso.")
            self.initialized = True
        except Exception as e:
            logger.error(f"Erro ao conectar com Redis: {e}")
            self.client = None
            self.initialized = True

    @property
    def enabled(self) -> bool:
        return self.client is not None

    def set_array(self, key: str, array: np.ndarray, expire: Optional[int] = None) -> bool:
        """
        Armazena um array float64 (forma + bytes em base64, dentro de um JSON).

        :param key: Chave para armazenar
        :param array: Array a ser armazenado
        :param expire: Tempo de expiração em segundos (opcional)
        :return: Sucesso da operação
        """
        if not self.client:
            return False

        try:
            contiguous = np.ascontiguousarray(array, dtype=np.float64)
            payload = json.dumps({
                'shape': list(contiguous.shape),
                'data': base64.b64encode(contiguous.astype('<f8').tobytes()).decode('ascii'),
            })
            if expire:
                return bool(self.client.setex(key, expire, payload))
            return bool(self.client.set(key, payload))
        except Exception as e:
            logger.error(f"Erro ao definir valor no cache: {e}")
            return False

    def get_array(self, key: str) -> Optional[np.ndarray]:
        """
        :return: Array armazenado ou None
        """
        if not self.client:
            return None

        try:
            value = self.client.get(key)
            if not value:
                return None
            payload = json.loads(value)
            raw = base64.b64decode(payload['data'])
            return np.frombuffer(raw, dtype='<f8').reshape(payload['shape']).astype(np.float64)
        except Exception as e:
            logger.error(f"Erro ao recuperar valor do cache: {e}")
            return None

    def delete(self, key: str) -> bool:
        if not self.client:
            return False

        try:
            return self.client.delete(key) > 0
        except Exception as e:
            logger.error(f"Erro ao deletar chave do cache: {e}")
            return False

    def clear(self) -> bool:
        """
        Remove apenas as chaves deste pacote.
        """
        if not self.client:
            return False

        try:
            for key in self.client.scan_iter(match=f"{KEY_PREFIX}:*"):
                self.client.delete(key)
            return True
        except Exception as e:
            logger.error(f"Erro ao limpar o cache: {e}")
            return False


def _fingerprint(argument: Any) -> Any:
    if isinstance(argument, np.ndarray):
        return array_digest(argument)
    return argument


class CachedEstimator:
    """
    Envolve um estimador (de profundidade ou disparidade) e memoriza cada passe
    pela combinação do conteúdo da imagem com o segundo argumento.
    """

    def __init__(self, estimator: Callable[[np.ndarray, Any], np.ndarray], namespace: str,
                 cache: Optional[EstimateCache] = None):
        self.estimator = estimator
        self.namespace = namespace
        self.cache = cache if cache is not None else EstimateCache()

    def key(self, image: np.ndarray, argument: Any) -> str:
        image = np.asarray(image, dtype=np.float64)
        return f"{KEY_PREFIX}:{self.namespace}:{array_digest(image, _fingerprint(argument))}"

    def __call__(self, image: np.ndarray, argument: Any) -> np.ndarray:
        key = self.key(image, argument)
        cached = self.cache.get_array(key)
        if cached is not None:
            logger.debug(f"Cache hit: {key}")
            return cached
        result = np.asarray(self.estimator(image, argument), dtype=np.float64)
        self.cache.set_array(key, result)
        return result
