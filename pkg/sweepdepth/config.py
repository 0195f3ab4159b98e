import os
import logging
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

# Carrega variáveis de ambiente
load_dotenv()


class Settings:
    """
    Configurações lidas do ambiente (.env ou variáveis do processo).
    Cada propriedade relê o ambiente, de modo que testes possam alterá-lo.
    """
    _instance = None

    def __new__(cls):
        """
        Implementação de Singleton, como nos serviços do pacote.
        """
        if not cls._instance:
            cls._instance = super().__new__(cls)
        return cls._instance

    @property
    def threads(self) -> int:
        """
        Número de threads para passes do estimador (AQUA_THREADS; 0 = automático).
        """
        raw = os.getenv('AQUA_THREADS', '0').strip() or '0'
        try:
            value = int(raw)
        except ValueError:
            logger.warning(f"AQUA_THREADS inválido ({raw!r}). Usando 1 thread.")
            return 1
        if value < 0:
            logger.warning(f"AQUA_THREADS negativo ({value}). Usando 1 thread.")
            return 1
        if value == 0:
            return os.cpu_count() or 1
        return value

    @property
    def redis_url(self):
        return os.getenv('REDIS_URL')

    @property
    def log_level(self) -> str:
        return os.getenv('AQUA_LOG_LEVEL', 'INFO')

    @property
    def run_slow(self) -> bool:
        return os.getenv('AQUA_RUN_SLOW', '').lower() in ('1', 'true', 'yes')


# Instância global para uso simples
settings = Settings()
