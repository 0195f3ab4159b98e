import os
import logging
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_configured = False


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configura o logger raiz uma única vez.

    :param level: Nome do nível (ex.: "DEBUG"); se omitido usa AQUA_LOG_LEVEL ou INFO
    """
    global _configured
    if _configured:
        return

    level_name = (level or os.getenv('AQUA_LOG_LEVEL') or 'INFO').upper()
    numeric_level = getattr(logging, level_name, None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    logging.basicConfig(level=numeric_level, format=LOG_FORMAT)
    _configured = True
