"""
Configuración de logging compartida por la CLI y la aplicación HTTP.
"""
import logging
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: Optional[str] = None) -> None:
    """
    Configura el logging raíz.

    Args:
        level: Nivel de logging (por defecto el de settings)
    """
    from app.config.settings import settings

    level_name = (level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )
