# app/config/settings.py
import os
from pathlib import Path
from typing import List
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

load_dotenv()

# Configuraciones de red distribuidas con el paquete
PACKAGED_NETWORKS_DIR = Path(__file__).resolve().parent / "networks"


class Settings(BaseSettings):
    """Configuración de la aplicación."""

    # API Configuration
    app_name: str = "BHRNet Pose Service"
    version: str = "1.0.0"
    description: str = "DIR-BHRNet bottom-up pose estimation: cost model, decoder and synthetic checks"

    # Environment
    environment: str = os.getenv("ENVIRONMENT", "production")
    debug: bool = environment == "development"

    # CORS Configuration
    cors_origins: List[str] = [
        "http://localhost:8080",
        "http://127.0.0.1:8080",
    ]

    # Búsqueda de configuraciones de red
    config_dir: str = os.getenv("BHRNET_CONFIG_DIR", "")
    default_input_size: int = 256

    # Pérdida (alpha/beta y sigmas)
    heatmap_sigma: float = 2.0
    tag_push_sigma: float = 1.0
    loss_alpha: float = 0.99
    loss_beta: float = 0.01

    # Decodificador
    detection_threshold: float = 0.1
    join_threshold: float = 1.0
    max_persons: int = 30
    oks_constant: float = 0.1
    match_oks_threshold: float = 0.5

    # Verificaciones numéricas
    gradient_tolerance: float = 1e-4
    finite_difference_step: float = 1e-3
    balance_improvement: float = 2.0

    # Escenas sintéticas
    placement_attempts: int = 1000
    evaluation_workers: int = 1

    # API Limits
    max_api_input_size: int = 1024
    max_api_scenes: int = 500

    # Logging
    log_level: str = "INFO"

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False, extra="ignore")

    def config_search_path(self) -> List[Path]:
        """Directorios donde se buscan configuraciones de red, en orden."""
        paths = []
        if self.config_dir:
            paths.extend(Path(p) for p in self.config_dir.split(os.pathsep) if p)
        paths.append(PACKAGED_NETWORKS_DIR)
        return paths


# Instancia global de configuración
settings = Settings()
