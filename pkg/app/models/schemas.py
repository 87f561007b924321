"""
Modelos Pydantic de peticiones y respuestas de la API.
"""
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.config.settings import settings


class NetworkListResponse(BaseModel):
    """Configuraciones de red disponibles."""
    networks: List[str] = Field(..., description="Nombres de configuración resolubles")

    model_config = ConfigDict(
        json_schema_extra={"example": {"networks": ["bhrnet-25", "bhrnet-32", "hrnet-32"]}}
    )


class SynthEvalRequest(BaseModel):
    """Petición de evaluación del decodificador sobre escenas sintéticas."""
    seed: int = Field(0, description="Semilla de la primera escena")
    scenes: int = Field(10, ge=1, le=settings.max_api_scenes)
    persons: int = Field(2, ge=1, le=10)
    num_keypoints: int = Field(17, ge=1, le=32)
    extents: int = Field(64, ge=16, le=512)
    noise: float = Field(0.0, ge=0, description="Amplitud del ruido uniforme en heatmaps")
    tag_jitter: float = Field(0.0, ge=0, description="Amplitud del ruido uniforme en tagmaps")
    threshold: float = Field(default_factory=lambda: settings.detection_threshold, ge=0, lt=1)
    join_threshold: float = Field(default_factory=lambda: settings.join_threshold, gt=0)
    use_oracle: bool = False

    model_config = ConfigDict(
        json_schema_extra={
            "example": {"seed": 3, "scenes": 20, "persons": 3, "num_keypoints": 5, "noise": 0.0}
        }
    )


class LossCheckRequest(BaseModel):
    """Petición de la suite de diferencias finitas."""
    seed: int = 0
    trials: int = Field(20, ge=1, le=200)

    model_config = ConfigDict(json_schema_extra={"example": {"seed": 7, "trials": 20}})


class BlockSuggestionResponse(BaseModel):
    network: str
    input_size: int
    configured: List[int]
    suggested: List[int]
    note: Optional[str] = "Los conteos configurados son los usados por la red"
