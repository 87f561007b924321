"""
Modelos Pydantic del lado de poses: keypoints, instancias, pérdidas y reportes.
"""
import math
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config.settings import settings


class Keypoint(BaseModel):
    """Keypoint en coordenadas de píxel del heatmap."""
    x: float
    y: float
    score: float = Field(1.0, description="Valor del heatmap en el pico")
    tag: Optional[float] = None
    type_index: int = Field(..., ge=0)

    @field_validator("score")
    @classmethod
    def _finite_score(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("score debe ser finito")
        return value

    def pixel(self) -> Tuple[int, int]:
        """(fila, columna) redondeadas al entero más cercano (mitades hacia arriba)."""
        return int(math.floor(self.y + 0.5)), int(math.floor(self.x + 0.5))


class PersonInstance(BaseModel):
    """Una persona: K posiciones opcionales, una por tipo."""
    keypoints: List[Optional[Keypoint]]
    score: float = 0.0

    @model_validator(mode="after")
    def _check_types(self):
        for index, keypoint in enumerate(self.keypoints):
            if keypoint is not None and keypoint.type_index != index:
                raise ValueError(f"El keypoint en la posición {index} declara tipo {keypoint.type_index}")
        return self

    def labeled(self) -> List[Keypoint]:
        return [kp for kp in self.keypoints if kp is not None]

    @property
    def mean_tag(self) -> Optional[float]:
        tags = [kp.tag for kp in self.labeled() if kp.tag is not None]
        return sum(tags) / len(tags) if tags else None


class PoseSet(BaseModel):
    """Conjunto de instancias con K tipos de keypoint."""
    num_keypoints: int = Field(..., gt=0)
    instances: List[PersonInstance] = Field(default_factory=list)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "num_keypoints": 2,
                "instances": [
                    {
                        "score": 0.9,
                        "keypoints": [
                            {"x": 10.0, "y": 12.0, "score": 0.95, "tag": 0.1, "type_index": 0},
                            None,
                        ],
                    }
                ],
            }
        }
    )

    @model_validator(mode="after")
    def _check_instances(self):
        for instance in self.instances:
            if len(instance.keypoints) != self.num_keypoints:
                raise ValueError(
                    f"Cada instancia debe tener {self.num_keypoints} entradas, hay {len(instance.keypoints)}"
                )
        return self

    @property
    def num_instances(self) -> int:
        return len(self.instances)


class LossWeights(BaseModel):
    """Pesos de la pérdida total y sigmas de heatmap / push."""
    alpha: float = Field(0.99, ge=0)
    beta: float = Field(0.01, ge=0)
    heatmap_sigma: float = Field(2.0, gt=0)
    push_sigma: float = Field(1.0, gt=0)

    @classmethod
    def from_settings(cls) -> "LossWeights":
        return cls(
            alpha=settings.loss_alpha,
            beta=settings.loss_beta,
            heatmap_sigma=settings.heatmap_sigma,
            push_sigma=settings.tag_push_sigma,
        )


class LossBreakdown(BaseModel):
    heatmap: float
    pull: float
    push: float
    tag: float
    total: float


class DecoderConfig(BaseModel):
    """Parámetros de detect_peaks + group_keypoints."""
    threshold: float = Field(default_factory=lambda: settings.detection_threshold, ge=0, lt=1)
    join_threshold: float = Field(default_factory=lambda: settings.join_threshold, gt=0)
    max_persons: int = Field(default_factory=lambda: settings.max_persons, gt=0)
    refine: bool = True
    type_order: Optional[List[int]] = None


class EvaluationReport(BaseModel):
    """Resultado de evaluar el decodificador sobre escenas sintéticas."""
    scenes: int
    total: int = Field(..., description="Instancias de ground truth")
    matched: int
    missed: int
    predicted: int = Field(0, description="Instancias decodificadas")
    mean_oks: float
    detection_rate: float
    oracle_agreement: Optional[float] = Field(
        None, description="Fracción de escenas donde el agrupamiento coincide con el oráculo"
    )


class SceneRecord(BaseModel):
    """Forma serializable de una escena; los mapas se vuelven a renderizar al cargarla."""
    seed: int
    extents: Tuple[int, int]
    heatmap_sigma: float = 2.0
    poses: PoseSet


class GradientCheckReport(BaseModel):
    trials: int
    max_relative_error: float
    worst_trial: int
    tolerance: float
    passed: bool
