"""
Servicio de poses: decodificación, verificación de gradientes y evaluación sintética.
"""
import logging
from typing import List, Optional

import numpy as np

from app.config.settings import settings
from app.core.exceptions import ShapeError, ValidationException
from app.models.pose import DecoderConfig, EvaluationReport, GradientCheckReport, PoseSet
from app.pose.decoder import decode
from app.pose.gradcheck import run_gradient_suite
from app.pose.synth import Scene, evaluate_decoder, sample_scene

logger = logging.getLogger(__name__)


class PoseService:
    """Operaciones del lado de poses expuestas a la CLI y a la API."""

    def decode(self, heatmaps: np.ndarray, tagmaps: np.ndarray, config: Optional[DecoderConfig] = None) -> PoseSet:
        """
        Decodifica heatmaps y tagmaps en un PoseSet.

        Raises:
            ShapeError: Si los mapas no tienen la misma forma
        """
        if np.shape(heatmaps) != np.shape(tagmaps):
            raise ShapeError(
                "heatmaps y tagmaps deben tener la misma forma",
                {"heatmaps": list(np.shape(heatmaps)), "tagmaps": list(np.shape(tagmaps))},
            )
        poses = decode(heatmaps, tagmaps, config)
        logger.info(f"Decodificadas {poses.num_instances} instancias")
        return poses

    def loss_check(self, seed: int = 0, trials: int = 20) -> GradientCheckReport:
        if trials < 1:
            raise ValidationException("Se requiere al menos un ensayo", {"trials": trials})
        logger.info(f"Verificando gradientes: semilla {seed}, {trials} ensayos")
        return run_gradient_suite(seed=seed, trials=trials)

    def sample_scenes(
        self,
        seed: int,
        count: int,
        persons: int,
        num_keypoints: int = 17,
        extents: int = 64,
        min_separation: float = 8.0,
        tag_spread: float = 0.0,
    ) -> List[Scene]:
        """Escenas con semillas seed, seed+1, ..., seed+count-1."""
        if count < 1:
            raise ValidationException("Se requiere al menos una escena", {"scenes": count})
        return [
            sample_scene(
                seed + i, num_keypoints, (extents, extents), persons,
                min_separation=min_separation, tag_spread=tag_spread,
            )
            for i in range(count)
        ]

    def synth_eval(
        self,
        seed: int = 0,
        scenes: int = 10,
        persons: int = 2,
        noise: float = 0.0,
        tag_jitter: float = 0.0,
        num_keypoints: int = 17,
        extents: int = 64,
        use_oracle: bool = False,
        config: Optional[DecoderConfig] = None,
    ) -> EvaluationReport:
        """Genera escenas sintéticas y evalúa el decodificador sobre sus mapas de ground truth."""
        logger.info(f"Evaluación sintética: {scenes} escenas, {persons} personas, ruido {noise}")
        batch = self.sample_scenes(seed, scenes, persons, num_keypoints, extents)
        return evaluate_decoder(
            batch, config, noise=noise, tag_jitter=tag_jitter, seed=seed,
            use_oracle=use_oracle, workers=settings.evaluation_workers,
        )
