"""
Endpoints de verificaciones sintéticas: evaluación del decodificador y gradientes.
"""
import logging

from fastapi import APIRouter, Depends
from fastapi.concurrency import run_in_threadpool

from app.api.deps import get_pose_service
from app.core.exceptions import BHRNetException, to_http_exception
from app.models.pose import DecoderConfig, EvaluationReport, GradientCheckReport
from app.models.schemas import LossCheckRequest, SynthEvalRequest
from app.services.pose_service import PoseService

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("/evaluate", response_model=EvaluationReport)
async def evaluate(
    request: SynthEvalRequest,
    pose_service: PoseService = Depends(get_pose_service),
) -> EvaluationReport:
    """
    Evalúa detect_peaks + group_keypoints sobre escenas sintéticas.

    Example:
        POST /api/v1/synthetic/evaluate {"seed": 3, "scenes": 20, "persons": 3}
    """
    logger.info(f"Evaluación sintética solicitada: {request.scenes} escenas")
    config = DecoderConfig(threshold=request.threshold, join_threshold=request.join_threshold)
    try:
        return await run_in_threadpool(
            pose_service.synth_eval,
            seed=request.seed,
            scenes=request.scenes,
            persons=request.persons,
            noise=request.noise,
            tag_jitter=request.tag_jitter,
            num_keypoints=request.num_keypoints,
            extents=request.extents,
            use_oracle=request.use_oracle,
            config=config,
        )
    except BHRNetException as e:
        raise to_http_exception(e)


@router.post("/loss-check", response_model=GradientCheckReport)
async def loss_check(
    request: LossCheckRequest,
    pose_service: PoseService = Depends(get_pose_service),
) -> GradientCheckReport:
    """Ejecuta la suite de diferencias finitas sobre los gradientes de la pérdida."""
    try:
        return await run_in_threadpool(pose_service.loss_check, request.seed, request.trials)
    except BHRNetException as e:
        raise to_http_exception(e)
