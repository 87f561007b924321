"""
Endpoints de decodificación de poses.
"""
import logging

from fastapi import APIRouter, Depends, File, Form, UploadFile
from fastapi.concurrency import run_in_threadpool

from app.api.deps import get_pose_service
from app.config.settings import settings
from app.core.exceptions import BHRNetException, to_http_exception
from app.engine.serialization import decode_tensor
from app.models.pose import DecoderConfig, PoseSet
from app.services.pose_service import PoseService

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("/decode", response_model=PoseSet)
async def decode_poses(
    heatmaps: UploadFile = File(..., description="Archivo BHRT con los heatmaps"),
    tagmaps: UploadFile = File(..., description="Archivo BHRT con los tagmaps"),
    threshold: float = Form(settings.detection_threshold),
    join_threshold: float = Form(settings.join_threshold),
    max_persons: int = Form(settings.max_persons),
    pose_service: PoseService = Depends(get_pose_service),
) -> PoseSet:
    """
    Decodifica heatmaps y tagmaps subidos como archivos BHRT.

    Args:
        heatmaps: Archivo BHRT (K, H, W) o (1, K, H, W)
        tagmaps: Archivo BHRT con la misma forma
        threshold: Umbral de detección de picos
        join_threshold: Distancia máxima de tag para agrupar
        max_persons: Máximo de picos por tipo
        pose_service: Servicio de poses inyectado

    Returns:
        PoseSet: Instancias decodificadas

    Example:
        POST /api/v1/poses/decode (multipart: heatmaps, tagmaps)
    """
    logger.info(f"Decodificando {heatmaps.filename} + {tagmaps.filename}")
    try:
        config = DecoderConfig(threshold=threshold, join_threshold=join_threshold, max_persons=max_persons)
    except ValueError as e:
        raise to_http_exception(BHRNetException("Parámetros de decodificación inválidos", {"error": str(e)}), 422)
    try:
        heat = decode_tensor(await heatmaps.read(), heatmaps.filename or "heatmaps")
        tags = decode_tensor(await tagmaps.read(), tagmaps.filename or "tagmaps")
        return await run_in_threadpool(pose_service.decode, heat, tags, config)
    except BHRNetException as e:
        raise to_http_exception(e)
