"""
Dependencias para los endpoints de la API.
"""
from functools import lru_cache

from app.services.network_service import NetworkService
from app.services.pose_service import PoseService
from app.services.report_service import ReportService


@lru_cache()
def get_network_service() -> NetworkService:
    """
    Obtiene una instancia del servicio de redes.
    Utiliza cache para reutilizar la misma instancia (y sus redes construidas).

    Returns:
        NetworkService: Instancia del servicio
    """
    return NetworkService()


@lru_cache()
def get_pose_service() -> PoseService:
    """
    Obtiene una instancia del servicio de poses.

    Returns:
        PoseService: Instancia del servicio
    """
    return PoseService()


@lru_cache()
def get_report_service() -> ReportService:
    return ReportService()
