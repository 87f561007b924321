"""
Endpoints de redes: configuraciones disponibles, reportes de costo y comparación.
"""
import logging
from typing import Optional

from fastapi import APIRouter, Depends, Query
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import PlainTextResponse

from app.api.deps import get_network_service, get_report_service
from app.config.settings import settings
from app.core.exceptions import BHRNetException, to_http_exception
from app.models.cost import CostReport, DistributionComparison
from app.models.schemas import BlockSuggestionResponse, NetworkListResponse
from app.services.network_service import NetworkService
from app.services.report_service import ReportService

logger = logging.getLogger(__name__)
router = APIRouter()


def _input_size():
    return Query(
        None,
        ge=32,
        le=settings.max_api_input_size,
        description="Lado de la imagen cuadrada de entrada (por defecto el de settings)",
    )


@router.get("/", response_model=NetworkListResponse)
async def list_networks(
    network_service: NetworkService = Depends(get_network_service),
) -> NetworkListResponse:
    """
    Lista las configuraciones de red resolubles por nombre.

    Example:
        GET /api/v1/networks/
    """
    return NetworkListResponse(networks=network_service.list_configs())


@router.get("/compare", response_model=DistributionComparison)
async def compare_networks(
    config_a: str = Query("hrnet-32", description="Red de referencia"),
    config_b: str = Query("bhrnet-32", description="Red que debería estar más balanceada"),
    input_size: Optional[int] = _input_size(),
    network_service: NetworkService = Depends(get_network_service),
) -> DistributionComparison:
    """
    Compara la dispersión de las participaciones de costo por resolución.

    Example:
        GET /api/v1/networks/compare?config_a=hrnet-32&config_b=bhrnet-32
    """
    logger.info(f"Comparando distribuciones de {config_a} y {config_b}")
    try:
        return await run_in_threadpool(network_service.compare, config_a, config_b, input_size)
    except BHRNetException as e:
        raise to_http_exception(e)


@router.get("/{name}/cost", response_model=CostReport)
async def get_cost(
    name: str,
    input_size: Optional[int] = _input_size(),
    network_service: NetworkService = Depends(get_network_service),
) -> CostReport:
    """
    Reporte de costo estructurado de una red.

    Example:
        GET /api/v1/networks/bhrnet-32/cost?input_size=384
    """
    logger.info(f"Solicitando costo de {name}")
    try:
        return await run_in_threadpool(network_service.cost, name, input_size)
    except BHRNetException as e:
        raise to_http_exception(e)


@router.get("/{name}/cost.txt", response_class=PlainTextResponse)
async def get_cost_table(
    name: str,
    input_size: Optional[int] = _input_size(),
    network_service: NetworkService = Depends(get_network_service),
    report_service: ReportService = Depends(get_report_service),
) -> str:
    """Reporte de costo como tabla de texto alineada."""
    try:
        report = await run_in_threadpool(network_service.cost, name, input_size)
    except BHRNetException as e:
        raise to_http_exception(e)
    return report_service.cost_table(report)


@router.get("/{name}/blocks", response_model=BlockSuggestionResponse)
async def suggest_blocks(
    name: str,
    input_size: Optional[int] = _input_size(),
    network_service: NetworkService = Depends(get_network_service),
) -> BlockSuggestionResponse:
    """Conteos de bloques sugeridos por el balanceador para la última etapa (solo consultivo)."""
    size = input_size or settings.default_input_size
    try:
        spec = network_service.get_spec(name)
        suggested = await run_in_threadpool(network_service.suggest_blocks, name, size)
    except BHRNetException as e:
        raise to_http_exception(e)
    return BlockSuggestionResponse(
        network=spec.name, input_size=size, configured=spec.stages[-1].blocks, suggested=suggested,
    )
