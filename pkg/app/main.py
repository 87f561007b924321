"""
Aplicación FastAPI del servicio BHRNet: reportes de costo, decodificación y verificaciones sintéticas.
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api.v1.router import api_router
from app.config.settings import settings
from app.core.exceptions import BHRNetException, ConfigurationError, jsonable_details
from app.core.logging import configure_logging
from app.engine.network import list_network_configs, load_network_spec

configure_logging()
logger = logging.getLogger(__name__)


def _check_shipped_configs() -> list:
    """Valida cada configuración encontrada; devuelve los nombres que cargan sin error."""
    usable = []
    for name in list_network_configs():
        try:
            spec = load_network_spec(name)
        except ConfigurationError as e:
            logger.warning(f"Configuración {name} ignorada: {e.message}")
            continue
        logger.info(f"Red {spec.name}: {spec.num_stages} etapas, divisor de entrada {spec.input_divisor}")
        usable.append(name)
    return usable


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"Iniciando {settings.app_name} v{settings.version} ({settings.environment})")
    logger.info(f"Ruta de configuraciones: {', '.join(str(p) for p in settings.config_search_path())}")

    app.state.networks = _check_shipped_configs()
    if not app.state.networks:
        logger.warning("No hay configuraciones de red utilizables")

    yield

    logger.info("Cerrando aplicación...")


async def _library_error_handler(request: Request, exc: BHRNetException) -> JSONResponse:
    # Errores de la librería que ningún endpoint tradujo
    logger.error(f"{request.method} {request.url.path}: {exc.message}")
    detail = {"message": exc.message}
    if exc.details:
        detail["details"] = jsonable_details(exc.details)
    return JSONResponse(status_code=400, content={"detail": detail})


def create_app() -> FastAPI:
    """
    Construye la aplicación con CORS, el router v1 y el manejador de errores de la librería.

    Returns:
        FastAPI: Aplicación configurada
    """
    app = FastAPI(
        title=settings.app_name,
        version=settings.version,
        description=settings.description,
        debug=settings.debug,
        lifespan=lifespan,
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_origins,
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.add_exception_handler(BHRNetException, _library_error_handler)
    app.include_router(api_router, prefix="/api/v1")

    @app.get("/", tags=["Health"])
    async def health_check():
        """Estado del servicio y límites de la API."""
        return {
            "message": f"Welcome to {settings.app_name}!",
            "version": settings.version,
            "status": "healthy",
            "limits": {
                "max_input_size": settings.max_api_input_size,
                "max_scenes": settings.max_api_scenes,
            },
        }

    return app


app = create_app()
