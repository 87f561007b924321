"""
Router principal de la API v1.
"""
from fastapi import APIRouter

from app.api.v1.endpoints import networks, poses, synthetic

# Router principal de la API
api_router = APIRouter()

# Incluir todos los endpoints
api_router.include_router(
    networks.router,
    prefix="/networks",
    tags=["Networks"]
)

api_router.include_router(
    poses.router,
    prefix="/poses",
    tags=["Poses"]
)

api_router.include_router(
    synthetic.router,
    prefix="/synthetic",
    tags=["Synthetic"]
)
