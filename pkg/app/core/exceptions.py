"""
Excepciones personalizadas para la librería y el servicio BHRNet.
"""
from fastapi import HTTPException
from typing import Optional, Dict, Any


class BHRNetException(Exception):
    """Excepción base para todo el paquete."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


class ShapeError(BHRNetException):
    """Extensiones, canales o rangos incompatibles."""
    pass


class NonFiniteError(BHRNetException):
    """Un kernel produjo NaN o Inf."""
    pass


class ConfigurationError(BHRNetException):
    """Configuración de red inválida o inexistente."""
    pass


class TensorFileError(BHRNetException):
    """Errores de formato en archivos BHRW / BHRT."""
    pass


class LossError(BHRNetException):
    """Pérdida indefinida para la entrada dada."""
    pass


class PlacementError(BHRNetException):
    """No se pudo colocar una escena sintética."""
    pass


class SearchSpaceError(BHRNetException):
    """El oráculo exhaustivo excede su espacio de búsqueda."""
    pass


class ValidationException(BHRNetException):
    """Excepción para errores de validación."""
    pass


class CheckFailure(BHRNetException):
    """Una verificación numérica (loss-check, compare-dist) no se cumplió."""
    pass


def create_http_exception(
    status_code: int,
    message: str,
    details: Optional[Dict[str, Any]] = None
) -> HTTPException:
    """
    Crea una HTTPException con formato estándar.

    Args:
        status_code: Código de estado HTTP
        message: Mensaje de error
        details: Detalles adicionales del error

    Returns:
        HTTPException configurada
    """
    detail = {"message": message}
    if details:
        detail["details"] = details

    return HTTPException(status_code=status_code, detail=detail)


def to_http_exception(error: BHRNetException, status_code: int = 400) -> HTTPException:
    """Traduce una excepción de la librería al formato estándar de la API."""
    return create_http_exception(status_code, error.message, jsonable_details(error.details))


def jsonable_details(details: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value if isinstance(value, (str, int, float, bool, list, dict, type(None))) else str(value)
            for key, value in details.items()}
