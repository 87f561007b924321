"""
Modelos del reporte de costo: por capa, por resolución y comparaciones entre redes.
"""
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

STEM_BUCKET = "stem"
HEAD_BUCKET = "head"


def resolution_label(scale: int) -> str:
    return f"1/{scale}"


class LayerCostRecord(BaseModel):
    """Parámetros y MACs de una capa a una resolución de entrada concreta."""
    name: str
    kind: str
    bucket: str
    params: int = Field(..., ge=0)
    macs: int = Field(..., ge=0)
    aux_ops: int = Field(0, ge=0, description="Operaciones de batchnorm/relu/add/upsample")
    input_extents: Tuple[int, int]
    output_extents: Tuple[int, int]


class ResolutionShare(BaseModel):
    """Agregado de un bucket (stem, 1/4, 1/8, ..., head)."""
    bucket: str
    params: int = 0
    macs: int = 0
    aux_ops: int = 0
    share: float = Field(0.0, description="Porcentaje de los MACs totales")
    branch_share: Optional[float] = Field(
        None, description="Porcentaje entre ramas (sin stem ni head)"
    )


class CostReport(BaseModel):
    """Contabilidad completa de una red para unas extensiones de entrada."""
    network: str
    input_extents: Tuple[int, int]
    layers: List[LayerCostRecord]
    resolutions: List[ResolutionShare]
    total_params: int
    total_macs: int
    total_aux_ops: int
    flop_convention: str = "FLOPs = 2 * MACs"
    gflops: float
    spread: Optional[float] = Field(None, description="max/min de las participaciones por rama")

    def branch_shares(self) -> Dict[str, float]:
        return {r.bucket: r.branch_share for r in self.resolutions if r.branch_share is not None}

    def shares(self) -> Dict[str, float]:
        return {r.bucket: r.share for r in self.resolutions}


class ScalingEntry(BaseModel):
    input_size: int
    total_macs: int
    ratio: float = Field(..., description="MACs relativos al primer tamaño")


class DistributionComparison(BaseModel):
    """Resultado de comparar la uniformidad de dos distribuciones de costo."""
    network_a: str
    network_b: str
    input_extents: Tuple[int, int]
    shares_a: Dict[str, float]
    shares_b: Dict[str, float]
    spread_a: float
    spread_b: float
    improvement: float
    required_improvement: float
    monotonic_a: bool
    passed: bool

    def failed_conditions(self) -> List[str]:
        """Condiciones de la comparación que no se cumplen (vacía si passed)."""
        failures = []
        if not self.monotonic_a:
            failures.append(f"las participaciones de {self.network_a} no decrecen de 1/4 a 1/32")
        if self.improvement < self.required_improvement:
            failures.append(
                f"{self.network_b} no es {self.required_improvement:g} veces más uniforme que "
                f"{self.network_a} (mejora {self.improvement:.3f})"
            )
        return failures
