"""
Servicio que renderiza los reportes de costo como tablas de texto alineadas.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from app.models.cost import CostReport, DistributionComparison, ScalingEntry

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"


class ReportService:
    """Renderiza CostReport y DistributionComparison con plantillas jinja2."""

    def __init__(self, templates_dir: Path = TEMPLATES_DIR):
        self.env = Environment(
            loader=FileSystemLoader(str(templates_dir)),
            undefined=StrictUndefined,
            keep_trailing_newline=True,
        )
        logger.info(f"Plantillas de reportes cargadas desde {templates_dir}")

    def cost_table(self, report: CostReport, scaling: Optional[Sequence[ScalingEntry]] = None) -> str:
        """
        Tabla por bucket (stem, 1/4, ..., head) con params, MACs, aux ops y porcentajes.

        Args:
            report: Reporte de costo
            scaling: Entradas de escalado opcionales para el pie de la tabla

        Returns:
            str: Tabla de texto
        """
        template = self.env.get_template("cost_report.txt.j2")
        return template.render(report=report, scaling=list(scaling or []))

    def distribution_table(self, comparison: DistributionComparison) -> str:
        """Participaciones por rama de dos redes, lado a lado."""
        buckets: List[str] = list(comparison.shares_a)
        buckets += [b for b in comparison.shares_b if b not in buckets]
        template = self.env.get_template("distribution.txt.j2")
        return template.render(comparison=comparison, buckets=buckets)
