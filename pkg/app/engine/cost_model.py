"""
Modelo analítico de costo: parámetros y MACs por capa, agregados por resolución.

Es una función de la estructura de la red (sus LayerSpec), nunca de los valores de los pesos.
"""
import logging
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, List, Optional, Sequence, Tuple

from app.config.settings import settings
from app.core.exceptions import ShapeError, ValidationException
from app.engine.blocks import block_layers
from app.models.cost import (
    HEAD_BUCKET,
    STEM_BUCKET,
    CostReport,
    DistributionComparison,
    LayerCostRecord,
    ResolutionShare,
    ScalingEntry,
)
from app.models.network import BlockSpec, LayerKind, LayerSpec

if TYPE_CHECKING:
    from app.engine.network import Network

logger = logging.getLogger(__name__)

Extents = Tuple[int, int]


def _conv_extent(size: int, layer: LayerSpec) -> int:
    return (size + 2 * layer.padding - layer.kernel) // layer.stride + 1


def layer_cost(layer: LayerSpec, input_extents: Extents) -> LayerCostRecord:
    """
    Calcula parámetros y MACs de una capa.

    Args:
        layer: Descripción de la capa
        input_extents: (H, W) de la entrada de la capa

    Returns:
        LayerCostRecord con params, MACs y operaciones auxiliares

    Raises:
        ValidationException: Si el tipo de capa es desconocido
    """
    h, w = input_extents
    cin, cout = layer.in_channels, layer.out_channels
    params = macs = aux = 0
    out_h, out_w = h, w

    if layer.kind in (LayerKind.CONV, LayerKind.DEPTHWISE):
        out_h, out_w = _conv_extent(h, layer), _conv_extent(w, layer)
        weights = cout * (cin // layer.groups) * layer.kernel * layer.kernel
        params = weights + (cout if layer.bias else 0)
        macs = out_h * out_w * weights
    elif layer.kind == LayerKind.DECONV:
        s, k, p = layer.stride, layer.kernel, layer.padding
        out_h = (h - 1) * s - 2 * p + k + layer.output_padding
        out_w = (w - 1) * s - 2 * p + k + layer.output_padding
        weights = cin * (cout // layer.groups) * k * k
        params = weights + (cout if layer.bias else 0)
        macs = h * w * weights
    elif layer.kind == LayerKind.BATCHNORM:
        params = 2 * cout
        aux = 2 * h * w * cout
    elif layer.kind in (LayerKind.RELU, LayerKind.ADD):
        aux = h * w * cout
    elif layer.kind == LayerKind.UPSAMPLE:
        out_h, out_w = h * layer.factor, w * layer.factor
        aux = out_h * out_w * cout
    else:
        raise ValidationException(f"Tipo de capa desconocido: {layer.kind}", {"layer": layer.name})

    return LayerCostRecord(
        name=layer.name,
        kind=layer.kind.value,
        bucket=layer.bucket,
        params=params,
        macs=macs,
        aux_ops=aux,
        input_extents=(h, w),
        output_extents=(out_h, out_w),
    )


def depthwise_pair_ratio(channels: int) -> Fraction:
    """Costo del par depthwise 3x3 + 1x1 (C→C) relativo a una 3x3 estándar: 1/9 + 1/C."""
    geometry = dict(in_channels=channels, out_channels=channels, kernel=3, padding=1)
    standard = layer_cost(LayerSpec(name="standard", kind=LayerKind.CONV, **geometry), (1, 1))
    spatial = layer_cost(
        LayerSpec(name="spatial", kind=LayerKind.DEPTHWISE, groups=channels, **geometry), (1, 1)
    )
    channel = layer_cost(
        LayerSpec(name="channel", kind=LayerKind.CONV, in_channels=channels, out_channels=channels), (1, 1)
    )
    return Fraction(spatial.macs + channel.macs, standard.macs)


def block_cost(spec: BlockSpec, input_extents: Extents) -> int:
    """MACs de un bloque a las extensiones dadas."""
    h, w = input_extents
    total = 0
    for layer in block_layers(spec):
        total += layer_cost(layer, (h // layer.in_scale, w // layer.in_scale)).macs
    return total


def _bucket_order(bucket: str) -> Tuple[int, int]:
    if bucket == STEM_BUCKET:
        return (0, 0)
    if bucket == HEAD_BUCKET:
        return (2, 0)
    return (1, int(bucket.split("/")[1]))


def _records(layers: Iterable[LayerSpec], input_extents: Extents) -> List[LayerCostRecord]:
    h, w = input_extents
    records = []
    for layer in layers:
        if h % layer.in_scale or w % layer.in_scale:
            raise ShapeError(
                f"Las extensiones {input_extents} no son divisibles por la escala de {layer.name}",
                {"layer": layer.name, "scale": layer.in_scale},
            )
        records.append(layer_cost(layer, (h // layer.in_scale, w // layer.in_scale)))
    return records


def cost_report(net: "Network", input_extents: Extents) -> CostReport:
    """
    Agrega layer_cost sobre todo el grafo, agrupando por resolución de salida de cada capa.

    Args:
        net: Red construida
        input_extents: (H, W) de la imagen de entrada

    Returns:
        CostReport con stem y head desglosados
    """
    input_extents = (int(input_extents[0]), int(input_extents[1]))
    records = _records(net.layers(), input_extents)

    buckets = {}
    for record in records:
        agg = buckets.setdefault(record.bucket, ResolutionShare(bucket=record.bucket))
        agg.params += record.params
        agg.macs += record.macs
        agg.aux_ops += record.aux_ops

    total_macs = sum(r.macs for r in records)
    branch_macs = sum(b.macs for name, b in buckets.items() if name not in (STEM_BUCKET, HEAD_BUCKET))
    resolutions = sorted(buckets.values(), key=lambda b: _bucket_order(b.bucket))
    for agg in resolutions:
        agg.share = 100.0 * agg.macs / total_macs if total_macs else 0.0
        if agg.bucket not in (STEM_BUCKET, HEAD_BUCKET):
            agg.branch_share = 100.0 * agg.macs / branch_macs if branch_macs else 0.0

    branch = [agg.branch_share for agg in resolutions if agg.branch_share is not None]
    spread = max(branch) / min(branch) if branch and min(branch) > 0 else None

    report = CostReport(
        network=net.spec.name,
        input_extents=input_extents,
        layers=records,
        resolutions=resolutions,
        total_params=sum(r.params for r in records),
        total_macs=total_macs,
        total_aux_ops=sum(r.aux_ops for r in records),
        gflops=2 * total_macs / 1e9,
        spread=spread,
    )
    logger.debug(f"Costo de {report.network} a {input_extents}: {total_macs} MACs, {report.total_params} parámetros")
    return report


def scaling_ratios(net: "Network", sizes: Sequence[int]) -> List[ScalingEntry]:
    """MACs para cada tamaño cuadrado de entrada, relativos al primero."""
    if not sizes:
        raise ValidationException("Se requiere al menos un tamaño de entrada")
    totals = [cost_report(net, (size, size)).total_macs for size in sizes]
    return [
        ScalingEntry(input_size=size, total_macs=total, ratio=float(Fraction(total, totals[0])))
        for size, total in zip(sizes, totals)
    ]


def _is_decreasing(shares: Sequence[float]) -> bool:
    return all(a > b for a, b in zip(shares, shares[1:]))


def compare_distributions(
    report_a: CostReport,
    report_b: CostReport,
    required_improvement: Optional[float] = None,
) -> DistributionComparison:
    """
    Compara la dispersión (max/min) de las participaciones por rama de dos reportes.

    `passed` exige que las participaciones de `report_a` decrezcan de 1/4 a 1/32 y que
    spread_a / spread_b alcance `required_improvement`.
    """
    required = settings.balance_improvement if required_improvement is None else required_improvement
    if report_a.spread is None or report_b.spread is None:
        raise ValidationException("Ambos reportes necesitan al menos una rama con costo")
    improvement = report_a.spread / report_b.spread
    shares_a = report_a.branch_shares()
    monotonic = _is_decreasing(list(shares_a.values()))
    comparison = DistributionComparison(
        network_a=report_a.network,
        network_b=report_b.network,
        input_extents=report_a.input_extents,
        shares_a=shares_a,
        shares_b=report_b.branch_shares(),
        spread_a=report_a.spread,
        spread_b=report_b.spread,
        improvement=improvement,
        required_improvement=required,
        monotonic_a=monotonic,
        passed=monotonic and improvement >= required,
    )
    logger.info(
        f"Dispersión {comparison.network_a}={comparison.spread_a:.3f} "
        f"{comparison.network_b}={comparison.spread_b:.3f} (mejora {improvement:.3f})"
    )
    return comparison
