"""
Bloques de construcción: Inverted Residual y sus variantes DIR, intercambio
multi-resolución y las dos cabezas (higher y single-conv).

Los pesos se reciben como un Mapping de nombres locales a arrays; la red entrega
vistas prefijadas (PrefixedWeights) de su inventario de parámetros.
"""
import logging
from contextlib import contextmanager
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import NonFiniteError, ShapeError
from app.engine.tensor_ops import (
    BatchNormParams,
    ConvParams,
    Tensor,
    add,
    as_tensor,
    batchnorm_infer,
    conv2d,
    conv_transpose2d,
    relu,
    upsample_nearest,
)
from app.models.network import BlockSpec, HeadKind, HeadSpec, LayerKind, LayerSpec

logger = logging.getLogger(__name__)

BN_EPSILON = 1e-5

Weights = Mapping[str, np.ndarray]


class PrefixedWeights(Mapping):
    """Vista de solo lectura que resuelve nombres locales dentro de un prefijo."""

    def __init__(self, params: Weights, prefix: str):
        self._params = params
        self._prefix = f"{prefix}." if prefix else ""

    def __getitem__(self, key: str) -> np.ndarray:
        return self._params[self._prefix + key]

    def __iter__(self) -> Iterator[str]:
        size = len(self._prefix)
        return (name[size:] for name in self._params if name.startswith(self._prefix))

    def __len__(self) -> int:
        return sum(1 for _ in self)


@contextmanager
def layer_scope(name: str):
    """Antepone `name` a la capa reportada por un NonFiniteError."""
    try:
        yield
    except NonFiniteError as e:
        inner = e.details.get("layer")
        layer = f"{name}.{inner}" if inner else name
        raise NonFiniteError(
            f"Valores no finitos en la capa {layer}",
            {**e.details, "layer": layer},
        ) from e


def read_batchnorm(weights: Weights, name: str) -> BatchNormParams:
    return BatchNormParams(
        mean=weights[f"{name}.mean"],
        variance=weights[f"{name}.var"],
        scale=weights[f"{name}.scale"],
        shift=weights[f"{name}.shift"],
        epsilon=BN_EPSILON,
    )


def conv_bn(
    x: Tensor,
    weights: Weights,
    name: str,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
    activation: bool = True,
) -> Tensor:
    """conv → batchnorm → (relu), con el nombre de la capa en los errores numéricos."""
    with layer_scope(name):
        y = conv2d(x, ConvParams(weights[f"{name}.weight"], stride=stride, padding=padding, groups=groups))
        y = batchnorm_infer(y, read_batchnorm(weights, f"{name}.bn"))
        return relu(y) if activation else y


def check_weights(layers: Sequence[LayerSpec], weights: Weights) -> None:
    """Verifica que todos los parámetros de `layers` existan con la forma esperada."""
    for layer in layers:
        for name, shape in layer.param_shapes().items():
            if name not in weights:
                raise ShapeError(f"Falta el parámetro {name}", {"parameter": name})
            actual = tuple(np.shape(weights[name]))
            if actual != tuple(shape):
                raise ShapeError(
                    f"Forma incorrecta para {name}",
                    {"parameter": name, "expected": list(shape), "actual": list(actual)},
                )


# --------------------------------------------------------------------------
# Inventarios de capas
# --------------------------------------------------------------------------

def _conv(name, cin, cout, kernel=1, stride=1, padding=0, groups=1, scale=1, bias=False, kind=LayerKind.CONV):
    return LayerSpec(
        name=name, kind=kind, in_channels=cin, out_channels=cout, kernel=kernel,
        stride=stride, padding=padding, groups=groups, in_scale=scale, bias=bias,
    )


def _aux(name, kind, channels, scale=1, factor=1):
    return LayerSpec(name=name, kind=kind, in_channels=channels, out_channels=channels, in_scale=scale, factor=factor)


def conv_bn_layers(name, cin, cout, kernel=1, stride=1, padding=0, groups=1, scale=1, activation=True) -> List[LayerSpec]:
    kind = LayerKind.DEPTHWISE if groups > 1 and groups == cin == cout else LayerKind.CONV
    out_scale = scale * stride
    layers = [
        _conv(name, cin, cout, kernel, stride, padding, groups, scale, kind=kind),
        _aux(f"{name}.bn", LayerKind.BATCHNORM, cout, out_scale),
    ]
    if activation:
        layers.append(_aux(f"{name}.relu", LayerKind.RELU, cout, out_scale))
    return layers


def block_layers(spec: BlockSpec) -> List[LayerSpec]:
    """Capas de un bloque IR/DIR en orden de ejecución (escalas relativas a la entrada)."""
    hidden = spec.expanded_channels
    s = spec.stride
    layers = conv_bn_layers("expand", spec.in_channels, hidden)
    for i in range(spec.num_dw):
        layers += conv_bn_layers(
            f"dw{i}", hidden, hidden, kernel=3, stride=s if i == 0 else 1, padding=1,
            groups=hidden, scale=1 if i == 0 else s,
        )
    if spec.has_inner_shortcut:
        layers.append(_aux("inner_add", LayerKind.ADD, hidden, s))
    layers += conv_bn_layers("project", hidden, spec.out_channels, scale=s, activation=False)
    if spec.has_outer_shortcut:
        layers.append(_aux("outer_add", LayerKind.ADD, spec.out_channels, s))
    return layers


def fuse_layers(
    in_channels: Sequence[int],
    out_channels: Optional[Sequence[int]] = None,
    targets: Optional[Sequence[int]] = None,
) -> List[LayerSpec]:
    """Capas del intercambio multi-resolución; la rama i está a escala relativa 2**i."""
    out_channels = list(out_channels or in_channels)
    targets = list(range(len(in_channels))) if targets is None else list(targets)
    layers: List[LayerSpec] = []
    for j in targets:
        for i, cin in enumerate(in_channels):
            key = f"{j}.{i}"
            scale = 2 ** i
            if i == j:
                if cin != out_channels[j]:
                    layers += conv_bn_layers(f"{key}.conv", cin, out_channels[j], scale=scale, activation=False)
            elif i > j:
                layers += conv_bn_layers(f"{key}.conv", cin, out_channels[j], scale=scale, activation=False)
                layers.append(_aux(f"{key}.up", LayerKind.UPSAMPLE, out_channels[j], scale, factor=2 ** (i - j)))
            else:
                steps = j - i
                for t in range(steps):
                    last = t == steps - 1
                    layers += conv_bn_layers(
                        f"{key}.down{t}", cin, out_channels[j] if last else cin, kernel=3, stride=2,
                        padding=1, scale=scale * 2 ** t, activation=not last,
                    )
            if i > 0:
                layers.append(_aux(f"{j}.add{i}", LayerKind.ADD, out_channels[j], 2 ** j))
        layers.append(_aux(f"{j}.relu", LayerKind.RELU, out_channels[j], 2 ** j))
    return layers


def head_layers(spec: HeadSpec, in_channels: int, in_scale: int = 1, width: Optional[int] = None) -> List[LayerSpec]:
    """Capas de la cabeza con escalas absolutas (in_scale es la escala de las features)."""
    out = spec.output_channels
    if spec.kind == HeadKind.SINGLE_CONV:
        return [_conv("final", in_channels, out, kernel=3, padding=1, scale=in_scale, bias=True)]

    hw = width or spec.channels or in_channels
    up = max(in_scale // 2, 1)
    layers = [
        LayerSpec(
            name="deconv", kind=LayerKind.DECONV, in_channels=in_channels, out_channels=hw,
            kernel=4, stride=2, padding=1, in_scale=in_scale,
        ),
        _aux("deconv.bn", LayerKind.BATCHNORM, hw, up),
        _aux("deconv.relu", LayerKind.RELU, hw, up),
    ]
    for r in range(spec.num_residual):
        layers += conv_bn_layers(f"res{r}.conv1", hw, hw, kernel=3, padding=1, scale=up)
        layers += conv_bn_layers(f"res{r}.conv2", hw, hw, kernel=3, padding=1, scale=up, activation=False)
        layers.append(_aux(f"res{r}.add", LayerKind.ADD, hw, up))
        layers.append(_aux(f"res{r}.relu", LayerKind.RELU, hw, up))
    layers.append(_conv("final", hw, out, kernel=1, scale=up, bias=True))
    return layers


def parameter_shapes(layers: Sequence[LayerSpec]) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for layer in layers:
        shapes.update(layer.param_shapes())
    return shapes


# --------------------------------------------------------------------------
# Forward
# --------------------------------------------------------------------------

def block_forward(spec: BlockSpec, weights: Weights, input: Tensor) -> Tensor:
    """
    Ejecuta un bloque IR / IR+DW / IR+SC / DIR.

    expand 1x1 → cadena de num_dw depthwise 3x3 (atajo interno sobre toda la cadena,
    al ancho expandido) → project 1x1 lineal, más el atajo externo cuando aplica.

    Args:
        spec: Descripción del bloque
        weights: Parámetros con nombres locales (expand, dw{i}, project)
        input: Tensor (1, in_channels, H, W)

    Returns:
        Tensor (1, out_channels, H/stride, W/stride)

    Raises:
        ShapeError: Si la entrada o los pesos no corresponden al spec
    """
    x = as_tensor(input)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            "Los canales de entrada no coinciden con el bloque",
            {"expected": spec.in_channels, "actual": x.shape[1]},
        )
    check_weights(block_layers(spec), weights)

    hidden = spec.expanded_channels
    y = conv_bn(x, weights, "expand")
    chain_input = y
    for i in range(spec.num_dw):
        y = conv_bn(y, weights, f"dw{i}", stride=spec.stride if i == 0 else 1, padding=1, groups=hidden)
    if spec.has_inner_shortcut:
        with layer_scope("inner_add"):
            y = add(y, chain_input)
    y = conv_bn(y, weights, "project", activation=False)
    if spec.has_outer_shortcut:
        with layer_scope("outer_add"):
            y = add(y, x)
    return y


def _check_resolution_chain(branch_inputs: Sequence[Tensor]) -> None:
    for i in range(len(branch_inputs) - 1):
        high, low = branch_inputs[i].shape[2:], branch_inputs[i + 1].shape[2:]
        if high[0] != 2 * low[0] or high[1] != 2 * low[1]:
            raise ShapeError(
                "La cadena de resoluciones entre ramas está rota",
                {"branch": i, "high": list(high), "low": list(low)},
            )


def fuse_exchange(
    branch_inputs: Sequence[Tensor],
    weights: Weights,
    out_channels: Optional[Sequence[int]] = None,
    targets: Optional[Sequence[int]] = None,
) -> List[Tensor]:
    """
    Intercambio y fusión entre ramas de resolución 1/4 … 1/2^(s+1).

    Cada salida j es relu(Σ_i T_ij(x_i)): identidad en la misma resolución, 3x3 stride-2
    repetidas de alta a baja, y 1x1 + upsample nearest de baja a alta.

    Args:
        branch_inputs: Tensores por rama, de mayor a menor resolución
        weights: Parámetros con nombres "{j}.{i}.conv" / "{j}.{i}.down{t}"
        out_channels: Canales de salida por rama (por defecto los de entrada)
        targets: Ramas de salida a calcular (por defecto todas)

    Returns:
        Lista de tensores, uno por rama objetivo
    """
    inputs = [as_tensor(x) for x in branch_inputs]
    if not inputs:
        raise ShapeError("fuse_exchange requiere al menos una rama")
    _check_resolution_chain(inputs)
    in_channels = [x.shape[1] for x in inputs]
    out_channels = list(out_channels or in_channels)
    if len(out_channels) != len(inputs):
        raise ShapeError("out_channels no coincide con el número de ramas")
    targets = list(range(len(inputs))) if targets is None else list(targets)
    check_weights(fuse_layers(in_channels, out_channels, targets), weights)

    outputs = []
    for j in targets:
        total = None
        for i, x in enumerate(inputs):
            key = f"{j}.{i}"
            if i == j:
                path = conv_bn(x, weights, f"{key}.conv", activation=False) if in_channels[i] != out_channels[j] else x
            elif i > j:
                path = upsample_nearest(conv_bn(x, weights, f"{key}.conv", activation=False), 2 ** (i - j))
            else:
                path = x
                steps = j - i
                for t in range(steps):
                    path = conv_bn(path, weights, f"{key}.down{t}", stride=2, padding=1, activation=t < steps - 1)
            if total is None:
                total = path
            else:
                with layer_scope(f"{j}.add{i}"):
                    total = add(total, path)
        outputs.append(relu(total))
    return outputs


def head_forward(spec: HeadSpec, weights: Weights, features: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Produce heatmaps y tagmaps a partir de la rama de mayor resolución.

    Returns:
        (heatmaps, tagmaps): canales [0, K) y [K, 2K) de la salida

    Raises:
        ShapeError: Si la salida no tiene 2K canales o los pesos no encajan
    """
    x = as_tensor(features)
    k = spec.num_keypoints
    final = weights["final.weight"]
    if final.shape[0] != spec.output_channels:
        raise ShapeError(
            "La capa final no produce 2K canales",
            {"expected": spec.output_channels, "actual": int(final.shape[0])},
        )

    if spec.kind == HeadKind.SINGLE_CONV:
        check_weights(head_layers(spec, x.shape[1]), weights)
        with layer_scope("final"):
            out = conv2d(x, ConvParams(final, weights["final.bias"], padding=1))
    else:
        width = int(weights["deconv.weight"].shape[1])
        check_weights(head_layers(spec, x.shape[1], width=width), weights)
        with layer_scope("deconv"):
            y = conv_transpose2d(x, ConvParams(weights["deconv.weight"], stride=2, padding=1))
            y = relu(batchnorm_infer(y, read_batchnorm(weights, "deconv.bn")))
        for r in range(spec.num_residual):
            residual = conv_bn(y, weights, f"res{r}.conv1", padding=1)
            residual = conv_bn(residual, weights, f"res{r}.conv2", padding=1, activation=False)
            with layer_scope(f"res{r}.add"):
                y = relu(add(y, residual))
        with layer_scope("final"):
            out = conv2d(y, ConvParams(final, weights["final.bias"]))

    return out[:, :k], out[:, k:]
