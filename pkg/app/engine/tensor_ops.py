"""
Kernels densos deterministas (float32, NCHW) para ejecutar todas las capas de la red.

Cada kernel acumula por desplazamiento de kernel (kh, kw) en un orden fijo, de modo que
llamadas repetidas con la misma entrada son idénticas bit a bit.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from app.core.exceptions import NonFiniteError, ShapeError, ValidationException

logger = logging.getLogger(__name__)

Tensor = np.ndarray
IntPair = Union[int, Tuple[int, int]]


def _pair(value: IntPair) -> Tuple[int, int]:
    if isinstance(value, (tuple, list)):
        if len(value) != 2:
            raise ValidationException(f"Se esperaba un par de enteros, se recibió {value}")
        return int(value[0]), int(value[1])
    return int(value), int(value)


@dataclass(frozen=True)
class ConvParams:
    """Pesos y geometría de una convolución (estándar, depthwise o transpuesta)."""
    weights: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: IntPair = 1
    padding: IntPair = 0
    groups: int = 1
    output_padding: IntPair = 0

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float32))
        if self.bias is not None:
            object.__setattr__(self, "bias", np.asarray(self.bias, dtype=np.float32))
        stride = _pair(self.stride)
        padding = _pair(self.padding)
        output_padding = _pair(self.output_padding)
        if self.weights.ndim != 4:
            raise ShapeError("Los pesos deben tener rango 4", {"shape": list(self.weights.shape)})
        if stride[0] < 1 or stride[1] < 1:
            raise ValidationException("El stride debe ser positivo", {"stride": list(stride)})
        if stride[0] != stride[1]:
            raise ValidationException("No se admiten strides asimétricos", {"stride": list(stride)})
        if min(padding) < 0 or min(output_padding) < 0:
            raise ValidationException("El padding no puede ser negativo")
        if self.groups < 1:
            raise ValidationException("groups debe ser positivo", {"groups": self.groups})
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "padding", padding)
        object.__setattr__(self, "output_padding", output_padding)

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return int(self.weights.shape[2]), int(self.weights.shape[3])


@dataclass(frozen=True)
class BatchNormParams:
    """Estadísticas y afinidad de una batchnorm en modo inferencia."""
    mean: np.ndarray
    variance: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("mean", "variance", "scale", "shift"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float32).reshape(-1))
        lengths = {len(self.mean), len(self.variance), len(self.scale), len(self.shift)}
        if len(lengths) != 1:
            raise ShapeError("Los vectores de batchnorm tienen longitudes distintas")
        if np.any(self.variance < 0):
            raise ValidationException("La varianza no puede ser negativa")
        if self.epsilon < 0 or np.any(self.variance + self.epsilon <= 0):
            raise ValidationException("variance + epsilon debe ser positivo", {"epsilon": self.epsilon})

    @property
    def channels(self) -> int:
        return len(self.mean)

    @classmethod
    def identity(cls, channels: int, epsilon: float = 1e-5) -> "BatchNormParams":
        return cls(
            mean=np.zeros(channels, np.float32),
            variance=np.ones(channels, np.float32),
            scale=np.ones(channels, np.float32),
            shift=np.zeros(channels, np.float32),
            epsilon=epsilon,
        )


def as_tensor(x) -> Tensor:
    """Convierte la entrada a un tensor float32 contiguo de rango 4."""
    array = np.ascontiguousarray(x, dtype=np.float32)
    if array.ndim != 4:
        raise ShapeError("Se esperaba un tensor NCHW de rango 4", {"shape": list(array.shape)})
    return array


def _ensure_finite(out: Tensor, op: str) -> Tensor:
    if not np.isfinite(out).all():
        raise NonFiniteError(f"El kernel {op} produjo valores no finitos", {"op": op})
    return out


def _conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(input: Tensor, params: ConvParams) -> Tensor:
    """
    Convolución 2-D con zero-padding y grupos.

    Args:
        input: Tensor (B, Cin, H, W)
        params: Pesos (Cout, Cin/groups, kH, kW) y geometría

    Returns:
        Tensor (B, Cout, Hout, Wout)

    Raises:
        ShapeError: Si los canales no coinciden o la salida queda vacía
        NonFiniteError: Si el resultado contiene NaN/Inf
    """
    x = as_tensor(input)
    w = params.weights
    batch, channels, height, width = x.shape
    out_channels, group_in, kh, kw = w.shape
    groups = params.groups

    if channels != group_in * groups:
        raise ShapeError(
            "Los canales de entrada no coinciden con los pesos",
            {"input_channels": channels, "weights": list(w.shape), "groups": groups},
        )
    if out_channels % groups:
        raise ShapeError("Los canales de salida no son divisibles por groups", {"groups": groups})

    stride = params.stride[0]
    ph, pw = params.padding
    out_h = _conv_output_extent(height, kh, stride, ph)
    out_w = _conv_output_extent(width, kw, stride, pw)
    if out_h < 1 or out_w < 1:
        raise ShapeError("El kernel no cabe en la entrada", {"input": [height, width], "kernel": [kh, kw]})

    if groups == channels and group_in == 1 and out_channels == channels:
        out = _depthwise(x, w, stride, (ph, pw), out_h, out_w)
    else:
        padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        out = np.zeros((batch, out_channels, out_h, out_w), dtype=np.float32)
        group_out = out_channels // groups
        span_h = stride * (out_h - 1) + 1
        span_w = stride * (out_w - 1) + 1
        for g in range(groups):
            xs = padded[:, g * group_in:(g + 1) * group_in]
            ws = w[g * group_out:(g + 1) * group_out]
            acc = out[:, g * group_out:(g + 1) * group_out]
            for i in range(kh):
                for j in range(kw):
                    patch = xs[:, :, i:i + span_h:stride, j:j + span_w:stride]
                    patch = patch.reshape(batch, group_in, out_h * out_w)
                    acc += (ws[:, :, i, j] @ patch).reshape(batch, group_out, out_h, out_w)

    if params.bias is not None:
        out += params.bias.reshape(1, -1, 1, 1)
    return _ensure_finite(out, "conv2d")


def _depthwise(x: Tensor, w: np.ndarray, stride: int, padding: Tuple[int, int], out_h: int, out_w: int) -> Tensor:
    batch, channels = x.shape[:2]
    ph, pw = padding
    kh, kw = w.shape[2:]
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((batch, channels, out_h, out_w), dtype=np.float32)
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1
    for i in range(kh):
        for j in range(kw):
            tap = w[:, 0, i, j].reshape(1, channels, 1, 1)
            out += tap * padded[:, :, i:i + span_h:stride, j:j + span_w:stride]
    return out


def depthwise_conv2d(input: Tensor, params: ConvParams) -> Tensor:
    """
    Convolución depthwise: un kernel por canal, groups = canales.

    Raises:
        ShapeError: Si groups o los pesos no corresponden a un caso depthwise
    """
    x = as_tensor(input)
    channels = x.shape[1]
    out_channels, group_in = params.weights.shape[:2]
    if params.groups != channels or group_in != 1 or out_channels != channels:
        raise ShapeError(
            "depthwise_conv2d requiere groups = canales y un kernel por canal",
            {"channels": channels, "groups": params.groups, "weights": list(params.weights.shape)},
        )
    return conv2d(x, params)


def conv_transpose2d(input: Tensor, params: ConvParams) -> Tensor:
    """
    Convolución transpuesta (deconvolución), adjunta de conv2d con los mismos parámetros.

    Los pesos tienen forma (Cin, Cout/groups, kH, kW), es decir, la misma matriz que la
    conv2d cuyo adjunto se calcula.

    Raises:
        ShapeError: Si la combinación stride/kernel/padding no es válida
    """
    y = as_tensor(input)
    w = params.weights
    batch, channels, height, width = y.shape
    in_channels, group_out, kh, kw = w.shape
    groups = params.groups
    stride = params.stride[0]
    ph, pw = params.padding
    oph, opw = params.output_padding

    if channels != in_channels or in_channels % groups:
        raise ShapeError(
            "Los canales de entrada no coinciden con los pesos de la deconvolución",
            {"input_channels": channels, "weights": list(w.shape), "groups": groups},
        )
    if oph >= stride or opw >= stride:
        raise ShapeError("output_padding debe ser menor que el stride", {"stride": stride})

    out_h = (height - 1) * stride - 2 * ph + kh + oph
    out_w = (width - 1) * stride - 2 * pw + kw + opw
    if out_h < 1 or out_w < 1:
        raise ShapeError("Combinación de stride/kernel inválida", {"output": [out_h, out_w]})

    full = np.zeros(
        (batch, group_out * groups, (height - 1) * stride + kh + oph, (width - 1) * stride + kw + opw),
        dtype=np.float32,
    )
    group_in = in_channels // groups
    span_h = stride * (height - 1) + 1
    span_w = stride * (width - 1) + 1
    for g in range(groups):
        ys = y[:, g * group_in:(g + 1) * group_in].reshape(batch, group_in, height * width)
        ws = w[g * group_in:(g + 1) * group_in]
        target = full[:, g * group_out:(g + 1) * group_out]
        for i in range(kh):
            for j in range(kw):
                contribution = (ws[:, :, i, j].T @ ys).reshape(batch, group_out, height, width)
                target[:, :, i:i + span_h:stride, j:j + span_w:stride] += contribution

    out = np.ascontiguousarray(full[:, :, ph:ph + out_h, pw:pw + out_w])
    if params.bias is not None:
        out += params.bias.reshape(1, -1, 1, 1)
    return _ensure_finite(out, "conv_transpose2d")


def batchnorm_infer(input: Tensor, params: BatchNormParams) -> Tensor:
    """y = (x - mean) / sqrt(var + eps) * scale + shift, por canal."""
    x = as_tensor(input)
    if x.shape[1] != params.channels:
        raise ShapeError(
            "Los canales no coinciden con la batchnorm",
            {"input_channels": x.shape[1], "bn_channels": params.channels},
        )
    shape = (1, -1, 1, 1)
    inv_std = (1.0 / np.sqrt(params.variance + np.float32(params.epsilon))).astype(np.float32)
    out = (x - params.mean.reshape(shape)) * inv_std.reshape(shape) * params.scale.reshape(shape)
    out = out + params.shift.reshape(shape)
    return _ensure_finite(out.astype(np.float32, copy=False), "batchnorm")


def fold_batchnorm(conv: ConvParams, bn: BatchNormParams) -> ConvParams:
    """
    Funde una batchnorm de inferencia en la convolución que la precede.

    Returns:
        ConvParams con pesos y bias equivalentes a conv seguida de bn
    """
    if conv.weights.shape[0] != bn.channels:
        raise ShapeError("La batchnorm no coincide con los canales de salida de la convolución")
    factor = bn.scale / np.sqrt(bn.variance + np.float32(bn.epsilon))
    bias = conv.bias if conv.bias is not None else np.zeros(bn.channels, np.float32)
    return ConvParams(
        weights=conv.weights * factor.reshape(-1, 1, 1, 1),
        bias=(bias - bn.mean) * factor + bn.shift,
        stride=conv.stride,
        padding=conv.padding,
        groups=conv.groups,
    )


def relu(input: Tensor) -> Tensor:
    x = as_tensor(input)
    return _ensure_finite(np.maximum(x, np.float32(0.0)), "relu")


def add(a: Tensor, b: Tensor) -> Tensor:
    x, y = as_tensor(a), as_tensor(b)
    if x.shape != y.shape:
        raise ShapeError("add requiere formas idénticas", {"a": list(x.shape), "b": list(y.shape)})
    return _ensure_finite(x + y, "add")


def upsample_nearest(input: Tensor, factor: int = 2) -> Tensor:
    """Replica cada píxel factor×factor."""
    if int(factor) != factor or factor < 1:
        raise ValidationException("El factor de upsample debe ser un entero positivo", {"factor": factor})
    x = as_tensor(input)
    factor = int(factor)
    return _ensure_finite(np.repeat(np.repeat(x, factor, axis=2), factor, axis=3), "upsample_nearest")


_ELEMENTWISE = {"relu": relu, "add": add, "upsample_nearest": upsample_nearest}


def elementwise(kind: str, *inputs, **kwargs) -> Tensor:
    """
    Despacha las operaciones elemento a elemento por nombre.

    Args:
        kind: relu | add | upsample_nearest
        inputs: Tensores de entrada
        kwargs: factor para upsample_nearest
    """
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ValidationException(f"Operación elementwise desconocida: {kind}")
    return op(*inputs, **kwargs)
