"""
Constructor de redes DIR-HRNet / DIR-BHRNet.

La red es un grafo acíclico de nodos con nombre (stem, transiciones, bloques, fusiones y
cabeza) que se ejecuta en orden topológico. Tras construirse es inmutable: los parámetros
son arrays de solo lectura y las llamadas concurrentes con entradas distintas son seguras.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.config.settings import settings
from app.core.exceptions import ConfigurationError, ShapeError, ValidationException
from app.engine.blocks import (
    Weights,
    PrefixedWeights,
    block_forward,
    block_layers,
    conv_bn,
    conv_bn_layers,
    fuse_exchange,
    fuse_layers,
    head_forward,
    head_layers,
    layer_scope,
)
from app.engine.cost_model import block_cost
from app.engine.tensor_ops import Tensor, as_tensor
from app.models.cost import HEAD_BUCKET, STEM_BUCKET, resolution_label
from app.models.network import BlockSpec, LayerSpec, NetworkSpec

logger = logging.getLogger(__name__)

InitMode = Literal["zero", "random"]
IMAGE = "image"

NodeFn = Callable[[List[Tensor], Weights], Tensor]


@dataclass(frozen=True)
class Node:
    """Nodo del grafo: consume las salidas de `inputs` y lee sus pesos bajo `scope`."""
    name: str
    inputs: Tuple[str, ...]
    fn: NodeFn
    scope: str
    layers: Tuple[LayerSpec, ...] = ()


@dataclass(frozen=True)
class Network:
    spec: NetworkSpec
    nodes: Tuple[Node, ...]
    params: Mapping[str, np.ndarray] = field(repr=False)
    output: str = "head"

    def __call__(self, image: Tensor) -> Tuple[Tensor, Tensor]:
        return network_forward(self, image)

    def layers(self) -> List[LayerSpec]:
        """Todas las capas con nombres completos, escalas absolutas y bucket de costo."""
        return [layer for node in self.nodes for layer in node.layers]

    def parameter_inventory(self) -> Dict[str, Tuple[int, ...]]:
        inventory: Dict[str, Tuple[int, ...]] = {}
        for layer in self.layers():
            inventory.update(layer.param_shapes())
        return inventory

    def validate_acyclic(self) -> List[str]:
        """
        Verifica que el grafo sea acíclico y que toda entrada esté definida.

        Returns:
            Orden topológico de los nodos

        Raises:
            ConfigurationError: Si hay ciclos o entradas huérfanas
        """
        names = {node.name for node in self.nodes}
        graph = {}
        for node in self.nodes:
            missing = [i for i in node.inputs if i != IMAGE and i not in names]
            if missing:
                raise ConfigurationError(f"El nodo {node.name} usa entradas inexistentes", {"missing": missing})
            graph[node.name] = [i for i in node.inputs if i != IMAGE]
        try:
            return list(TopologicalSorter(graph).static_order())
        except CycleError as e:
            raise ConfigurationError("El grafo de la red contiene un ciclo", {"cycle": list(e.args[1])}) from e

    def with_params(self, params: Mapping[str, np.ndarray]) -> "Network":
        """Copia de la red con otros parámetros, validados contra el inventario."""
        return Network(self.spec, self.nodes, _freeze(_validated(self.parameter_inventory(), params)), self.output)


# --------------------------------------------------------------------------
# Configuraciones
# --------------------------------------------------------------------------

def list_network_configs() -> List[str]:
    names = set()
    for directory in settings.config_search_path():
        if directory.is_dir():
            names.update(p.stem for p in directory.glob("*.json"))
    return sorted(names)


def load_network_spec(name_or_path: Union[str, Path]) -> NetworkSpec:
    """
    Carga una configuración de red por nombre (hrnet-32, bhrnet-32, ...) o por ruta.

    Raises:
        ConfigurationError: Si no existe o no cumple el esquema de NetworkSpec
    """
    candidate = Path(name_or_path)
    if not candidate.is_file():
        candidate = next(
            (d / f"{name_or_path}.json" for d in settings.config_search_path() if (d / f"{name_or_path}.json").is_file()),
            None,
        )
        if candidate is None:
            raise ConfigurationError(
                f"Configuración de red no encontrada: {name_or_path}",
                {"available": list_network_configs()},
            )
    try:
        spec = NetworkSpec.model_validate(json.loads(candidate.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"JSON inválido en {candidate}", {"error": str(e)}) from e
    except ValidationError as e:
        raise ConfigurationError(f"Configuración inválida en {candidate}", {"errors": _validation_messages(e)}) from e
    logger.info(f"Configuración {spec.name} cargada desde {candidate}")
    return spec


def _validation_messages(error: ValidationError) -> List[str]:
    return [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in error.errors()]


def _coerce_spec(spec: Union[NetworkSpec, dict]) -> NetworkSpec:
    if isinstance(spec, NetworkSpec):
        return spec
    try:
        return NetworkSpec.model_validate(spec)
    except ValidationError as e:
        raise ConfigurationError("Especificación de red inválida", {"errors": _validation_messages(e)}) from e


# --------------------------------------------------------------------------
# Balanceo
# --------------------------------------------------------------------------

def balance_block_counts(per_branch_block_cost: Sequence[Union[int, float]]) -> List[int]:
    """
    Número de bloques por rama: n_i = ceil(B / c_i) con B = max_i c_i.

    Raises:
        ValidationException: Si la lista está vacía o contiene costos no positivos
    """
    costs = list(per_branch_block_cost)
    if not costs:
        raise ValidationException("La lista de costos está vacía")
    if any(c <= 0 for c in costs):
        raise ValidationException("Los costos por bloque deben ser positivos", {"costs": costs})
    budget = max(costs)
    if all(isinstance(c, int) for c in costs):
        return [-(-budget // c) for c in costs]
    return [math.ceil(budget / c) for c in costs]


def suggest_block_counts(spec: NetworkSpec, input_size: Optional[int] = None) -> List[int]:
    """Aplica balance_block_counts a la última etapa usando el costo de un bloque por rama."""
    size = input_size or settings.default_input_size
    stage_index = spec.num_stages - 1
    stage = spec.stages[stage_index]
    template = spec.stage_block(stage_index)
    costs = []
    for branch, channels in enumerate(stage.channels):
        extent = size // 2 ** (branch + 2)
        costs.append(block_cost(BlockSpec.from_template(template, channels, channels), (extent, extent)))
    counts = balance_block_counts(costs)
    logger.info(f"Bloques sugeridos para {spec.name}: {counts} (configurados: {stage.blocks})")
    return counts


# --------------------------------------------------------------------------
# Construcción
# --------------------------------------------------------------------------

def _bucketed(layers: Sequence[LayerSpec], scope: str, scale: int, bucket: Optional[str] = None) -> Tuple[LayerSpec, ...]:
    placed = []
    for layer in layers:
        moved = layer.relocated(scope, scale)
        placed.append(moved.model_copy(update={"bucket": bucket or resolution_label(moved.output_scale())}))
    return tuple(placed)


def _stem_fn(inputs: List[Tensor], weights: Weights) -> Tensor:
    x = conv_bn(inputs[0], weights, "conv1", stride=2, padding=1)
    return conv_bn(x, weights, "conv2", stride=2, padding=1)


def _conv_fn(stride: int) -> NodeFn:
    def run(inputs: List[Tensor], weights: Weights) -> Tensor:
        return conv_bn(inputs[0], weights, "conv", stride=stride, padding=1)
    return run


def _block_fn(block: BlockSpec) -> NodeFn:
    def run(inputs: List[Tensor], weights: Weights) -> Tensor:
        return block_forward(block, weights, inputs[0])
    return run


def _fuse_fn(out_channels: List[int], target: int) -> NodeFn:
    def run(inputs: List[Tensor], weights: Weights) -> Tensor:
        return fuse_exchange(inputs, weights, out_channels=out_channels, targets=[target])[0]
    return run


def _head_fn(spec: NetworkSpec) -> NodeFn:
    def run(inputs: List[Tensor], weights: Weights) -> Tensor:
        heatmaps, tagmaps = head_forward(spec.head, weights, inputs[0])
        return np.concatenate([heatmaps, tagmaps], axis=1)
    return run


def _graph_nodes(spec: NetworkSpec) -> List[Node]:
    nodes: List[Node] = []
    sw = spec.stem_width
    stem_layers = (
        conv_bn_layers("conv1", 3, sw, kernel=3, stride=2, padding=1)
        + conv_bn_layers("conv2", sw, sw, kernel=3, stride=2, padding=1, scale=2)
    )
    nodes.append(Node("stem", (IMAGE,), _stem_fn, "stem", _bucketed(stem_layers, "stem", 1, STEM_BUCKET)))

    branches = ["stem"]
    channels = [sw]
    for s, stage in enumerate(spec.stages, start=1):
        template = spec.stage_block(s - 1)

        # transiciones: ajuste de canales o nueva rama a mitad de resolución
        for b, target in enumerate(stage.channels):
            scope = f"stage{s}.transition{b}"
            if b < len(branches):
                if channels[b] == target:
                    continue
                layers = conv_bn_layers("conv", channels[b], target, kernel=3, padding=1)
                nodes.append(Node(scope, (branches[b],), _conv_fn(1), scope, _bucketed(layers, scope, 2 ** (b + 2))))
                branches[b] = scope
            else:
                layers = conv_bn_layers("conv", channels[-1], target, kernel=3, stride=2, padding=1)
                nodes.append(Node(scope, (branches[-1],), _conv_fn(2), scope, _bucketed(layers, scope, 2 ** (b + 1))))
                branches.append(scope)
        channels = list(stage.channels)

        for b, count in enumerate(stage.blocks):
            block = BlockSpec.from_template(template, channels[b], channels[b])
            for k in range(count):
                scope = f"stage{s}.branch{b}.block{k}"
                nodes.append(Node(
                    scope, (branches[b],), _block_fn(block), scope,
                    _bucketed(block_layers(block), scope, 2 ** (b + 2)),
                ))
                branches[b] = scope

        last = s == spec.num_stages
        scope = f"stage{s}.fuse"
        if last:
            out_channels = [spec.output_width] + channels[1:]
            if len(branches) > 1 or out_channels[0] != channels[0]:
                layers = fuse_layers(channels, out_channels, targets=[0])
                nodes.append(Node(
                    f"{scope}0", tuple(branches), _fuse_fn(out_channels, 0), scope,
                    _bucketed(layers, scope, 4),
                ))
                branches = [f"{scope}0"]
        elif len(branches) > 1:
            fused = []
            for j in range(len(branches)):
                layers = fuse_layers(channels, channels, targets=[j])
                nodes.append(Node(
                    f"{scope}{j}", tuple(branches), _fuse_fn(channels, j), scope,
                    _bucketed(layers, scope, 4),
                ))
                fused.append(f"{scope}{j}")
            branches = fused

    head = head_layers(spec.head, spec.output_width, in_scale=4, width=spec.head_width)
    nodes.append(Node("head", (branches[0],), _head_fn(spec), "head", _bucketed(head, "head", 1, HEAD_BUCKET)))
    return nodes


def _inventory(nodes: Sequence[Node]) -> Dict[str, Tuple[int, ...]]:
    inventory: Dict[str, Tuple[int, ...]] = {}
    for node in nodes:
        for layer in node.layers:
            inventory.update(layer.param_shapes())
    return inventory


def initial_params(inventory: Mapping[str, Tuple[int, ...]], init: InitMode = "zero", seed: int = 0) -> Dict[str, np.ndarray]:
    """
    Parámetros iniciales en orden de inventario.

    Batchnorm arranca con estadísticas identidad en ambos modos; las convoluciones quedan en
    cero o siguen una normal escalada por fan-in generada con `seed`.
    """
    if init not in ("zero", "random"):
        raise ValidationException(f"Modo de inicialización desconocido: {init}")
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in inventory.items():
        suffix = name.rsplit(".", 1)[-1]
        if suffix in ("var", "scale"):
            value = np.ones(shape, np.float32)
        elif suffix == "weight" and init == "random":
            fan_in = int(np.prod(shape[1:]))
            value = rng.standard_normal(shape).astype(np.float32) * np.float32(1.0 / math.sqrt(fan_in))
        else:
            value = np.zeros(shape, np.float32)
        params[name] = value
    return params


def _validated(inventory: Mapping[str, Tuple[int, ...]], params: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    missing = sorted(set(inventory) - set(params))
    extra = sorted(set(params) - set(inventory))
    if missing or extra:
        raise ShapeError(
            "Los parámetros no coinciden con el inventario de la red",
            {"missing": missing[:10], "unexpected": extra[:10]},
        )
    checked = {}
    for name, shape in inventory.items():
        value = np.asarray(params[name], dtype=np.float32)
        if value.shape != tuple(shape):
            raise ShapeError(
                f"Forma incorrecta para {name}",
                {"parameter": name, "expected": list(shape), "actual": list(value.shape)},
            )
        checked[name] = value
    return checked


def _freeze(params: Dict[str, np.ndarray]) -> Mapping[str, np.ndarray]:
    frozen = {}
    for name, value in params.items():
        array = np.array(value, dtype=np.float32, copy=True)
        array.setflags(write=False)
        frozen[name] = array
    return MappingProxyType(frozen)


def build_network(
    spec: Union[NetworkSpec, dict],
    init: InitMode = "zero",
    seed: int = 0,
    params: Optional[Mapping[str, np.ndarray]] = None,
) -> Network:
    """
    Construye el grafo de la red y sus parámetros.

    Args:
        spec: NetworkSpec (o dict equivalente)
        init: "zero" o "random" (normal escalada por fan-in, reproducible con `seed`)
        seed: Semilla para la inicialización aleatoria
        params: Parámetros explícitos; si se dan, reemplazan la inicialización

    Returns:
        Network inmutable

    Raises:
        ConfigurationError: Si el spec es inválido
        ShapeError: Si `params` no coincide con el inventario
    """
    spec = _coerce_spec(spec)
    nodes = _graph_nodes(spec)
    inventory = _inventory(nodes)
    values = _validated(inventory, params) if params is not None else initial_params(inventory, init, seed)
    net = Network(spec=spec, nodes=tuple(nodes), params=_freeze(values))
    net.validate_acyclic()
    logger.info(f"Red {spec.name} construida: {len(nodes)} nodos, {len(inventory)} tensores de parámetros")
    return net


def network_forward(net: Network, image: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Ejecuta la red sobre una imagen.

    Args:
        net: Red construida
        image: Tensor (1, 3, H, W) con H y W divisibles por 2^(num_stages+1)

    Returns:
        (heatmaps, tagmaps) con K canales cada uno

    Raises:
        ShapeError: Si la imagen no tiene la forma admitida
        NonFiniteError: Si una capa produce NaN/Inf (con su nombre completo)
    """
    x = as_tensor(image)
    divisor = net.spec.input_divisor
    if x.shape[0] != 1 or x.shape[1] != 3:
        raise ShapeError("La imagen debe tener forma (1, 3, H, W)", {"shape": list(x.shape)})
    if x.shape[2] % divisor or x.shape[3] % divisor:
        raise ShapeError(
            f"Las extensiones deben ser divisibles por {divisor}",
            {"extents": [x.shape[2], x.shape[3]], "divisor": divisor},
        )

    values: Dict[str, Tensor] = {IMAGE: x}
    for node in net.nodes:
        with layer_scope(node.scope):
            values[node.name] = node.fn([values[i] for i in node.inputs], PrefixedWeights(net.params, node.scope))

    out = values[net.output]
    k = net.spec.head.num_keypoints
    return out[:, :k], out[:, k:]
