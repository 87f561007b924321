"""
Modelos Pydantic que describen bloques, cabezas y redes de forma declarativa.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class BlockVariant(str, Enum):
    """Variantes de bloque del estudio de ablación."""
    IR = "IR"
    IR_DW = "IR+DW"
    IR_SC = "IR+SC"
    DIR = "DIR"


class HeadKind(str, Enum):
    HIGHER = "higher"
    SINGLE_CONV = "single-conv"


class LayerKind(str, Enum):
    CONV = "conv"
    DEPTHWISE = "depthwise"
    DECONV = "deconv"
    BATCHNORM = "batchnorm"
    RELU = "relu"
    ADD = "add"
    UPSAMPLE = "upsample"


class BlockTemplate(BaseModel):
    """Variante de bloque usada por todas las ramas de una etapa."""
    variant: BlockVariant = BlockVariant.DIR
    expansion: int = Field(6, ge=1, description="Factor de expansión del 1x1 inicial")
    num_dw: int = Field(2, ge=1, le=4, description="Número de depthwise 3x3")
    inner_shortcut: bool = True

    @model_validator(mode="after")
    def _check_variant(self):
        if self.variant in (BlockVariant.IR, BlockVariant.IR_SC) and self.num_dw != 1:
            raise ValueError(f"La variante {self.variant.value} requiere num_dw = 1")
        return self


class BlockSpec(BlockTemplate):
    """Bloque concreto: plantilla más canales y stride."""
    in_channels: int = Field(..., gt=0)
    out_channels: int = Field(..., gt=0)
    stride: int = Field(1, ge=1, le=2)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "variant": "DIR",
                "in_channels": 32,
                "out_channels": 32,
                "stride": 1,
                "expansion": 6,
                "num_dw": 2,
            }
        }
    )

    @classmethod
    def from_template(cls, template: BlockTemplate, in_channels: int, out_channels: int, stride: int = 1) -> "BlockSpec":
        return cls(**template.model_dump(), in_channels=in_channels, out_channels=out_channels, stride=stride)

    @property
    def expanded_channels(self) -> int:
        return self.expansion * self.in_channels

    @property
    def has_outer_shortcut(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    @property
    def has_inner_shortcut(self) -> bool:
        return (
            self.variant in (BlockVariant.IR_SC, BlockVariant.DIR)
            and self.inner_shortcut
            and self.stride == 1
        )


class HeadSpec(BaseModel):
    """Cabeza que produce K heatmaps seguidos de K tagmaps."""
    kind: HeadKind = HeadKind.HIGHER
    num_keypoints: int = Field(17, gt=0)
    channels: Optional[int] = Field(None, gt=0, description="Ancho interno de la cabeza higher")
    num_residual: int = Field(3, ge=0)

    @property
    def tag_channels(self) -> int:
        return self.num_keypoints

    @property
    def output_channels(self) -> int:
        return 2 * self.num_keypoints


class StageConfig(BaseModel):
    """Canales y número de bloques por rama de una etapa."""
    channels: List[int] = Field(..., min_length=1)
    blocks: List[int] = Field(..., min_length=1)
    block: Optional[BlockTemplate] = None

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.channels) != len(self.blocks):
            raise ValueError("channels y blocks deben tener la misma longitud")
        if any(c <= 0 for c in self.channels) or any(b <= 0 for b in self.blocks):
            raise ValueError("Canales y número de bloques deben ser positivos")
        return self

    @property
    def num_branches(self) -> int:
        return len(self.channels)


class NetworkSpec(BaseModel):
    """Descripción completa de una red HRNet / BHRNet con bloques DIR."""
    name: str = "custom"
    width: int = Field(32, gt=0)
    num_stages: int = Field(4, ge=1, le=5)
    stem_channels: Optional[int] = Field(None, gt=0)
    block: BlockTemplate = Field(default_factory=BlockTemplate)
    stages: List[StageConfig]
    final_channels: Optional[int] = Field(None, gt=0)
    head: HeadSpec = Field(default_factory=HeadSpec)

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "name": "bhrnet-32",
                "width": 32,
                "num_stages": 4,
                "block": {"variant": "DIR", "expansion": 6, "num_dw": 2},
                "stages": [
                    {"channels": [32], "blocks": [1]},
                    {"channels": [32, 64], "blocks": [1, 2]},
                    {"channels": [32, 64, 128], "blocks": [1, 2, 3]},
                    {"channels": [128, 128, 128, 128], "blocks": [1, 2, 3, 4]},
                ],
                "head": {"kind": "higher", "num_keypoints": 17},
            }
        }
    )

    @model_validator(mode="after")
    def _check_stages(self):
        if len(self.stages) != self.num_stages:
            raise ValueError(f"Se esperaban {self.num_stages} etapas, hay {len(self.stages)}")
        for index, stage in enumerate(self.stages, start=1):
            if stage.num_branches != index:
                raise ValueError(f"La etapa {index} debe tener {index} ramas, tiene {stage.num_branches}")
        return self

    @property
    def stem_width(self) -> int:
        return self.stem_channels or self.width

    @property
    def output_width(self) -> int:
        """Canales de la representación final de alta resolución."""
        return self.final_channels or self.stages[-1].channels[0]

    @property
    def head_width(self) -> int:
        return self.head.channels or self.width

    @property
    def input_divisor(self) -> int:
        return 2 ** (self.num_stages + 1)

    def stage_block(self, stage_index: int) -> BlockTemplate:
        return self.stages[stage_index].block or self.block


class LayerSpec(BaseModel):
    """
    Descripción estructural de una capa: suficiente para inicializar sus parámetros
    y para contabilizar su coste.
    """
    name: str
    kind: LayerKind
    in_channels: int = Field(..., ge=0)
    out_channels: int = Field(..., ge=0)
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    output_padding: int = 0
    groups: int = 1
    bias: bool = False
    factor: int = 1
    in_scale: int = Field(1, ge=1, description="Denominador de resolución de la entrada respecto a la imagen")
    bucket: str = ""

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Formas de los parámetros que consume la capa."""
        shapes: Dict[str, Tuple[int, ...]] = {}
        if self.kind in (LayerKind.CONV, LayerKind.DEPTHWISE):
            shapes[f"{self.name}.weight"] = (
                self.out_channels, self.in_channels // self.groups, self.kernel, self.kernel,
            )
        elif self.kind == LayerKind.DECONV:
            shapes[f"{self.name}.weight"] = (
                self.in_channels, self.out_channels // self.groups, self.kernel, self.kernel,
            )
        elif self.kind == LayerKind.BATCHNORM:
            for field in ("mean", "var", "scale", "shift"):
                shapes[f"{self.name}.{field}"] = (self.out_channels,)
        if self.bias and self.kind in (LayerKind.CONV, LayerKind.DEPTHWISE, LayerKind.DECONV):
            shapes[f"{self.name}.bias"] = (self.out_channels,)
        return shapes

    def output_scale(self) -> int:
        if self.kind in (LayerKind.CONV, LayerKind.DEPTHWISE):
            return self.in_scale * self.stride
        if self.kind == LayerKind.DECONV:
            return max(self.in_scale // self.stride, 1)
        if self.kind == LayerKind.UPSAMPLE:
            return max(self.in_scale // self.factor, 1)
        return self.in_scale

    def relocated(self, prefix: str, scale: int, bucket: Optional[str] = None) -> "LayerSpec":
        """Copia con nombre prefijado y escala multiplicada por la del nodo."""
        return self.model_copy(update={
            "name": f"{prefix}.{self.name}" if prefix else self.name,
            "in_scale": self.in_scale * scale,
            "bucket": bucket if bucket is not None else self.bucket,
        })
