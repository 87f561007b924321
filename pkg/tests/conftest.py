import numpy as np
import pytest

from app.engine.blocks import parameter_shapes
from app.engine.network import load_network_spec
from app.models.network import NetworkSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_params():
    """Parámetros aleatorios para un inventario de capas (batchnorm con varianza positiva)."""

    def build(layers, seed=0, scale=0.3):
        generator = np.random.default_rng(seed)
        params = {}
        for name, shape in parameter_shapes(layers).items():
            if name.endswith(".var"):
                params[name] = generator.uniform(0.5, 1.5, shape).astype(np.float32)
            else:
                params[name] = (generator.standard_normal(shape) * scale).astype(np.float32)
        return params

    return build


@pytest.fixture
def toy_spec():
    """Red de una etapa y una rama, con cabeza single-conv."""
    return NetworkSpec(
        name="toy",
        width=8,
        num_stages=1,
        block={"variant": "DIR", "expansion": 2, "num_dw": 2},
        stages=[{"channels": [8], "blocks": [2]}],
        head={"kind": "single-conv", "num_keypoints": 3},
    )


@pytest.fixture
def small_spec():
    """Red de dos etapas, estrecha, para pruebas de forward rápidas."""
    return NetworkSpec(
        name="small",
        width=4,
        num_stages=2,
        block={"variant": "DIR", "expansion": 2, "num_dw": 2},
        stages=[
            {"channels": [4], "blocks": [1]},
            {"channels": [4, 8], "blocks": [1, 1]},
        ],
        final_channels=6,
        head={"kind": "higher", "num_keypoints": 2, "channels": 4, "num_residual": 1},
    )


@pytest.fixture
def tapered_bhrnet_spec():
    """bhrnet-32 con anchos 32/64/128/256 en la última etapa y salida ensanchada a 128."""
    data = load_network_spec("bhrnet-32").model_dump(mode="json")
    data["name"] = "bhrnet-32-tapered"
    data["stages"][-1]["channels"] = [32, 64, 128, 256]
    data["final_channels"] = 128
    return NetworkSpec.model_validate(data)


@pytest.fixture
def inverted_hrnet_spec():
    """hrnet-32 con la última etapa cargada hacia las resoluciones bajas."""
    data = load_network_spec("hrnet-32").model_dump(mode="json")
    data["name"] = "hrnet-32-inverted"
    data["stages"][-1]["blocks"] = [1, 1, 4, 8]
    return NetworkSpec.model_validate(data)
