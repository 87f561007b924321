"""
Servicio de redes: carga de configuraciones, construcción, costo, inferencia y pesos.
"""
import logging
import threading
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config.settings import settings
from app.core.exceptions import ValidationException
from app.engine.cost_model import compare_distributions, cost_report, scaling_ratios
from app.engine.network import (
    InitMode,
    Network,
    build_network,
    list_network_configs,
    load_network_spec,
    suggest_block_counts,
)
from app.engine.serialization import load_network_weights, save_weights
from app.models.cost import CostReport, DistributionComparison, ScalingEntry
from app.models.network import NetworkSpec
from app.pose.decoder import COCO_FLIP_PAIRS, flip_average

logger = logging.getLogger(__name__)


class NetworkService:
    """Operaciones sobre redes configuradas, con caché de redes construidas."""

    def __init__(self):
        self._networks: Dict[Tuple[str, str, int], Network] = {}
        self._lock = threading.Lock()
        logger.info("Servicio de redes inicializado")

    def list_configs(self) -> List[str]:
        return list_network_configs()

    def get_spec(self, config: Union[str, Path]) -> NetworkSpec:
        return load_network_spec(config)

    def get_network(self, config: Union[str, Path], init: InitMode = "zero", seed: int = 0) -> Network:
        """
        Obtiene (o construye y cachea) la red de una configuración.

        Args:
            config: Nombre de configuración o ruta a un JSON
            init: Modo de inicialización
            seed: Semilla para init="random"

        Returns:
            Network: Red construida
        """
        key = (str(config), init, seed)
        with self._lock:
            if key not in self._networks:
                logger.info(f"Construyendo red {config} (init={init}, seed={seed})")
                self._networks[key] = build_network(self.get_spec(config), init=init, seed=seed)
            return self._networks[key]

    @staticmethod
    def _check_size(input_size: int) -> None:
        if input_size <= 0:
            raise ValidationException("El tamaño de entrada debe ser positivo", {"input_size": input_size})

    def cost(self, config: Union[str, Path], input_size: Optional[int] = None) -> CostReport:
        size = input_size or settings.default_input_size
        self._check_size(size)
        logger.info(f"Calculando costo de {config} a {size}x{size}")
        return cost_report(self.get_network(config), (size, size))

    def scaling(self, config: Union[str, Path], sizes: Sequence[int]) -> List[ScalingEntry]:
        for size in sizes:
            self._check_size(size)
        return scaling_ratios(self.get_network(config), list(sizes))

    def compare(
        self,
        config_a: Union[str, Path],
        config_b: Union[str, Path],
        input_size: Optional[int] = None,
    ) -> DistributionComparison:
        """Compara la uniformidad de la distribución de costo de dos configuraciones."""
        report_a = self.cost(config_a, input_size)
        report_b = self.cost(config_b, input_size)
        return compare_distributions(report_a, report_b)

    def suggest_blocks(self, config: Union[str, Path], input_size: Optional[int] = None) -> List[int]:
        return suggest_block_counts(self.get_spec(config), input_size)

    def load_with_weights(
        self,
        config: Union[str, Path],
        weights_path: Optional[Union[str, Path]] = None,
        seed: int = 0,
    ) -> Network:
        """Red con los pesos de un archivo BHRW o, sin archivo, con pesos aleatorios de `seed`."""
        if weights_path is None:
            logger.warning(f"Sin archivo de pesos para {config}: se usan pesos aleatorios con semilla {seed}")
            return self.get_network(config, init="random", seed=seed)
        return load_network_weights(self.get_network(config), weights_path)

    def infer(
        self,
        net: Network,
        image: np.ndarray,
        flip: bool = False,
        flip_pairs: Optional[Sequence[Tuple[int, int]]] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Ejecuta la red, opcionalmente con flip testing.

        Returns:
            (heatmaps, tagmaps)
        """
        logger.info(f"Inferencia con {net.spec.name} sobre {tuple(np.shape(image))} (flip={flip})")
        if flip:
            pairs = COCO_FLIP_PAIRS if flip_pairs is None else flip_pairs
            if net.spec.head.num_keypoints != 17 and flip_pairs is None:
                pairs = ()
                logger.warning("Sin pares de flip para K distinto de 17: solo se espeja la imagen")
            return flip_average(net, image, pairs)
        return net(image)

    def init_weights(self, config: Union[str, Path], seed: int, output: Union[str, Path]) -> int:
        """Escribe un archivo BHRW con pesos aleatorios reproducibles; devuelve la cantidad de tensores."""
        net = self.get_network(config, init="random", seed=seed)
        save_weights(output, net.params)
        return len(net.params)
