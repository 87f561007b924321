"""
Decodificación bottom-up: picos de heatmap, agrupamiento por tags y flip testing.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import label, maximum_filter

from app.core.exceptions import ShapeError, ValidationException
from app.models.pose import DecoderConfig, Keypoint, PersonInstance, PoseSet
from app.pose.codec import as_maps

logger = logging.getLogger(__name__)

# Pares izquierda/derecha de los 17 keypoints COCO
COCO_FLIP_PAIRS: Tuple[Tuple[int, int], ...] = (
    (1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16),
)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

Forward = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _refine(heatmap: np.ndarray, row: int, col: int) -> Tuple[float, float]:
    """Desplaza un cuarto de píxel hacia el vecino de mayor valor (solo píxeles interiores)."""
    height, width = heatmap.shape
    x, y = float(col), float(row)
    if 0 < col < width - 1 and 0 < row < height - 1:
        x += 0.25 * np.sign(heatmap[row, col + 1] - heatmap[row, col - 1])
        y += 0.25 * np.sign(heatmap[row + 1, col] - heatmap[row - 1, col])
    return x, y


def _peaks_one_type(heatmap: np.ndarray, threshold: float) -> List[Tuple[float, int, int]]:
    local_max = maximum_filter(heatmap, size=3, mode="constant", cval=-np.inf)
    candidates = (heatmap >= local_max) & (heatmap > threshold)
    labels, count = label(candidates, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    rows, cols = np.nonzero(labels)
    seen = set()
    peaks = []
    # np.nonzero recorre en orden fila-columna: el primero de cada meseta es el menor
    for row, col in zip(rows, cols):
        plateau = labels[row, col]
        if plateau in seen:
            continue
        seen.add(plateau)
        peaks.append((float(heatmap[row, col]), int(row), int(col)))
    peaks.sort(key=lambda p: (-p[0], p[1], p[2]))
    return peaks


def detect_peaks(
    heatmaps,
    threshold: float = 0.1,
    max_persons: int = 30,
    refine: bool = True,
    tagmaps=None,
) -> List[List[Keypoint]]:
    """
    Detecta picos locales (≥ sus 8 vecinos y > threshold) por tipo de keypoint.

    Las mesetas se resuelven en su píxel (fila, columna) lexicográficamente menor.

    Args:
        heatmaps: Mapas (K, H, W) o (1, K, H, W)
        threshold: Umbral en [0, 1)
        max_persons: Máximo de picos por tipo, ordenados por score
        refine: Aplica el ajuste de un cuarto de píxel
        tagmaps: Si se dan, cada keypoint lleva el tag de su píxel de pico

    Returns:
        Lista de K listas de Keypoint
    """
    if not 0 <= threshold < 1:
        raise ValidationException("threshold debe estar en [0, 1)", {"threshold": threshold})
    maps = as_maps(heatmaps, dtype=np.float32)
    tags = as_maps(tagmaps, dtype=np.float32) if tagmaps is not None else None
    if tags is not None and tags.shape != maps.shape:
        raise ShapeError("heatmaps y tagmaps deben tener la misma forma")

    detections: List[List[Keypoint]] = []
    for k, heatmap in enumerate(maps):
        found = []
        for score, row, col in _peaks_one_type(heatmap, threshold)[:max_persons]:
            x, y = _refine(heatmap, row, col) if refine else (float(col), float(row))
            tag = float(tags[k, row, col]) if tags is not None else None
            found.append(Keypoint(x=x, y=y, score=score, tag=tag, type_index=k))
        detections.append(found)
    logger.debug(f"Picos por tipo: {[len(d) for d in detections]}")
    return detections


def sample_tags(detections: Sequence[Sequence[Keypoint]], tagmaps) -> List[List[Keypoint]]:
    """Copia las detecciones con el tag leído en su posición redondeada."""
    tags = as_maps(tagmaps, dtype=np.float32)
    _, height, width = tags.shape
    sampled = []
    for per_type in detections:
        row_list = []
        for kp in per_type:
            row, col = kp.pixel()
            row, col = min(max(row, 0), height - 1), min(max(col, 0), width - 1)
            row_list.append(kp.model_copy(update={"tag": float(tags[kp.type_index, row, col])}))
        sampled.append(row_list)
    return sampled


class _Group:
    def __init__(self, num_keypoints: int):
        self.keypoints: List[Optional[Keypoint]] = [None] * num_keypoints
        self.tag_sum = 0.0
        self.size = 0

    @property
    def mean_tag(self) -> float:
        return self.tag_sum / self.size

    def add(self, keypoint: Keypoint) -> None:
        self.keypoints[keypoint.type_index] = keypoint
        self.tag_sum += keypoint.tag
        self.size += 1

    def to_instance(self) -> PersonInstance:
        scores = [kp.score for kp in self.keypoints if kp is not None]
        return PersonInstance(keypoints=self.keypoints, score=float(np.mean(scores)))


def group_keypoints(
    detections: Sequence[Sequence[Keypoint]],
    join_threshold: float = 1.0,
    tagmaps=None,
    type_order: Optional[Sequence[int]] = None,
) -> PoseSet:
    """
    Agrupa detecciones en personas de forma greedy por tipo.

    Cada detección se une al grupo sin ese tipo cuyo tag medio esté más cerca, si la
    distancia es menor que join_threshold; si no, abre un grupo nuevo.

    Args:
        detections: K listas de Keypoint con tag (o `tagmaps` para muestrearlo)
        join_threshold: Distancia máxima de tag para unirse a un grupo
        tagmaps: Mapas de tags opcionales
        type_order: Orden de procesamiento de tipos (por defecto 0..K-1)

    Returns:
        PoseSet con score de instancia = media de scores de sus keypoints
    """
    if tagmaps is not None:
        detections = sample_tags(detections, tagmaps)
    num_keypoints = len(detections)
    order = list(range(num_keypoints)) if type_order is None else list(type_order)
    if sorted(order) != list(range(num_keypoints)):
        raise ValidationException("type_order debe ser una permutación de los tipos", {"type_order": order})

    groups: List[_Group] = []
    for k in order:
        for kp in detections[k]:
            if kp.tag is None:
                raise ValidationException("Las detecciones necesitan tag para agruparse", {"type": k})
            best, best_distance = None, None
            for group in groups:
                if group.keypoints[k] is not None:
                    continue
                distance = abs(kp.tag - group.mean_tag)
                if best_distance is None or distance < best_distance:
                    best, best_distance = group, distance
            if best is None or best_distance >= join_threshold:
                best = _Group(num_keypoints)
                groups.append(best)
            best.add(kp)

    return PoseSet(num_keypoints=max(num_keypoints, 1), instances=[g.to_instance() for g in groups])


def decode(heatmaps, tagmaps, config: Optional[DecoderConfig] = None) -> PoseSet:
    """detect_peaks + group_keypoints con un DecoderConfig."""
    config = config or DecoderConfig()
    detections = detect_peaks(
        heatmaps, config.threshold, config.max_persons, refine=config.refine, tagmaps=tagmaps,
    )
    return group_keypoints(detections, config.join_threshold, type_order=config.type_order)


def flip_permutation(flip_pairs: Sequence[Tuple[int, int]], num_keypoints: int) -> np.ndarray:
    """
    Permutación de canales a partir de pares izquierda/derecha.

    Raises:
        ValidationException: Si un índice se repite o está fuera de rango
    """
    perm = np.arange(num_keypoints)
    used = set()
    for pair in flip_pairs:
        if len(pair) != 2:
            raise ValidationException("Cada par de flip debe tener dos índices", {"pair": list(pair)})
        left, right = int(pair[0]), int(pair[1])
        for index in (left, right):
            if not 0 <= index < num_keypoints:
                raise ValidationException("Índice de flip fuera de rango", {"index": index, "K": num_keypoints})
        if left in used or right in used:
            raise ValidationException("Un índice aparece en más de un par de flip", {"pair": [left, right]})
        used.update((left, right))
        perm[left], perm[right] = right, left
    return perm


def flip_average(
    forward: Forward,
    image,
    flip_pairs: Sequence[Tuple[int, int]] = COCO_FLIP_PAIRS,
    parallel: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Promedia la predicción de la imagen y la de su espejo horizontal, deshaciendo el espejo
    e intercambiando canales izquierda/derecha.

    Args:
        forward: Callable imagen → (heatmaps, tagmaps), p. ej. una Network
        image: Tensor (1, 3, H, W)
        flip_pairs: Involución izquierda/derecha sobre los índices de keypoint
        parallel: Ejecuta las dos pasadas en hilos distintos

    Returns:
        (heatmaps, tagmaps) promediados
    """
    image = np.asarray(image, dtype=np.float32)
    mirrored = np.ascontiguousarray(image[..., ::-1])

    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            plain_future = pool.submit(forward, image)
            flipped_future = pool.submit(forward, mirrored)
            plain, flipped = plain_future.result(), flipped_future.result()
    else:
        plain, flipped = forward(image), forward(mirrored)

    num_keypoints = plain[0].shape[1]
    perm = flip_permutation(flip_pairs, num_keypoints)
    averaged = []
    for original, mirror in zip(plain, flipped):
        unflipped = mirror[:, perm][..., ::-1]
        averaged.append(((original + unflipped) * np.float32(0.5)).astype(np.float32))
    return averaged[0], averaged[1]
