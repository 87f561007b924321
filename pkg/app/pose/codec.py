"""
Ground truth de heatmaps y pérdidas heatmap + tag con sus gradientes analíticos.

Las pérdidas y los gradientes se calculan en float64; los mapas se aceptan como (K, H, W)
o (1, K, H, W).
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.core.exceptions import LossError, ShapeError, ValidationException
from app.models.pose import LossBreakdown, LossWeights, PoseSet

logger = logging.getLogger(__name__)


def as_maps(maps, dtype=np.float64) -> np.ndarray:
    """Normaliza mapas a (K, H, W) quitando el batch de tamaño 1."""
    array = np.asarray(maps, dtype=dtype)
    if array.ndim == 4:
        if array.shape[0] != 1:
            raise ShapeError("Solo se admite batch de tamaño 1", {"shape": list(array.shape)})
        array = array[0]
    if array.ndim != 3:
        raise ShapeError("Se esperaban mapas (K, H, W)", {"shape": list(array.shape)})
    return array


def _check_bounds(poses: PoseSet, height: int, width: int) -> None:
    for n, instance in enumerate(poses.instances):
        for kp in instance.labeled():
            if not (0 <= kp.x <= width - 1 and 0 <= kp.y <= height - 1):
                raise ValidationException(
                    f"Keypoint fuera de los límites ({kp.x}, {kp.y})",
                    {"instance": n, "type": kp.type_index, "extents": [height, width]},
                )


def render_ground_truth(
    poses: PoseSet,
    extents: Tuple[int, int],
    sigma: float = 2.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Renderiza heatmaps exp(-d²/σ²) combinados por máximo entre personas.

    El tagmap de cada píxel toma el tag del keypoint de la persona que domina el heatmap ahí.

    Args:
        poses: Personas de ground truth
        extents: (H, W) de los mapas
        sigma: σ del gaussiano

    Returns:
        (heatmaps (K,H,W) float32, tagmaps (K,H,W) float32, máscara (N,K) de keypoints etiquetados)

    Raises:
        ValidationException: Si algún keypoint cae fuera de los mapas
    """
    height, width = extents
    k_types = poses.num_keypoints
    _check_bounds(poses, height, width)

    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    heatmaps = np.zeros((k_types, height, width), np.float64)
    tagmaps = np.zeros((k_types, height, width), np.float64)
    mask = np.zeros((poses.num_instances, k_types), dtype=bool)

    for n, instance in enumerate(poses.instances):
        for kp in instance.labeled():
            k = kp.type_index
            mask[n, k] = True
            gaussian = np.exp(-((cols - kp.x) ** 2 + (rows - kp.y) ** 2) / sigma ** 2)
            owner = gaussian > heatmaps[k]
            heatmaps[k] = np.where(owner, gaussian, heatmaps[k])
            tagmaps[k] = np.where(owner, kp.tag if kp.tag is not None else 0.0, tagmaps[k])

    return heatmaps.astype(np.float32), tagmaps.astype(np.float32), mask


def heatmap_loss(pred, gt) -> float:
    """(1/(K·H·W)) Σ (pred − gt)²."""
    p, g = as_maps(pred), as_maps(gt)
    if p.shape != g.shape:
        raise ShapeError("pred y gt deben tener la misma forma", {"pred": list(p.shape), "gt": list(g.shape)})
    return float(np.mean((p - g) ** 2))


@dataclass
class _TagSamples:
    """Posiciones (k, fila, col) muestreadas por persona etiquetada."""
    persons: List[np.ndarray]

    @property
    def count(self) -> int:
        return len(self.persons)


def _tag_samples(tagmaps: np.ndarray, poses: PoseSet) -> _TagSamples:
    k_types, height, width = tagmaps.shape
    if poses.num_keypoints != k_types:
        raise ShapeError(
            "El número de tagmaps no coincide con K",
            {"tagmaps": k_types, "num_keypoints": poses.num_keypoints},
        )
    _check_bounds(poses, height, width)
    persons = []
    for instance in poses.instances:
        labeled = instance.labeled()
        if labeled:
            persons.append(np.array([(kp.type_index, *kp.pixel()) for kp in labeled], dtype=np.intp))
    if not persons:
        raise LossError("La pérdida de tags no está definida sin personas etiquetadas (N = 0)")
    return _TagSamples(persons)


def _person_means(tagmaps: np.ndarray, samples: _TagSamples) -> Tuple[List[np.ndarray], np.ndarray]:
    values = [tagmaps[idx[:, 0], idx[:, 1], idx[:, 2]] for idx in samples.persons]
    return values, np.array([v.mean() for v in values])


def _tag_terms(tagmaps: np.ndarray, poses: PoseSet, push_sigma: float) -> Tuple[float, float]:
    samples = _tag_samples(tagmaps, poses)
    values, means = _person_means(tagmaps, samples)
    n = samples.count
    pull = sum(float(np.sum((v - m) ** 2)) for v, m in zip(values, means)) / n
    diff = means[:, None] - means[None, :]
    pair = np.exp(-diff ** 2 / (2 * push_sigma ** 2))
    np.fill_diagonal(pair, 0.0)
    push = float(pair.sum()) / n ** 2
    return pull, push


def tag_loss(pred_tagmaps, poses: PoseSet, push_sigma: float = 1.0) -> float:
    """
    Pull (1/N)·Σ_n Σ_k (T_k − T̄_n)² más push (1/N²)·Σ_{n≠n'} exp(−(T̄_n − T̄_n')²/(2σ²)).

    Raises:
        LossError: Si no hay personas etiquetadas
    """
    pull, push = _tag_terms(as_maps(pred_tagmaps), poses, push_sigma)
    return pull + push


def total_loss(lh: float, lt: float, weights: Optional[LossWeights] = None) -> float:
    weights = weights or LossWeights()
    return weights.alpha * lh + weights.beta * lt


def compute_losses(
    pred_heatmaps,
    pred_tagmaps,
    gt_heatmaps,
    poses: PoseSet,
    weights: Optional[LossWeights] = None,
) -> LossBreakdown:
    """Desglose completo: heatmap, pull, push, tag y total."""
    weights = weights or LossWeights()
    lh = heatmap_loss(pred_heatmaps, gt_heatmaps)
    pull, push = _tag_terms(as_maps(pred_tagmaps), poses, weights.push_sigma)
    lt = pull + push
    return LossBreakdown(heatmap=lh, pull=pull, push=push, tag=lt, total=total_loss(lh, lt, weights))


def loss_gradients(
    pred_heatmaps,
    pred_tagmaps,
    gt_heatmaps,
    poses: PoseSet,
    weights: Optional[LossWeights] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradientes de la pérdida total respecto a heatmaps y tagmaps predichos.

    Returns:
        (dL/dH, dL/dT) en float64 con forma (K, H, W)
    """
    weights = weights or LossWeights()
    p, g = as_maps(pred_heatmaps), as_maps(gt_heatmaps)
    if p.shape != g.shape:
        raise ShapeError("pred y gt deben tener la misma forma", {"pred": list(p.shape), "gt": list(g.shape)})
    grad_h = weights.alpha * 2.0 * (p - g) / p.size

    tags = as_maps(pred_tagmaps)
    samples = _tag_samples(tags, poses)
    values, means = _person_means(tags, samples)
    n = samples.count
    sigma2 = weights.push_sigma ** 2

    diff = means[:, None] - means[None, :]
    pair = np.exp(-diff ** 2 / (2 * sigma2))
    np.fill_diagonal(pair, 0.0)
    # dPush/dT̄_n; cada par aparece dos veces en la suma
    d_means = np.sum(2.0 * pair * (-diff / sigma2), axis=1) / n ** 2

    grad_t = np.zeros_like(tags)
    for idx, v, m, dm in zip(samples.persons, values, means, d_means):
        contribution = 2.0 * (v - m) / n + dm / len(v)
        np.add.at(grad_t, (idx[:, 0], idx[:, 1], idx[:, 2]), contribution)
    return grad_h, weights.beta * grad_t
