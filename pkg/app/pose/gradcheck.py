"""
Suite de diferencias finitas centrales para los gradientes analíticos de la pérdida.
"""
import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

from app.config.settings import settings
from app.models.pose import GradientCheckReport, Keypoint, LossWeights, PersonInstance, PoseSet
from app.pose.codec import compute_losses, loss_gradients

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-4


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_FLOOR)


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, index: Tuple[int, ...], step: float) -> float:
    """Derivada numérica de `fn` respecto a x[index]; x se restaura al terminar."""
    original = x[index]
    x[index] = original + step
    plus = fn(x)
    x[index] = original - step
    minus = fn(x)
    x[index] = original
    return (plus - minus) / (2 * step)


def random_instance(rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray, PoseSet]:
    """Instancia aleatoria con K ≤ 4, N ≤ 3 y extensiones ≤ 16."""
    k_types = int(rng.integers(1, 5))
    height, width = int(rng.integers(4, 17)), int(rng.integers(4, 17))
    persons = int(rng.integers(1, 4))
    instances = []
    for _ in range(persons):
        keypoints: List[Optional[Keypoint]] = []
        for k in range(k_types):
            if rng.uniform() < 0.8:
                keypoints.append(Keypoint(
                    x=float(rng.integers(0, width)), y=float(rng.integers(0, height)), type_index=k,
                ))
            else:
                keypoints.append(None)
        if all(kp is None for kp in keypoints):
            keypoints[0] = Keypoint(x=0.0, y=0.0, type_index=0)
        instances.append(PersonInstance(keypoints=keypoints))
    poses = PoseSet(num_keypoints=k_types, instances=instances)
    shape = (k_types, height, width)
    return rng.uniform(0, 1, shape), rng.normal(0, 1, shape), rng.uniform(0, 1, shape), poses


def check_instance(
    pred_h: np.ndarray,
    pred_t: np.ndarray,
    gt_h: np.ndarray,
    poses: PoseSet,
    weights: LossWeights,
    step: float,
    rng: np.random.Generator,
    samples: int = 8,
) -> float:
    """Máximo error relativo entre gradiente analítico y numérico en posiciones de prueba."""
    grad_h, grad_t = loss_gradients(pred_h, pred_t, gt_h, poses, weights)

    def loss_of_h(h):
        return compute_losses(h, pred_t, gt_h, poses, weights).total

    def loss_of_t(t):
        return compute_losses(pred_h, t, gt_h, poses, weights).total

    h_work = pred_h.copy()
    t_work = pred_t.copy()
    tag_positions = [(kp.type_index, *kp.pixel()) for inst in poses.instances for kp in inst.labeled()]
    tag_positions += [tuple(int(rng.integers(0, n)) for n in pred_t.shape) for _ in range(samples)]
    heat_positions = [tuple(int(rng.integers(0, n)) for n in pred_h.shape) for _ in range(samples)]

    worst = 0.0
    for index in heat_positions:
        numeric = central_difference(loss_of_h, h_work, index, step)
        worst = max(worst, relative_error(float(grad_h[index]), numeric))
    for index in tag_positions:
        numeric = central_difference(loss_of_t, t_work, index, step)
        worst = max(worst, relative_error(float(grad_t[index]), numeric))
    return worst


def run_gradient_suite(
    seed: int = 0,
    trials: int = 20,
    tolerance: Optional[float] = None,
    step: Optional[float] = None,
    weights: Optional[LossWeights] = None,
) -> GradientCheckReport:
    """
    Compara gradientes analíticos con diferencias finitas centrales en instancias aleatorias.

    Returns:
        GradientCheckReport con el máximo error relativo y el ensayo que lo produjo
    """
    tolerance = settings.gradient_tolerance if tolerance is None else tolerance
    step = settings.finite_difference_step if step is None else step
    weights = weights or LossWeights.from_settings()
    rng = np.random.default_rng(seed)

    worst, worst_trial = 0.0, 0
    for trial in range(trials):
        pred_h, pred_t, gt_h, poses = random_instance(rng)
        error = check_instance(pred_h, pred_t, gt_h, poses, weights, step, rng)
        logger.debug(f"Ensayo {trial}: error relativo máximo {error:.3e}")
        if error > worst:
            worst, worst_trial = error, trial

    report = GradientCheckReport(
        trials=trials,
        max_relative_error=worst,
        worst_trial=worst_trial,
        tolerance=tolerance,
        passed=worst < tolerance,
    )
    logger.info(f"Verificación de gradientes: {trials} ensayos, error relativo máximo {worst:.3e}")
    return report
