"""
Object Keypoint Similarity entre una instancia predicha y una de ground truth.
"""
import math
from typing import Optional, Sequence, Union

from app.config.settings import settings
from app.core.exceptions import ValidationException
from app.models.pose import PersonInstance


def instance_scale(gt: PersonInstance) -> float:
    """sqrt del área del bounding box de los keypoints etiquetados (1 si el área es nula)."""
    labeled = gt.labeled()
    if not labeled:
        return 1.0
    xs = [kp.x for kp in labeled]
    ys = [kp.y for kp in labeled]
    area = (max(xs) - min(xs)) * (max(ys) - min(ys))
    return math.sqrt(area) if area > 0 else 1.0


def oks_score(
    pred: PersonInstance,
    gt: PersonInstance,
    scale: Optional[float] = None,
    constants: Union[float, Sequence[float], None] = None,
) -> float:
    """
    Media sobre los keypoints etiquetados de exp(−d²/(2·s²·k²)).

    Un keypoint sin predicción aporta 0.

    Raises:
        ValidationException: Si el ground truth no tiene keypoints etiquetados
    """
    if not gt.labeled():
        raise ValidationException("OKS requiere al menos un keypoint etiquetado en el ground truth")
    s = instance_scale(gt) if scale is None else scale
    if s <= 0:
        raise ValidationException("La escala de OKS debe ser positiva", {"scale": s})
    k_default = settings.oks_constant if constants is None else constants

    total = 0.0
    for index, target in enumerate(gt.keypoints):
        if target is None:
            continue
        k = k_default if isinstance(k_default, (int, float)) else k_default[index]
        guess = pred.keypoints[index] if index < len(pred.keypoints) else None
        if guess is None:
            continue
        d2 = (guess.x - target.x) ** 2 + (guess.y - target.y) ** 2
        total += math.exp(-d2 / (2 * s ** 2 * k ** 2))
    return total / len(gt.labeled())
