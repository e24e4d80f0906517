"""
Surrogate derivatives for the threshold function and the local loss of visible neurons.

No network dependencies - can be imported by scripts and tests.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from core.error_handler import ValidationError


SURROGATE_SIGMOID = "sigmoid"
SURROGATE_RECTIFIER = "rectifier"
SURROGATE_EXPONENTIAL = "exponential"
SURROGATE_VARIANTS = (SURROGATE_SIGMOID, SURROGATE_RECTIFIER, SURROGATE_EXPONENTIAL)

DEFAULT_SURROGATE = SURROGATE_SIGMOID
DEFAULT_SLOPE = 1.0
OUTPUT_FLOOR = 1e-12  # keeps x(1 - x) away from 0 in the loss derivative


@dataclass(frozen=True)
class SurrogateKind:
    variant: str = DEFAULT_SURROGATE
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        if self.variant not in SURROGATE_VARIANTS:
            raise ValidationError(f"Unknown surrogate '{self.variant}', expected one of {SURROGATE_VARIANTS}")
        if not self.slope > 0:
            raise ValidationError(f"Surrogate slope must be positive, got {self.slope!r}")


def surrogate_derivative(u, threshold: float, kind: SurrogateKind = SurrogateKind()):
    """
    Smooth stand-in for Theta'(u - threshold).

    sigmoid:      slope * s(1 - s) with s = sigma(slope * (u - threshold))
    rectifier:    slope * max(0, 1 - slope * |u - threshold|)
    exponential:  slope * exp(-slope * |u - threshold|)
    """
    x = np.asarray(u, dtype=float) - threshold
    if kind.variant == SURROGATE_SIGMOID:
        s = expit(kind.slope * x)
        value = kind.slope * s * (1.0 - s)
    elif kind.variant == SURROGATE_RECTIFIER:
        value = kind.slope * np.maximum(0.0, 1.0 - kind.slope * np.abs(x))
    else:
        value = kind.slope * np.exp(-kind.slope * np.abs(x))
    return float(value) if np.ndim(value) == 0 else value


def local_loss(target, u, threshold: float = 1.0, slope: float = 1.0):
    """
    Cross-entropy of the target against the smoothed output x = sigma(slope * (u - threshold)).

    Returns:
        (loss, dloss/dx) elementwise
    """
    v = slope * (np.asarray(u, dtype=float) - threshold)
    target = np.asarray(target, dtype=float)
    loss = np.logaddexp(0.0, -(2.0 * target - 1.0) * v)
    x = expit(v)
    grad = (x - target) / np.maximum(x * (1.0 - x), OUTPUT_FLOOR)
    if np.ndim(loss) == 0:
        return float(loss), float(grad)
    return loss, grad


def output_error(target, u, threshold: float = 1.0, slope: float = 1.0):
    """dloss/du for the local loss: slope * (sigma(slope * (u - threshold)) - target)."""
    x = expit(slope * (np.asarray(u, dtype=float) - threshold))
    value = slope * (x - np.asarray(target, dtype=float))
    return float(value) if np.ndim(value) == 0 else value
