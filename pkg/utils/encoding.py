"""
Spike encoders for real values in [0, 1] and the count-based read-out decoder.

Every encoder returns a uint8 matrix (rows x window). Deterministic encoders are
pure functions; stochastic ones draw from the rng they are given.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.error_handler import EncodingError
from core.utils import make_rng
from utils.network import SpikeRecord


SCHEME_RATE = "rate"
SCHEME_TIME = "time"
SCHEME_POPULATION_RATE = "population_rate"
SCHEME_POPULATION_TIME = "population_time"
SCHEMES = (SCHEME_RATE, SCHEME_TIME, SCHEME_POPULATION_RATE, SCHEME_POPULATION_TIME)

ACTIVATION_CUTOFF = 0.05
_COUNT_EPSILON = 1e-9  # absorbs float error in value * max_rate * window


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class EncoderSpec:
    """How one real value becomes spikes."""
    scheme: str = SCHEME_RATE
    window: int = 1
    neurons_per_value: int = 1
    max_rate: float = 1.0
    centers: Tuple[float, ...] = field(default=())
    widths: Tuple[float, ...] = field(default=())
    deterministic: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise EncodingError(f"Unknown encoding scheme '{self.scheme}', expected one of {SCHEMES}")
        if isinstance(self.window, bool) or not isinstance(self.window, int) or self.window < 1:
            raise EncodingError(f"Encoding window must be a positive integer, got {self.window!r}")
        if not 0.0 <= self.max_rate <= 1.0:
            raise EncodingError(f"max_rate is a per-step probability, got {self.max_rate!r}")

        if self.scheme in (SCHEME_POPULATION_RATE, SCHEME_POPULATION_TIME) and self.neurons_per_value < 2:
            raise EncodingError(f"Population schemes need neurons_per_value >= 2, got {self.neurons_per_value}")

        if self.scheme == SCHEME_POPULATION_TIME:
            n = self.neurons_per_value
            centers = tuple(float(c) for c in self.centers) or tuple(np.linspace(0.0, 1.0, n).tolist())
            widths = tuple(float(w) for w in self.widths) or (1.0 / (n - 1),) * n
            if len(centers) != n or len(widths) != n:
                raise EncodingError(f"Receptive fields need {n} centers and widths, "
                                    f"got {len(centers)} and {len(widths)}")
            if any(b <= a for a, b in zip(centers, centers[1:])):
                raise EncodingError(f"Receptive field centers must be strictly increasing: {centers}")
            if any(not w > 0 for w in widths):
                raise EncodingError(f"Receptive field widths must be positive: {widths}")
            object.__setattr__(self, "centers", centers)
            object.__setattr__(self, "widths", widths)

    @property
    def rows(self) -> int:
        """Spike trains produced per encoded value."""
        if self.scheme in (SCHEME_POPULATION_RATE, SCHEME_POPULATION_TIME):
            return self.neurons_per_value
        return 1

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> "EncoderSpec":
        data = dict(data or {})
        for key in ("centers", "widths"):
            if key in data:
                data[key] = tuple(data[key])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise EncodingError(f"Unknown encoder fields: {sorted(unknown)}")
        return cls(**data)

    def as_dict(self) -> Dict:
        return {
            "scheme": self.scheme,
            "window": self.window,
            "neurons_per_value": self.neurons_per_value,
            "max_rate": self.max_rate,
            "centers": list(self.centers),
            "widths": list(self.widths),
            "deterministic": self.deterministic,
        }


def _check_value(value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise EncodingError(f"Encoded values must lie in [0, 1], got {value!r}")
    return value


def _check_scheme(spec: EncoderSpec, scheme: str) -> None:
    if spec.scheme != scheme:
        raise EncodingError(f"Encoder spec has scheme '{spec.scheme}', expected '{scheme}'")


def _spike_count(rate: float, window: int) -> int:
    return int(math.floor(rate * window + _COUNT_EPSILON))


def _spaced_train(rate: float, window: int) -> np.ndarray:
    """floor(rate * window) spikes, spike k at step ceil(k / rate)."""
    train = np.zeros(window, dtype=np.uint8)
    for k in range(1, _spike_count(rate, window) + 1):
        step = min(math.ceil(k / rate - _COUNT_EPSILON), window)
        train[step - 1] = 1
    return train


def rate_encode(value: float, spec: EncoderSpec, rng=None) -> np.ndarray:
    """
    Rate code: Bernoulli(value * max_rate) per step, or evenly spaced spikes.

    In deterministic mode floor(value * max_rate * window) spikes land on steps
    ceil(k / (value * max_rate)), k = 1, 2, ...

    Returns:
        uint8 matrix of shape (1, window)
    """
    _check_scheme(spec, SCHEME_RATE)
    value = _check_value(value)
    rate = value * spec.max_rate
    if spec.deterministic:
        return _spaced_train(rate, spec.window)[np.newaxis, :]
    return (make_rng(rng).random((1, spec.window)) < rate).astype(np.uint8)


def _latency_step(activation: float, window: int) -> int:
    return _round_half_up(1.0 + (1.0 - activation) * (window - 1))


def time_encode(value: float, spec: EncoderSpec) -> np.ndarray:
    """Latency code: one spike at step round(1 + (1 - value) * (window - 1))."""
    _check_scheme(spec, SCHEME_TIME)
    value = _check_value(value)
    train = np.zeros((1, spec.window), dtype=np.uint8)
    train[0, _latency_step(value, spec.window) - 1] = 1
    return train


def population_rate_encode(value: float, spec: EncoderSpec, rng=None) -> np.ndarray:
    """Each population neuron fires Bernoulli(value * max_rate) per step."""
    _check_scheme(spec, SCHEME_POPULATION_RATE)
    value = _check_value(value)
    rate = value * spec.max_rate
    if spec.deterministic:
        return np.tile(_spaced_train(rate, spec.window), (spec.neurons_per_value, 1))
    return (make_rng(rng).random((spec.neurons_per_value, spec.window)) < rate).astype(np.uint8)


def receptive_activations(value: float, spec: EncoderSpec) -> np.ndarray:
    centers = np.asarray(spec.centers, dtype=float)
    widths = np.asarray(spec.widths, dtype=float)
    return np.exp(-((value - centers) ** 2) / (2.0 * widths ** 2))


def population_time_encode(value: float, spec: EncoderSpec) -> np.ndarray:
    """
    Gaussian receptive fields; neuron k spikes once at its latency step, or not at all
    when its activation is below ACTIVATION_CUTOFF.
    """
    _check_scheme(spec, SCHEME_POPULATION_TIME)
    value = _check_value(value)
    trains = np.zeros((spec.neurons_per_value, spec.window), dtype=np.uint8)
    for k, activation in enumerate(receptive_activations(value, spec)):
        if activation >= ACTIVATION_CUTOFF:
            trains[k, _latency_step(activation, spec.window) - 1] = 1
    return trains


def encode(value: float, spec: EncoderSpec, rng=None) -> np.ndarray:
    """Dispatch on spec.scheme."""
    if spec.scheme == SCHEME_RATE:
        return rate_encode(value, spec, rng)
    if spec.scheme == SCHEME_TIME:
        return time_encode(value, spec)
    if spec.scheme == SCHEME_POPULATION_RATE:
        return population_rate_encode(value, spec, rng)
    return population_time_encode(value, spec)


def encode_vector(values: Sequence[float], spec: EncoderSpec, rng=None) -> SpikeRecord:
    """Stack the trains of every value into one exogenous record (spec.rows rows per value)."""
    rng = make_rng(rng)
    if len(values) == 0:
        return SpikeRecord.zeros(0, spec.window)
    return SpikeRecord(np.vstack([encode(v, spec, rng) for v in values]))


def _argmax_lowest(counts: np.ndarray) -> int:
    # np.argmax returns the first maximum
    return int(np.argmax(counts))


def rate_decode(output: SpikeRecord) -> int:
    """
    Class label = visible neuron with the most spikes; ties go to the lowest index.

    Raises:
        EncodingError: empty record
    """
    if output.rows == 0 or output.horizon == 0:
        raise EncodingError("Cannot decode an empty spike record")
    return _argmax_lowest(output.counts())


def decode_rates(outputs) -> int:
    """rate_decode for real-valued outputs (expected-rate read-out)."""
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim != 2 or outputs.size == 0:
        raise EncodingError(f"Cannot decode outputs of shape {outputs.shape}")
    return _argmax_lowest(outputs.sum(axis=1))


def make_target(label: int, classes: int, spec: EncoderSpec) -> SpikeRecord:
    """
    Visible target: the label's neuron carries the deterministic rate pattern for value 1,
    every other class neuron stays silent.

    Raises:
        EncodingError: label out of range, or max_rate * window below one spike
    """
    if classes < 1:
        raise EncodingError(f"Need at least one class, got {classes}")
    if not 0 <= label < classes:
        raise EncodingError(f"Label {label} out of range for {classes} classes")
    if _spike_count(spec.max_rate, spec.window) < 1:
        raise EncodingError(f"Target pattern is empty: max_rate {spec.max_rate!r} over "
                            f"{spec.window} steps gives no spike")
    spikes = np.zeros((classes, spec.window), dtype=np.uint8)
    spikes[label] = _spaced_train(spec.max_rate, spec.window)
    return SpikeRecord(spikes)
