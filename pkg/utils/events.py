"""
Event-camera streams: loading, saving, cropping and binning into spike frames.

FILE FORMATS (see docs/FORMATS.md):
- text:   one "t,x,y,p" record per line, t in microseconds, p in {-1, +1}; blank lines
          and lines starting with '#' are skipped
- binary: packed little-endian records <u4 t, <u2 x, <u2 y, i1 p> (9 bytes each)

Events must be sorted by timestamp (non-decreasing). Frames are binary: several
events on one (pixel, bin) collapse to a single 1.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.error_handler import EventFormatError, ShapeError, ValidationError
from core.utils import atomic_write_bytes, atomic_write_text
from utils.network import SpikeRecord

logger = logging.getLogger(__name__)


FORMAT_TEXT = "text"
FORMAT_BINARY = "binary"
FORMAT_AUTO = "auto"
BINARY_EXTENSIONS = (".bin", ".evt")

EVENT_DTYPE = np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
RECORD_SIZE = EVENT_DTYPE.itemsize

POLARITY_PER_SIGN = "per_sign"
POLARITY_BINARY = "binary"
POLARITY_MODES = (POLARITY_PER_SIGN, POLARITY_BINARY)

DEFAULT_DURATION_CAP = 2_000_000  # microseconds


@dataclass(frozen=True)
class Event:
    timestamp: int
    x: int
    y: int
    polarity: int


@dataclass
class EventStream:
    """
    Sorted events stored column-wise.

    sensor is (height, width) when known; otherwise it is inferred from the events.
    """
    timestamps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    xs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    polarities: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    sensor: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return len(self.timestamps)

    def __iter__(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.timestamps, self.xs, self.ys, self.polarities):
            yield Event(int(t), int(x), int(y), int(p))

    @classmethod
    def from_events(cls, events: Sequence[Event], sensor: Optional[Tuple[int, int]] = None) -> "EventStream":
        stream = cls(
            np.array([e.timestamp for e in events], dtype=np.int64),
            np.array([e.x for e in events], dtype=np.int64),
            np.array([e.y for e in events], dtype=np.int64),
            np.array([e.polarity for e in events], dtype=np.int8),
            sensor,
        )
        stream.validate()
        return stream

    def validate(self) -> None:
        if len(self) and np.any(np.diff(self.timestamps) < 0):
            k = int(np.argmax(np.diff(self.timestamps) < 0)) + 1
            raise EventFormatError(f"Timestamps are not sorted at event {k}")
        bad = ~np.isin(self.polarities, (-1, 1))
        if np.any(bad):
            raise EventFormatError(f"Unknown polarity {int(self.polarities[np.argmax(bad)])}")
        if np.any(self.timestamps < 0) or np.any(self.xs < 0) or np.any(self.ys < 0):
            raise EventFormatError("Timestamps and coordinates must be non-negative")

    def sensor_size(self) -> Tuple[int, int]:
        """(height, width): the declared sensor, or the smallest one holding every event."""
        if self.sensor is not None:
            return self.sensor
        if not len(self):
            return 0, 0
        return int(self.ys.max()) + 1, int(self.xs.max()) + 1


@dataclass
class FrameSequence:
    """Binary frames of shape (channels, height, width, T); period in microseconds per step."""
    frames: np.ndarray
    period: int

    @property
    def channels(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def horizon(self) -> int:
        return self.frames.shape[3]


def _resolve_format(path: str, fmt: str) -> str:
    if fmt != FORMAT_AUTO:
        if fmt not in (FORMAT_TEXT, FORMAT_BINARY):
            raise ValidationError(f"Unknown event format '{fmt}'")
        return fmt
    return FORMAT_BINARY if os.path.splitext(path)[1].lower() in BINARY_EXTENSIONS else FORMAT_TEXT


def _parse_text(text: str) -> EventStream:
    columns: List[List[int]] = [[], [], [], []]
    last_t = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise EventFormatError(f"Expected 't,x,y,p', got {line!r}", line=number)
        try:
            t, x, y, p = (int(f.strip()) for f in fields)
        except ValueError:
            raise EventFormatError(f"Non-integer field in {line!r}", line=number)
        if t < 0 or x < 0 or y < 0:
            raise EventFormatError(f"Negative timestamp or coordinate in {line!r}", line=number)
        if p not in (-1, 1):
            raise EventFormatError(f"Unknown polarity {p}", line=number)
        if last_t is not None and t < last_t:
            raise EventFormatError(f"Timestamp {t} precedes {last_t}", line=number)
        last_t = t
        for column, value in zip(columns, (t, x, y, p)):
            column.append(value)
    return EventStream(np.array(columns[0], dtype=np.int64), np.array(columns[1], dtype=np.int64),
                       np.array(columns[2], dtype=np.int64), np.array(columns[3], dtype=np.int8))


def _parse_binary(data: bytes) -> EventStream:
    usable = len(data) - len(data) % RECORD_SIZE
    if usable != len(data):
        raise EventFormatError(f"Truncated record: {len(data) % RECORD_SIZE} trailing bytes", offset=usable)
    records = np.frombuffer(data, dtype=EVENT_DTYPE)
    bad = ~np.isin(records["p"], (-1, 1))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise EventFormatError(f"Unknown polarity {int(records['p'][k])}", offset=k * RECORD_SIZE + 8)
    t = records["t"].astype(np.int64)
    backwards = np.diff(t) < 0
    if np.any(backwards):
        k = int(np.argmax(backwards)) + 1
        raise EventFormatError(f"Timestamp {int(t[k])} precedes {int(t[k - 1])}", offset=k * RECORD_SIZE)
    return EventStream(t, records["x"].astype(np.int64), records["y"].astype(np.int64),
                       records["p"].astype(np.int8))


def load_events(source: str, fmt: str = FORMAT_AUTO, sensor: Optional[Tuple[int, int]] = None) -> EventStream:
    """
    Read an event file.

    Args:
        source: Path to a text or binary event file
        fmt: 'text', 'binary' or 'auto' (binary for .bin/.evt, text otherwise)
        sensor: Optional (height, width) of the sensor

    Raises:
        EventFormatError: malformed record (with line or byte offset), unsorted
            timestamps or unknown polarity
    """
    if not os.path.exists(source):
        raise ValidationError(f"Event file not found: {source}")
    fmt = _resolve_format(source, fmt)
    with open(source, "rb") as f:
        data = f.read()
    if fmt == FORMAT_TEXT:
        try:
            stream = _parse_text(data.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise EventFormatError("Text event file is not valid UTF-8", offset=e.start)
    else:
        stream = _parse_binary(data)
    stream.sensor = sensor
    logger.debug(f"Loaded {len(stream)} events from {source}")
    return stream


def _check_binary_range(stream: EventStream) -> None:
    for name, values in (("t", stream.timestamps), ("x", stream.xs), ("y", stream.ys)):
        limit = np.iinfo(EVENT_DTYPE[name]).max
        over = np.asarray(values) > limit
        if np.any(over):
            k = int(np.argmax(over))
            raise EventFormatError(f"Event {k}: {name} = {int(values[k])} does not fit the binary "
                                   f"format (max {limit})", offset=k * RECORD_SIZE)


def save_events(stream: EventStream, path: str, fmt: str = FORMAT_AUTO) -> None:
    """
    Write a stream in the text or binary format, atomically.

    Raises:
        EventFormatError: invalid events, or a field too large for its binary slot
    """
    fmt = _resolve_format(path, fmt)
    stream.validate()
    if fmt == FORMAT_TEXT:
        lines = [f"{int(t)},{int(x)},{int(y)},{int(p)}\n"
                 for t, x, y, p in zip(stream.timestamps, stream.xs, stream.ys, stream.polarities)]
        atomic_write_text(path, "".join(lines))
        return
    _check_binary_range(stream)
    records = np.zeros(len(stream), dtype=EVENT_DTYPE)
    records["t"], records["x"], records["y"], records["p"] = (
        stream.timestamps, stream.xs, stream.ys, stream.polarities)
    atomic_write_bytes(path, records.tobytes())


def crop_and_bin(
    stream: EventStream,
    crop: Tuple[int, int],
    period: int,
    duration_cap: Optional[int] = DEFAULT_DURATION_CAP,
    polarity_mode: str = POLARITY_PER_SIGN,
    origin: Optional[int] = None,
) -> FrameSequence:
    """
    Centered crop, then bin events into binary frames.

    Time is measured from origin (the first event when None). With a duration cap,
    events at or beyond the cap are dropped and T = ceil(duration_cap / period);
    without one T covers the last event. per_sign puts +1 events in channel 0 and
    -1 events in channel 1; binary ignores polarity.

    Raises:
        ShapeError: crop larger than the sensor
    """
    if polarity_mode not in POLARITY_MODES:
        raise ValidationError(f"Unknown polarity mode '{polarity_mode}', expected one of {POLARITY_MODES}")
    if period < 1:
        raise ValidationError(f"Binning period must be a positive number of microseconds, got {period}")
    height, width = crop
    sensor_h, sensor_w = stream.sensor_size()
    if len(stream) or stream.sensor is not None:
        if height > sensor_h or width > sensor_w:
            raise ShapeError(f"Crop {height}x{width} is larger than the {sensor_h}x{sensor_w} sensor")
    top, left = max(sensor_h - height, 0) // 2, max(sensor_w - width, 0) // 2

    if origin is not None:
        start = int(origin)
        if len(stream) and stream.timestamps[0] < start:
            raise ValidationError(f"Event at {int(stream.timestamps[0])} precedes the time origin {start}")
    else:
        start = int(stream.timestamps[0]) if len(stream) else 0
    elapsed = stream.timestamps - start
    keep = ((stream.ys >= top) & (stream.ys < top + height) &
            (stream.xs >= left) & (stream.xs < left + width))
    if duration_cap is not None:
        keep &= elapsed < duration_cap
        horizon = math.ceil(duration_cap / period)
    else:
        horizon = max(1, math.ceil((int(elapsed.max()) + 1) / period)) if len(stream) else 1

    channels = 2 if polarity_mode == POLARITY_PER_SIGN else 1
    frames = np.zeros((channels, height, width, horizon), dtype=np.uint8)
    bins = elapsed[keep] // period
    rows, cols = stream.ys[keep] - top, stream.xs[keep] - left
    if polarity_mode == POLARITY_PER_SIGN:
        channel = (stream.polarities[keep] < 0).astype(np.int64)
    else:
        channel = np.zeros(len(bins), dtype=np.int64)
    frames[channel, rows, cols, bins] = 1
    return FrameSequence(frames, period)


def flatten(frames: FrameSequence) -> SpikeRecord:
    """Channel index = (c * height + row) * width + col."""
    f = frames.frames
    return SpikeRecord(f.reshape(f.shape[0] * f.shape[1] * f.shape[2], f.shape[3]))


def unflatten(record: SpikeRecord, shape: Tuple[int, int, int], period: int = 1) -> FrameSequence:
    """Inverse of flatten for frames of shape (channels, height, width)."""
    channels, height, width = shape
    if record.rows != channels * height * width:
        raise ShapeError(f"Record has {record.rows} rows, shape {shape} needs {channels * height * width}")
    return FrameSequence(record.spikes.reshape(channels, height, width, record.horizon).copy(), period)


def rebin(record: SpikeRecord, factor: int) -> SpikeRecord:
    """Coarser sampling: OR over consecutive groups of factor steps (last group may be short)."""
    if factor < 1:
        raise ValidationError(f"Rebin factor must be >= 1, got {factor}")
    if factor == 1:
        return SpikeRecord(record.spikes.copy())
    horizon = math.ceil(record.horizon / factor)
    padded = np.zeros((record.rows, horizon * factor), dtype=np.uint8)
    padded[:, :record.horizon] = record.spikes
    return SpikeRecord(padded.reshape(record.rows, horizon, factor).max(axis=2))
