"""
Tests for event file I/O, cropping, binning and frame flattening.
"""

import numpy as np
import pytest

from core.error_handler import EventFormatError, ShapeError, ValidationError
from utils.events import (
    RECORD_SIZE,
    Event,
    EventStream,
    FrameSequence,
    crop_and_bin,
    flatten,
    load_events,
    rebin,
    save_events,
    unflatten,
)
from utils.network import SpikeRecord


def _random_stream(rng, count=300, sensor=(32, 32), span=100_000):
    timestamps = np.sort(rng.integers(0, span, count))
    events = [Event(int(t), int(rng.integers(0, sensor[1])), int(rng.integers(0, sensor[0])),
                    int(rng.choice([-1, 1]))) for t in timestamps]
    return EventStream.from_events(events, sensor)


class TestLoadEvents:
    """Test the text and binary readers."""

    def test_empty_text(self, tmp_path):
        """Test an empty file gives an empty stream."""
        path = tmp_path / "empty.txt"
        path.write_text("")
        assert len(load_events(str(path))) == 0

    def test_empty_binary(self, tmp_path):
        """Test an empty binary file gives an empty stream."""
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        assert len(load_events(str(path))) == 0

    def test_text_record(self, tmp_path):
        """Test '100,3,4,-1' reads as Event(100, 3, 4, -1)."""
        path = tmp_path / "one.txt"
        path.write_text("# t,x,y,p\n100,3,4,-1\n")
        assert list(load_events(str(path))) == [Event(100, 3, 4, -1)]

    def test_text_polarity(self, tmp_path):
        """Test '100,3,4,2' is a polarity error on its line."""
        path = tmp_path / "bad.txt"
        path.write_text("50,1,1,1\n\n100,3,4,2\n")
        with pytest.raises(EventFormatError, match="polarity") as info:
            load_events(str(path))
        assert info.value.line == 3

    def test_text_malformed(self, tmp_path):
        """Test a record with missing fields reports its line."""
        path = tmp_path / "short.txt"
        path.write_text("1,2,3,1\n4,5,6\n")
        with pytest.raises(EventFormatError) as info:
            load_events(str(path))
        assert info.value.line == 2

    def test_text_unsorted(self, tmp_path):
        """Test decreasing timestamps are rejected."""
        path = tmp_path / "unsorted.txt"
        path.write_text("200,0,0,1\n100,0,0,1\n")
        with pytest.raises(EventFormatError, match="precedes") as info:
            load_events(str(path))
        assert info.value.line == 2

    def test_binary_truncated(self, tmp_path):
        """Test a truncated binary record reports the byte offset where it starts."""
        stream = EventStream.from_events([Event(1, 2, 3, 1), Event(5, 6, 7, -1)])
        path = tmp_path / "events.bin"
        save_events(stream, str(path))
        path.write_bytes(path.read_bytes() + b"\x01\x02\x03")
        with pytest.raises(EventFormatError) as info:
            load_events(str(path))
        assert info.value.offset == 2 * RECORD_SIZE

    def test_binary_polarity(self, tmp_path):
        """Test a bad binary polarity points at the polarity byte."""
        stream = EventStream.from_events([Event(1, 2, 3, 1), Event(5, 6, 7, -1)])
        path = tmp_path / "events.bin"
        save_events(stream, str(path))
        data = bytearray(path.read_bytes())
        data[RECORD_SIZE + 8] = 3
        path.write_bytes(bytes(data))
        with pytest.raises(EventFormatError) as info:
            load_events(str(path))
        assert info.value.offset == RECORD_SIZE + 8

    def test_binary_unsorted(self, tmp_path):
        """Test unsorted binary timestamps report the offending record."""
        records = np.zeros(3, dtype=[("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
        records["t"] = [10, 30, 20]
        records["p"] = 1
        path = tmp_path / "events.evt"
        path.write_bytes(records.tobytes())
        with pytest.raises(EventFormatError) as info:
            load_events(str(path))
        assert info.value.offset == 2 * RECORD_SIZE

    def test_missing_file(self, tmp_path):
        """Test a missing file is a validation error."""
        with pytest.raises(ValidationError):
            load_events(str(tmp_path / "nope.txt"))

    def test_format_round_trip(self, tmp_path, rng):
        """Test text and binary files hold the same events."""
        stream = _random_stream(rng)
        save_events(stream, str(tmp_path / "a.txt"))
        save_events(stream, str(tmp_path / "a.bin"))
        text = load_events(str(tmp_path / "a.txt"))
        binary = load_events(str(tmp_path / "a.bin"))
        assert len(text) == len(binary) == len(stream)
        assert list(text) == list(binary) == list(stream)

    def test_unsorted_stream(self):
        """Test building a stream from unsorted events."""
        with pytest.raises(EventFormatError):
            EventStream.from_events([Event(5, 0, 0, 1), Event(4, 0, 0, 1)])


class TestSaveEvents:
    """Test the writers."""

    @pytest.mark.parametrize("event, field", [
        (Event(3, 70_000, 0, 1), "x"),
        (Event(3, 0, 65_536, -1), "y"),
        (Event(2 ** 32, 0, 0, 1), "t"),
    ])
    def test_binary_range(self, tmp_path, event, field):
        """Test a field that overflows its binary slot is refused and nothing is written."""
        stream = EventStream.from_events([Event(1, 0, 0, 1), event])
        path = tmp_path / "events.bin"
        with pytest.raises(EventFormatError, match=f"{field} = ") as info:
            save_events(stream, str(path))
        assert info.value.offset == RECORD_SIZE
        assert list(tmp_path.iterdir()) == []

    def test_text_has_no_range_limit(self, tmp_path):
        """Test the text format keeps coordinates the binary format cannot hold."""
        stream = EventStream.from_events([Event(2 ** 32, 70_000, 1, 1)])
        save_events(stream, str(tmp_path / "events.txt"))
        assert list(load_events(str(tmp_path / "events.txt"))) == [Event(2 ** 32, 70_000, 1, 1)]

    def test_atomic_replace(self, tmp_path):
        """Test overwriting a binary file leaves only the new file behind."""
        path = tmp_path / "events.bin"
        save_events(EventStream.from_events([Event(1, 2, 3, 1)]), str(path))
        save_events(EventStream.from_events([Event(4, 5, 6, -1), Event(7, 8, 9, 1)]), str(path))
        assert [p.name for p in tmp_path.iterdir()] == ["events.bin"]
        assert list(load_events(str(path))) == [Event(4, 5, 6, -1), Event(7, 8, 9, 1)]

    def test_invalid_stream(self, tmp_path):
        """Test a stream with an unknown polarity is not written."""
        stream = EventStream.from_events([Event(1, 2, 3, 1)])
        stream.polarities[0] = 0
        with pytest.raises(EventFormatError):
            save_events(stream, str(tmp_path / "events.txt"))


class TestCropAndBin:
    """Test cropping and binning into frames."""

    def test_per_sign_channels(self, rng):
        """Test a 26x26 per-sign crop flattens to 1,352 channels."""
        frames = crop_and_bin(_random_stream(rng, sensor=(28, 28)), (26, 26), 25_000)
        assert flatten(frames).rows == 1352

    def test_binary_channels(self, rng):
        """Test a 26x26 binary crop flattens to 676 channels."""
        frames = crop_and_bin(_random_stream(rng, sensor=(28, 28)), (26, 26), 25_000, polarity_mode="binary")
        assert flatten(frames).rows == 676

    def test_single_event(self):
        """Test one event at t = 0 with period 25 ms sets exactly one bit in frame 0."""
        stream = EventStream.from_events([Event(0, 1, 1, 1)], sensor=(4, 4))
        frames = crop_and_bin(stream, (4, 4), 25_000)
        assert frames.frames.sum() == 1
        assert frames.frames[0, 1, 1, 0] == 1
        assert frames.horizon == 80

    def test_centered_crop(self):
        """Test the crop window is centered on the sensor."""
        stream = EventStream.from_events([Event(0, 0, 0, 1), Event(0, 2, 3, -1)], sensor=(6, 6))
        frames = crop_and_bin(stream, (2, 2), 10, duration_cap=10)
        assert frames.frames.sum() == 1
        assert frames.frames[1, 1, 0, 0] == 1

    def test_duration_cap(self):
        """Test events at or past the cap are dropped."""
        stream = EventStream.from_events([Event(0, 0, 0, 1), Event(99, 0, 0, 1), Event(100, 0, 0, 1)],
                                         sensor=(1, 1))
        frames = crop_and_bin(stream, (1, 1), 10, duration_cap=100, polarity_mode="binary")
        assert frames.horizon == 10
        assert frames.frames[0, 0, 0].tolist() == [1] + [0] * 8 + [1]

    def test_time_from_first_event(self):
        """Test time is measured from the first event unless an origin is given."""
        stream = EventStream.from_events([Event(1000, 0, 0, 1)], sensor=(1, 1))
        assert crop_and_bin(stream, (1, 1), 100, duration_cap=500).frames[0, 0, 0, 0] == 1
        shifted = crop_and_bin(stream, (1, 1), 100, duration_cap=2000, origin=0)
        assert shifted.frames[0, 0, 0, 10] == 1

    def test_crop_too_large(self):
        """Test a crop larger than the sensor."""
        stream = EventStream.from_events([Event(0, 0, 0, 1)], sensor=(10, 10))
        with pytest.raises(ShapeError):
            crop_and_bin(stream, (26, 26), 1000)

    def test_bin_conservation(self, rng):
        """Test set bits never exceed in-crop events, with equality when no bin is shared."""
        stream = _random_stream(rng, count=500, sensor=(8, 8), span=50_000)
        frames = crop_and_bin(stream, (8, 8), 1000, duration_cap=None, polarity_mode="binary")
        assert frames.frames.sum() <= len(stream)

        sparse = EventStream.from_events([Event(0, 0, 0, 1), Event(10, 1, 0, -1), Event(20, 0, 0, 1)],
                                         sensor=(2, 2))
        frames = crop_and_bin(sparse, (2, 2), 10, duration_cap=None, polarity_mode="binary")
        assert frames.frames.sum() == 3

    def test_per_sign_or_binary(self, rng):
        """Test the OR of the two per-sign channels is the binary channel."""
        stream = _random_stream(rng, count=400, sensor=(10, 10), span=30_000)
        per_sign = crop_and_bin(stream, (8, 8), 1000, duration_cap=30_000)
        binary = crop_and_bin(stream, (8, 8), 1000, duration_cap=30_000, polarity_mode="binary")
        np.testing.assert_array_equal(per_sign.frames.max(axis=0), binary.frames[0])

    def test_unknown_polarity_mode(self):
        """Test an unknown polarity mode."""
        stream = EventStream.from_events([Event(0, 0, 0, 1)], sensor=(1, 1))
        with pytest.raises(ValidationError):
            crop_and_bin(stream, (1, 1), 10, polarity_mode="signed")


class TestFlatten:
    """Test the frame <-> record index mapping."""

    def test_identity(self, rng):
        """Test a 1x1x1xT frame flattens to the same train."""
        frames = FrameSequence(rng.integers(0, 2, (1, 1, 1, 7)).astype(np.uint8), 10)
        np.testing.assert_array_equal(flatten(frames).spikes[0], frames.frames[0, 0, 0])

    def test_order(self):
        """Test 2x2x2x1 flattens channel, then row, then column."""
        frames = np.zeros((2, 2, 2, 1), dtype=np.uint8)
        frames[1, 0, 1, 0] = 1
        record = flatten(FrameSequence(frames, 10))
        assert record.rows == 8
        assert np.flatnonzero(record.spikes[:, 0]).tolist() == [(1 * 2 + 0) * 2 + 1]

    def test_round_trip(self, rng):
        """Test unflatten inverts flatten."""
        record = SpikeRecord(rng.integers(0, 2, (2 * 3 * 4, 5)))
        frames = unflatten(record, (2, 3, 4), period=100)
        assert frames.period == 100
        assert flatten(frames) == record

    def test_unflatten_shape(self):
        """Test unflatten with a shape that does not match the rows."""
        with pytest.raises(ShapeError):
            unflatten(SpikeRecord.zeros(5, 3), (2, 2, 1))


class TestRebin:
    """Test coarser resampling."""

    def test_or_groups(self):
        """Test each coarse step is the OR of its group, the last group may be short."""
        record = SpikeRecord(np.array([[1, 0, 0, 0, 0, 0, 1], [0, 0, 0, 1, 1, 0, 0]]))
        coarse = rebin(record, 3)
        assert coarse.spikes.tolist() == [[1, 0, 1], [0, 1, 0]]

    def test_identity_factor(self, rng):
        """Test factor 1 copies the record."""
        record = SpikeRecord(rng.integers(0, 2, (3, 9)))
        assert rebin(record, 1) == record

    def test_bad_factor(self):
        """Test factor 0 is rejected."""
        with pytest.raises(ValidationError):
            rebin(SpikeRecord.zeros(1, 3), 0)
