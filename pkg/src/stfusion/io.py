"""On-disk formats: trace, event and prediction CSVs plus binary checkpoints.

Every writer emits a canonical form, so ``emit(parse(text)) == text`` for any
file produced by this package.  Sample and probability values are stored as
32-bit floats and written with the shortest decimal string that round-trips.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

import numpy as np

from .exceptions import DataError, FormatError

__all__ = [
    "AccelTrace",
    "EventList",
    "FrameLabels",
    "Prediction",
    "parse_trace",
    "emit_trace",
    "read_trace",
    "write_trace",
    "parse_events",
    "emit_events",
    "read_events",
    "write_events",
    "events_to_frames",
    "label_times",
    "frame_centers",
    "parse_predictions",
    "emit_predictions",
    "format_prediction",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_bytes",
    "checkpoint_from_bytes",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]

TextLike = Union[str, bytes]

CHECKPOINT_MAGIC = b"STFD"
CHECKPOINT_VERSION = 1


def _as_text(text: TextLike) -> str:
    if isinstance(text, bytes):
        try:
            return text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"input is not valid UTF-8: {exc}") from None
    return text


def _fmt32(value) -> str:
    return str(np.float32(value))


def _fmt64(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True, eq=False)
class AccelTrace:
    """Three-axis acceleration samples at a fixed rate.

    ``samples`` is an ``(n, 3)`` float32 array.
    """

    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        if isinstance(self.sample_rate_hz, bool) or int(self.sample_rate_hz) != self.sample_rate_hz:
            raise DataError(f"sample_rate_hz must be an integer, got {self.sample_rate_hz!r}")
        if self.sample_rate_hz <= 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DataError(f"samples must have shape (n, 3), got {arr.shape}")
        if arr.shape[0] < 1:
            raise DataError("trace must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise DataError("trace contains NaN or Inf samples")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccelTrace):
            return NotImplemented
        return self.sample_rate_hz == other.sample_rate_hz and np.array_equal(self.samples, other.samples)

    def slice(self, start: int, stop: int) -> "AccelTrace":
        return AccelTrace(self.sample_rate_hz, self.samples[start:stop])


@dataclass(frozen=True)
class EventList:
    """Sorted, disjoint ``(onset_s, offset_s)`` intervals meaning "in bed"."""

    events: tuple = ()

    def __post_init__(self):
        evs = tuple((float(on), float(off)) for on, off in self.events)
        prev_off = -math.inf
        for i, (on, off) in enumerate(evs):
            if not (math.isfinite(on) and math.isfinite(off)):
                raise DataError(f"event {i}: non-finite boundary")
            if on < 0:
                raise DataError(f"event {i}: negative onset {on}")
            if on >= off:
                raise DataError(f"event {i}: onset {on} is not before offset {off}")
            if on < prev_off:
                raise DataError(f"event {i}: overlaps or precedes the previous event")
            prev_off = off
        object.__setattr__(self, "events", evs)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.events)

    def __getitem__(self, i):
        return self.events[i]

    @property
    def total_duration_s(self) -> float:
        return sum(off - on for on, off in self.events)


@dataclass(frozen=True, eq=False)
class FrameLabels:
    hop_s: float
    labels: np.ndarray

    def __post_init__(self):
        if not self.hop_s > 0:
            raise DataError(f"hop_s must be positive, got {self.hop_s}")
        lab = np.asarray(self.labels)
        if lab.size and not np.all((lab == 0) | (lab == 1)):
            raise DataError("frame labels must be 0 or 1")
        object.__setattr__(self, "labels", lab.astype(np.uint8))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameLabels):
            return NotImplemented
        return self.hop_s == other.hop_s and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class Prediction:
    """One emitted frame: ``frame_index,time_s,prob,label``."""

    frame_index: int
    time_s: float
    prob: float
    label: int


# --------------------------------------------------------------------------
# traces


def parse_trace(text: TextLike) -> AccelTrace:
    text = _as_text(text)
    lines = text.splitlines()
    if not lines:
        raise FormatError("missing 'sample_rate_hz=<int>' header")
    key, sep, value = lines[0].strip().partition("=")
    if key != "sample_rate_hz" or not sep:
        raise FormatError(f"bad header line {lines[0]!r}; expected 'sample_rate_hz=<int>'")
    try:
        rate = int(value)
    except ValueError:
        raise FormatError(f"sample rate {value!r} is not an integer") from None
    if rate <= 0:
        raise FormatError(f"sample rate must be positive, got {rate}")

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rows.append(_parse_row(line, lineno))
    if not rows:
        raise DataError("trace has no samples")
    # parsed as float64, narrowed to float32 on construction
    return AccelTrace(rate, np.array(rows, dtype=np.float64))


def _parse_row(line: str, lineno: int) -> tuple:
    parts = line.split(",")
    if len(parts) != 3:
        raise DataError(f"line {lineno}: expected 3 comma-separated values, got {len(parts)}")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric field in {line.strip()!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise DataError(f"line {lineno}: NaN or Inf value")
    if any(abs(v) > np.finfo(np.float32).max for v in vals):
        raise DataError(f"line {lineno}: value out of 32-bit range")
    return vals


def format_sample(row) -> str:
    return ",".join(_fmt32(v) for v in row)


def emit_trace(trace: AccelTrace) -> str:
    out = [f"sample_rate_hz={trace.sample_rate_hz}\n"]
    out.extend(format_sample(row) + "\n" for row in trace.samples)
    return "".join(out)


def read_trace(path) -> AccelTrace:
    with open(path, "rb") as fh:
        return parse_trace(fh.read())


def write_trace(trace: AccelTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(emit_trace(trace))


# --------------------------------------------------------------------------
# events and frame labels


def parse_events(text: TextLike) -> EventList:
    text = _as_text(text)
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"line {lineno}: expected 'onset_s,offset_s'")
        try:
            on, off = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric field in {line.strip()!r}") from None
        events.append((on, off))
    events.sort()
    return EventList(tuple(events))


def emit_events(events: EventList) -> str:
    return "".join(f"{_fmt64(on)},{_fmt64(off)}\n" for on, off in events)


def read_events(path) -> EventList:
    with open(path, "rb") as fh:
        return parse_events(fh.read())


def write_events(events: EventList, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(emit_events(events))


def frame_centers(hop_s: float, n_frames: int) -> np.ndarray:
    return (np.arange(n_frames, dtype=np.float64) + 0.5) * hop_s


def label_times(events: EventList, times) -> np.ndarray:
    """1 where a time falls inside a half-open ``[onset, offset)`` event, else 0."""
    times = np.asarray(times, dtype=np.float64)
    labels = np.zeros(times.shape, dtype=np.uint8)
    if len(events):
        onsets = np.array([on for on, _ in events])
        offsets = np.array([off for _, off in events])
        idx = np.searchsorted(onsets, times, side="right") - 1
        valid = idx >= 0
        inside = np.zeros(times.shape, dtype=bool)
        inside[valid] = times[valid] < offsets[idx[valid]]
        labels[inside] = 1
    return labels


def events_to_frames(events: EventList, hop_s: float, n_frames: int) -> FrameLabels:
    """Label frame ``t`` with 1 iff its center ``(t + 0.5) * hop_s`` lies inside an event."""
    if not hop_s > 0:
        raise DataError(f"hop_s must be positive, got {hop_s}")
    if n_frames < 1:
        raise DataError(f"n_frames must be >= 1, got {n_frames}")
    return FrameLabels(hop_s, label_times(events, frame_centers(hop_s, n_frames)))


# --------------------------------------------------------------------------
# predictions


def format_prediction(p: Prediction) -> str:
    return f"{p.frame_index},{_fmt64(p.time_s)},{_fmt32(p.prob)},{p.label}\n"


def emit_predictions(preds: Iterable[Prediction]) -> str:
    return "".join(format_prediction(p) for p in preds)


def parse_predictions(text: TextLike) -> list:
    text = _as_text(text)
    preds = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"line {lineno}: expected 'frame_index,time_s,prob,label'")
        try:
            idx, t, prob, label = int(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError:
            raise DataError(f"line {lineno}: malformed field in {line.strip()!r}") from None
        if label not in (0, 1):
            raise DataError(f"line {lineno}: label must be 0 or 1")
        if not (0.0 <= prob <= 1.0):
            raise DataError(f"line {lineno}: probability {prob} outside [0, 1]")
        if preds and idx != preds[-1].frame_index + 1:
            raise DataError(f"line {lineno}: frame indices must be consecutive")
        preds.append(Prediction(idx, t, float(np.float32(prob)), label))
    return preds


# --------------------------------------------------------------------------
# checkpoints

_HEADER = struct.Struct("<4sII")


def checkpoint_bytes(params) -> bytes:
    """Serialize a ParamStore (or ``name -> array`` mapping) to bytes."""
    items = list(params.items())
    chunks = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(items))]
    for name, value in items:
        arr = np.asarray(getattr(value, "data", value))
        if not np.all(np.isfinite(arr)):
            raise DataError(f"parameter {name!r} has non-finite values")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise DataError(f"parameter name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise DataError(f"parameter {name!r} has too many dimensions")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def checkpoint_from_bytes(blob: bytes):
    """Inverse of :func:`checkpoint_bytes`; returns a ParamStore."""
    from .autodiff import ParamStore, Tensor

    if len(blob) < _HEADER.size:
        raise FormatError("checkpoint truncated: header incomplete")
    magic, version, count = _HEADER.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos = _HEADER.size
    store = ParamStore()

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError("checkpoint truncated")
        out = blob[pos:pos + n]
        pos += n
        return out

    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("checkpoint parameter name is not UTF-8") from None
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        if name in store:
            raise FormatError(f"duplicate parameter name {name!r}")
        store.add(name, Tensor(data, requires_grad=not _is_buffer(name), dtype=np.float32))
    if pos != len(blob):
        raise FormatError(f"checkpoint has {len(blob) - pos} trailing bytes")
    return store


def _is_buffer(name: str) -> bool:
    return name.endswith(".running_mean") or name.endswith(".running_var")


def save_checkpoint(params, path) -> None:
    blob = checkpoint_bytes(params)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read())
