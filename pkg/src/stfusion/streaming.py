"""Push-based streaming inference and event-boundary extraction.

A frame ``t`` is emitted once the samples covering frames ``t - R .. t + R``
are buffered, where ``R`` is the model's per-side receptive field.  The
model is evaluated on exactly that window; because every layer is local in
time and zero-pads at the window edge, the centre frame matches the offline
full-trace output.  Once emitted, a frame is never revised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .exceptions import ConfigError, DataError, UsageError
from .io import EventList, Prediction, frame_centers

__all__ = ["StreamConfig", "RingBuffer", "StreamState", "extract_events", "offline_frame_probs",
           "structural_latency_s"]


@dataclass(frozen=True)
class StreamConfig:
    threshold_on: float = 0.6
    threshold_off: float = 0.4
    min_dur_s: float = 5.0
    min_gap_s: float = 3.0
    label_threshold: float = 0.5

    def validate(self) -> None:
        _check_thresholds(self.threshold_on, self.threshold_off, self.min_dur_s, self.min_gap_s)


def _check_thresholds(on, off, min_dur, min_gap):
    if not 0 < off <= on < 1:
        raise ConfigError(f"need 0 < threshold_off <= threshold_on < 1, got on={on}, off={off}")
    if min_dur < 0 or min_gap < 0:
        raise ConfigError("min_dur_s and min_gap_s must be >= 0")


def extract_events(probs, hop_s: float, threshold_on: float = 0.6, threshold_off: float = 0.4,
                   min_dur_s: float = 5.0, min_gap_s: float = 3.0) -> EventList:
    """Hysteresis thresholding of frame probabilities into events.

    An event opens at the first frame with ``p >= threshold_on`` and closes
    before the first later frame with ``p < threshold_off``.  Boundaries are
    the centre times of the first and last frames inside.  Events separated
    by less than ``min_gap_s`` are merged, then events shorter than
    ``min_dur_s`` (and zero-length single-frame events) are dropped.
    """
    _check_thresholds(threshold_on, threshold_off, min_dur_s, min_gap_s)
    p = np.asarray(probs, dtype=np.float64).ravel()
    centers = frame_centers(hop_s, p.shape[0])
    runs = []
    start = None
    for t, v in enumerate(p):
        if start is None:
            if v >= threshold_on:
                start = t
        elif v < threshold_off:
            runs.append([centers[start], centers[t - 1]])
            start = None
    if start is not None:
        runs.append([centers[start], centers[-1]])

    merged = []
    for run in runs:
        if merged and run[0] - merged[-1][1] < min_gap_s:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    return EventList(tuple((on, off) for on, off in merged if off > on and off - on >= min_dur_s))


def offline_frame_probs(model, trace) -> np.ndarray:
    """Whole-trace frame probabilities from a streaming-head model (eval mode)."""
    return model.predict(np.asarray(trace.samples)[None])[0]


def structural_latency_s(frame: int, n_fft: int, hop: int, lookahead: int, sample_rate_hz: int) -> float:
    """Seconds after stream start at which ``frame`` can first be emitted."""
    return (frame * hop + n_fft + lookahead * hop) / sample_rate_hz


class RingBuffer:
    """Fixed-capacity sample store addressed by absolute sample index."""

    def __init__(self, capacity: int, width: int = 3, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._buf = np.zeros((capacity, width), dtype=dtype)
        self.capacity = capacity
        self.start = 0  # oldest retained absolute index
        self.total = 0  # absolute index one past the newest sample

    def __len__(self) -> int:
        return self.total - self.start

    @property
    def free(self) -> int:
        return self.capacity - len(self)

    def discard_before(self, index: int) -> None:
        self.start = min(max(self.start, index), self.total)

    def write(self, block: np.ndarray) -> None:
        n = block.shape[0]
        if n > self.free:
            raise UsageError(f"ring buffer overflow: {n} samples, {self.free} free")
        pos = self.total % self.capacity
        first = min(n, self.capacity - pos)
        self._buf[pos:pos + first] = block[:first]
        if first < n:
            self._buf[:n - first] = block[first:]
        self.total += n

    def read(self, lo: int, hi: int) -> np.ndarray:
        if lo < self.start or hi > self.total or lo > hi:
            raise UsageError(f"samples [{lo}, {hi}) not buffered (have [{self.start}, {self.total}))")
        idx = np.arange(lo, hi) % self.capacity
        return self._buf[idx]


class StreamState:
    """Single-threaded streaming state machine over a streaming-head model.

    ``push`` accepts any number of ``(x, y, z)`` rows and returns the frames
    that became final; ``close`` flushes the trailing frames using the same
    edge padding as offline inference.
    """

    def __init__(self, model, capacity: int = None, label_threshold: float = 0.5):
        if model.head != "stream":
            raise UsageError("streaming requires a model with the streaming head")
        self.model = model
        self.n_fft, self.hop = model.dsp.n_fft, model.dsp.hop
        self.sample_rate_hz = model.sample_rate_hz
        self.lookahead = model.receptive_field_frames()
        min_capacity = self.n_fft + 2 * self.lookahead * self.hop
        if capacity is None:
            capacity = self.n_fft + (2 * self.lookahead + 1) * self.hop
        if capacity < min_capacity:
            raise ConfigError(f"capacity {capacity} below the {min_capacity} samples one frame needs")
        self.buffer = RingBuffer(capacity)
        self.label_threshold = label_threshold
        self.emitted_frames = 0
        self.closed = False

    @property
    def hop_s(self) -> float:
        return self.hop / self.sample_rate_hz

    def _keep_from(self) -> int:
        return max(0, self.emitted_frames - self.lookahead) * self.hop

    def _ready_until(self) -> int:
        """Exclusive upper frame index with full right-hand context."""
        total = self.buffer.total
        if total < self.n_fft:
            return 0
        return max(0, (total - self.n_fft) // self.hop + 1 - self.lookahead)

    def _emit(self, stop_frame: int, last_frame: int) -> List[Prediction]:
        """Emit frames ``emitted_frames .. stop_frame - 1``; the window ends at ``last_frame``."""
        t0 = self.emitted_frames
        if stop_frame <= t0:
            return []
        first = max(0, t0 - self.lookahead)
        lo = first * self.hop
        hi = last_frame * self.hop + self.n_fft
        window = self.buffer.read(lo, hi)
        probs = self.model.predict(window[None])[0]
        out = []
        for t in range(t0, stop_frame):
            p = float(probs[t - first])
            # integer sample offset first, so times print without float residue
            out.append(Prediction(t, t * self.hop / self.sample_rate_hz, p, int(p > self.label_threshold)))
        self.emitted_frames = stop_frame
        self.buffer.discard_before(self._keep_from())
        return out

    def push(self, chunk) -> List[Prediction]:
        if self.closed:
            raise UsageError("push after close")
        rows = np.asarray(chunk, dtype=np.float32)
        if rows.size == 0:
            return []
        rows = rows.reshape(-1, 3)
        if not np.all(np.isfinite(rows)):
            raise DataError("stream received NaN or Inf samples")
        out = []
        pos = 0
        while pos < rows.shape[0]:
            take = min(self.buffer.free, rows.shape[0] - pos)
            self.buffer.write(rows[pos:pos + take])
            pos += take
            stop = self._ready_until()
            if stop > self.emitted_frames:
                out.extend(self._emit(stop, stop - 1 + self.lookahead))
            elif take == 0:
                raise UsageError("stream buffer stalled; capacity too small")
        return out

    def close(self) -> List[Prediction]:
        if self.closed:
            raise UsageError("stream already closed")
        self.closed = True
        total = self.buffer.total
        if total < self.n_fft:
            return []
        n_frames = (total - self.n_fft) // self.hop + 1
        return self._emit(n_frames, n_frames - 1)
