"""Track-1 and Track-2 metrics.

The composite Track-2 score is a fixed, documented stand-in:

    points = 100 * frame_accuracy
             - (mean |onset latency| + mean |offset latency|) / 2
             - 5 * (unmatched_true + unmatched_pred) / max(1, n_true_events)

clamped to ``[0, 100]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import ShapeError
from .io import EventList

__all__ = [
    "ScoreReport",
    "LatencyStats",
    "EventMatch",
    "segment_accuracy",
    "frame_accuracy",
    "overlap",
    "match_events",
    "latency_stats",
    "composite_score",
]


def segment_accuracy(preds, labels, threshold: float = 0.5) -> float:
    """Fraction of ``(p > threshold) == label``; a tie predicts 0."""
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape:
        raise ShapeError(f"{p.shape[0]} predictions vs {y.shape[0]} labels")
    if p.size == 0:
        raise ShapeError("segment_accuracy needs at least one prediction")
    return float(np.mean((p > threshold).astype(int) == y.astype(int)))


frame_accuracy = segment_accuracy


def overlap(a: tuple, b: tuple) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


@dataclass(frozen=True)
class EventMatch:
    pairs: tuple  # ((pred_index, true_index), ...) in match order
    unmatched_pred: tuple
    unmatched_true: tuple
    total_overlap: float


def match_events(pred: EventList, truth: EventList) -> EventMatch:
    """Greedy one-to-one matching by descending overlap; zero overlap never matches.

    Ties are broken by prediction index, then truth index.
    """
    cands = []
    for i, p in enumerate(pred):
        for j, t in enumerate(truth):
            ov = overlap(p, t)
            if ov > 0:
                cands.append((-ov, i, j))
    cands.sort()
    used_p, used_t, pairs, total = set(), set(), [], 0.0
    for neg_ov, i, j in cands:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        pairs.append((i, j))
        total += -neg_ov
    return EventMatch(
        tuple(pairs),
        tuple(i for i in range(len(pred)) if i not in used_p),
        tuple(j for j in range(len(truth)) if j not in used_t),
        total,
    )


@dataclass(frozen=True)
class LatencyStats:
    onsets: tuple
    offsets: tuple

    @staticmethod
    def _stats(vals):
        if not vals:
            return 0.0, 0.0, 0.0
        a = np.asarray(vals, dtype=np.float64)
        return float(a.mean()), float(np.abs(a).mean()), float(np.abs(a).max())

    @property
    def onset_mean(self):
        return self._stats(self.onsets)[0]

    @property
    def onset_mean_abs(self):
        return self._stats(self.onsets)[1]

    @property
    def onset_max_abs(self):
        return self._stats(self.onsets)[2]

    @property
    def offset_mean(self):
        return self._stats(self.offsets)[0]

    @property
    def offset_mean_abs(self):
        return self._stats(self.offsets)[1]

    @property
    def offset_max_abs(self):
        return self._stats(self.offsets)[2]


def latency_stats(pairs: Sequence[tuple]) -> LatencyStats:
    """Signed boundary latencies (prediction minus truth; positive means late).

    ``pairs`` holds ``(pred_event, true_event)`` interval pairs.
    """
    onsets = tuple(p[0] - t[0] for p, t in pairs)
    offsets = tuple(p[1] - t[1] for p, t in pairs)
    return LatencyStats(onsets, offsets)


def composite_score(frame_accuracy: float, mean_abs_onset_s: float, mean_abs_offset_s: float,
                    unmatched_true: int, unmatched_pred: int, n_true_events: int) -> float:
    points = (100.0 * frame_accuracy
              - 1.0 * (mean_abs_onset_s + mean_abs_offset_s) / 2.0
              - 5.0 * (unmatched_true + unmatched_pred) / max(1, n_true_events))
    return float(min(100.0, max(0.0, points)))


@dataclass
class ScoreReport:
    segment_accuracy: Optional[float] = None
    frame_accuracy: Optional[float] = None
    onset_latencies_s: List[float] = field(default_factory=list)
    offset_latencies_s: List[float] = field(default_factory=list)
    unmatched_true: int = 0
    unmatched_pred: int = 0
    n_true_events: int = 0
    n_frames: int = 0
    frames_correct: int = 0
    lookahead_s: Optional[float] = None
    composite: Optional[float] = None

    @property
    def latency(self) -> LatencyStats:
        return LatencyStats(tuple(self.onset_latencies_s), tuple(self.offset_latencies_s))

    @property
    def mean_abs_onset_s(self) -> float:
        return self.latency.onset_mean_abs

    @property
    def mean_abs_offset_s(self) -> float:
        return self.latency.offset_mean_abs

    @property
    def mean_abs_boundary_s(self) -> float:
        lat = self.onset_latencies_s + self.offset_latencies_s
        return float(np.mean(np.abs(lat))) if lat else 0.0

    def finalize(self) -> "ScoreReport":
        if self.frame_accuracy is not None:
            self.composite = composite_score(self.frame_accuracy, self.mean_abs_onset_s, self.mean_abs_offset_s,
                                             self.unmatched_true, self.unmatched_pred, self.n_true_events)
        return self

    def add_trace(self, frame_correct: int, n_frames: int, pred: EventList, truth: EventList) -> None:
        """Accumulate one trace into pooled frame accuracy and event statistics."""
        self.frames_correct += int(frame_correct)
        self.n_frames += int(n_frames)
        self.frame_accuracy = self.frames_correct / max(1, self.n_frames)
        m = match_events(pred, truth)
        lat = latency_stats([(pred[i], truth[j]) for i, j in m.pairs])
        self.onset_latencies_s.extend(lat.onsets)
        self.offset_latencies_s.extend(lat.offsets)
        self.unmatched_true += len(m.unmatched_true)
        self.unmatched_pred += len(m.unmatched_pred)
        self.n_true_events += len(truth)

    def to_lines(self) -> str:
        rows = []
        if self.segment_accuracy is not None:
            rows.append(("segment_accuracy", self.segment_accuracy))
        if self.frame_accuracy is not None:
            lat = self.latency
            rows += [
                ("frame_accuracy", self.frame_accuracy),
                ("n_frames", self.n_frames),
                ("matched_events", len(self.onset_latencies_s)),
                ("n_true_events", self.n_true_events),
                ("unmatched_true", self.unmatched_true),
                ("unmatched_pred", self.unmatched_pred),
                ("onset_latency_mean_s", lat.onset_mean),
                ("onset_latency_mean_abs_s", lat.onset_mean_abs),
                ("onset_latency_max_abs_s", lat.onset_max_abs),
                ("offset_latency_mean_s", lat.offset_mean),
                ("offset_latency_mean_abs_s", lat.offset_mean_abs),
                ("offset_latency_max_abs_s", lat.offset_max_abs),
            ]
            if self.lookahead_s is not None:
                rows.append(("structural_lookahead_s", self.lookahead_s))
            rows.append(("composite", self.composite))
        return "".join(f"{k}={v!r}\n" for k, v in rows)
