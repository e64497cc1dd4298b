"""scikit-learn style wrappers around the two training tracks."""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_event_lists, check_labels, check_traces
from .dsp import DSPConfig
from .exceptions import UsageError
from .io import EventList, load_checkpoint, save_checkpoint
from .losses import LossConfig, MixupConfig
from .models import FusionNet, ModelConfig
from .scoring import ScoreReport, segment_accuracy
from .streaming import StreamConfig, StreamState, extract_events
from .training import (Recording, SegmentTrainConfig, StreamTrainConfig, evaluate_recordings,
                       train_segmented, train_streaming)

__all__ = ["SegmentDetector", "StreamingDetector"]


class _DetectorBase(BaseEstimator):
    _head = "segment"

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise UsageError(f"{type(self).__name__} is not fitted; call fit() or load()")

    def _configs(self):
        return self.dsp or DSPConfig(), self.arch or ModelConfig()

    def save(self, path) -> None:
        self._check_fitted()
        save_checkpoint(self.model_.params, path)

    def load(self, path):
        """Restore fitted weights from a checkpoint written by :meth:`save`."""
        dsp, arch = self._configs()
        self.model_ = FusionNet.from_params(load_checkpoint(path), dsp, arch, self.sample_rate_hz)
        if self.model_.head != self._head:
            raise UsageError(f"checkpoint has a {self.model_.head!r} head, expected {self._head!r}")
        self.history_ = []
        return self


class SegmentDetector(ClassifierMixin, _DetectorBase):
    """Track 1: one in-bed probability per fixed-length segment.

    ``X`` is a stack of equal-length ``(n_samples, 3)`` segments (array or
    list of :class:`~stfusion.io.AccelTrace`), ``y`` holds 0/1 labels.
    ``groups`` keeps segments of one recording on the same side of the
    train/validation split.
    """

    _head = "segment"

    def __init__(self, epochs=30, batch_size=8, lr=1e-3, val_fraction=0.2, threshold=0.5, seed=0,
                 sample_rate_hz=250, dsp: Optional[DSPConfig] = None, arch: Optional[ModelConfig] = None,
                 verbose=False):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.val_fraction = val_fraction
        self.threshold = threshold
        self.seed = seed
        self.sample_rate_hz = sample_rate_hz
        self.dsp = dsp
        self.arch = arch
        self.verbose = verbose

    def fit(self, X, y, groups=None):
        traces = check_traces(X, self.sample_rate_hz)
        labels = check_labels(y, len(traces))
        dsp, arch = self._configs()
        cfg = SegmentTrainConfig(self.epochs, self.batch_size, self.lr, self.val_fraction)
        result = train_segmented(traces, labels, groups, cfg, self.seed, dsp, arch,
                                 log_fn=print if self.verbose else None)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X) -> np.ndarray:
        """``(N, 2)`` class probabilities, columns ordered as ``classes_``."""
        self._check_fitted()
        traces = check_traces(X, self.sample_rate_hz)
        p = self.model_.predict(np.stack([t.samples for t in traces]))
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, X) -> np.ndarray:
        # strict comparison: p == threshold predicts "not in bed"
        return (self.predict_proba(X)[:, 1] > self.threshold).astype(np.int64)

    def score(self, X, y, sample_weight=None) -> float:
        traces = check_traces(X, self.sample_rate_hz)
        labels = check_labels(y, len(traces))
        if sample_weight is not None:
            return super().score(traces, labels, sample_weight)
        return segment_accuracy(self.predict_proba(traces)[:, 1], labels, self.threshold)


class StreamingDetector(_DetectorBase):
    """Track 2: frame-wise in-bed probabilities and event boundaries.

    ``fit`` takes whole recordings with their ground-truth ``EventList``s.
    Predictions cover frames ``t`` of length ``hop / sample_rate_hz``
    seconds starting at ``t * hop`` samples.
    """

    _head = "stream"

    def __init__(self, epochs=40, batch_size=4, lr=1e-3, val_fraction=0.2, window_s=60.0,
                 windows_per_trace=2, warmup_steps=64, beta=1.0, mixup=True, mixup_alpha=0.2,
                 threshold_on=0.6, threshold_off=0.4, min_dur_s=5.0, min_gap_s=3.0, seed=0,
                 sample_rate_hz=250, dsp: Optional[DSPConfig] = None, arch: Optional[ModelConfig] = None,
                 verbose=False):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.val_fraction = val_fraction
        self.window_s = window_s
        self.windows_per_trace = windows_per_trace
        self.warmup_steps = warmup_steps
        self.beta = beta
        self.mixup = mixup
        self.mixup_alpha = mixup_alpha
        self.threshold_on = threshold_on
        self.threshold_off = threshold_off
        self.min_dur_s = min_dur_s
        self.min_gap_s = min_gap_s
        self.seed = seed
        self.sample_rate_hz = sample_rate_hz
        self.dsp = dsp
        self.arch = arch
        self.verbose = verbose

    @property
    def stream_config(self) -> StreamConfig:
        return StreamConfig(self.threshold_on, self.threshold_off, self.min_dur_s, self.min_gap_s)

    def fit(self, X, y, groups=None):
        traces = check_traces(X, self.sample_rate_hz)
        events = check_event_lists(y, len(traces))
        groups = range(len(traces)) if groups is None else groups
        recs = [Recording(t, e, g) for t, e, g in zip(traces, events, groups)]
        dsp, arch = self._configs()
        cfg = StreamTrainConfig(self.epochs, self.batch_size, self.lr, self.val_fraction, self.window_s,
                                self.windows_per_trace, self.warmup_steps)
        result = train_streaming(recs, cfg, self.seed, dsp, arch, LossConfig(self.beta),
                                 MixupConfig(self.mixup_alpha, self.mixup),
                                 log_fn=print if self.verbose else None)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def predict_frame_proba(self, X) -> List[np.ndarray]:
        self._check_fitted()
        return [self.model_.predict(t.samples[None])[0] for t in check_traces(X, self.sample_rate_hz)]

    def predict(self, X) -> List[EventList]:
        self.stream_config.validate()
        hop_s = self._hop_s()
        return [extract_events(p, hop_s, self.threshold_on, self.threshold_off, self.min_dur_s, self.min_gap_s)
                for p in self.predict_frame_proba(X)]

    def evaluate(self, X, y) -> ScoreReport:
        self._check_fitted()
        traces = check_traces(X, self.sample_rate_hz)
        events = check_event_lists(y, len(traces))
        return evaluate_recordings(self.model_, [Recording(t, e) for t, e in zip(traces, events)],
                                   self.stream_config)

    def score(self, X, y) -> float:
        """Composite score in ``[0, 100]``."""
        return self.evaluate(X, y).composite

    def stream(self) -> StreamState:
        """A fresh push-based runtime over the fitted model."""
        self._check_fitted()
        return StreamState(self.model_)

    def _hop_s(self) -> float:
        dsp, _ = self._configs()
        return dsp.hop / self.sample_rate_hz
