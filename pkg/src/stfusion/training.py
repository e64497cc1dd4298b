"""Track-1 (segment) and Track-2 (frame-wise) training loops and evaluation.

Both loops are single-threaded and fully determined by ``seed``: the seed
fixes weight initialization, the train/validation split, batch order,
window sampling and mixup weights.  Validation is split by recording so no
frames of a validation recording ever reach the optimizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .dsp import DSPConfig
from .exceptions import DataError, TrainError
from .io import AccelTrace, EventList, events_to_frames, label_times, save_checkpoint
from .losses import LossConfig, MixupConfig, bce, mixup, sample_mixup_lambda, streaming_loss
from .models import FusionNet, ModelConfig
from .scoring import ScoreReport, segment_accuracy
from .streaming import StreamConfig, extract_events

__all__ = [
    "SegmentTrainConfig",
    "StreamTrainConfig",
    "EpochLog",
    "TrainResult",
    "Recording",
    "split_groups",
    "train_segmented",
    "train_streaming",
    "evaluate_segments",
    "evaluate_recordings",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentTrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 1e-3
    val_fraction: float = 0.2


@dataclass(frozen=True)
class StreamTrainConfig:
    epochs: int = 40
    batch_size: int = 4
    lr: float = 1e-3
    val_fraction: float = 0.2
    window_s: float = 60.0
    windows_per_trace: int = 2
    # Linear lr ramp over the first optimizer steps.  Without it the first few
    # full-size Adam steps on mostly in-bed windows can drive every logit
    # into sigmoid saturation, where the frame losses have no usable gradient.
    warmup_steps: int = 64


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_metric: float

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss!r},{self.val_loss!r},{self.val_metric!r}"


@dataclass
class TrainResult:
    model: FusionNet
    history: List[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    train_indices: tuple = ()
    val_indices: tuple = ()

    @property
    def params(self) -> ad.ParamStore:
        return self.model.params

    def log_text(self) -> str:
        return "".join(h.line() + "\n" for h in self.history)


@dataclass(frozen=True, eq=False)
class Recording:
    trace: AccelTrace
    events: EventList
    group: int = 0


def split_groups(groups: Sequence, val_fraction: float, seed: int):
    """Partition item indices into train/validation by group.

    Returns ``(train_idx, val_idx)``; with fewer than two groups or
    ``val_fraction == 0`` everything is training data.
    """
    groups = list(groups)
    uniq = sorted(set(groups))
    if len(uniq) < 2 or val_fraction <= 0:
        return tuple(range(len(groups))), ()
    rng = np.random.default_rng([seed, 0x5EED])
    n_val = min(len(uniq) - 1, max(1, int(round(val_fraction * len(uniq)))))
    val_groups = set(rng.permutation(len(uniq))[:n_val].tolist())
    val_set = {uniq[i] for i in val_groups}
    train = tuple(i for i, g in enumerate(groups) if g not in val_set)
    val = tuple(i for i, g in enumerate(groups) if g in val_set)
    return train, val


def _emit(log_fn, entry: EpochLog, log_file):
    line = entry.line()
    if log_fn is not None:
        log_fn(line)
    if log_file is not None:
        log_file.write(line + "\n")
        log_file.flush()
    logger.info("epoch %s", line)


def _check_finite(value: float, epoch: int):
    if not np.isfinite(value):
        raise TrainError(f"training diverged at epoch {epoch} (loss={value})")


# --------------------------------------------------------------------------
# Track 1


def _stack(traces: Sequence[AccelTrace]) -> np.ndarray:
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise DataError(f"segments must share one length, got {sorted(lengths)}")
    return np.stack([t.samples for t in traces]).astype(np.float32)


def train_segmented(traces: Sequence[AccelTrace], labels: Sequence[int], groups: Sequence = None,
                    cfg: SegmentTrainConfig = SegmentTrainConfig(), seed: int = 0,
                    dsp: DSPConfig = DSPConfig(), arch: ModelConfig = ModelConfig(),
                    checkpoint_path=None, log_fn: Optional[Callable[[str], None]] = None,
                    log_path=None) -> TrainResult:
    """Minimize batch-mean BCE with Adam; keep the best-validation-accuracy weights."""
    if len(traces) == 0:
        raise DataError("empty training corpus")
    if len(labels) != len(traces):
        raise DataError(f"{len(traces)} traces but {len(labels)} labels")
    groups = list(range(len(traces))) if groups is None else list(groups)
    waves = _stack(traces)
    y = np.asarray(labels, dtype=np.float32)
    rate = traces[0].sample_rate_hz
    train_idx, val_idx = split_groups(groups, cfg.val_fraction, seed)
    rng = np.random.default_rng(seed)
    model = FusionNet("segment", dsp, arch, rate, seed=seed)
    result = TrainResult(model, train_indices=train_idx, val_indices=val_idx)
    best_state, best = None, -np.inf
    train_idx_arr = np.array(train_idx, dtype=np.int64)

    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = train_idx_arr[rng.permutation(len(train_idx_arr))]
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                probs = model.forward(waves[batch], training=True)
                loss = bce(probs, y[batch])
                _check_finite(loss.item(), epoch)
                ad.backward(loss)
                ad.adam_step(model.params, lr=cfg.lr)
                model.params.zero_grads()
                losses.append(loss.item())
            train_loss = float(np.mean(losses))
            if val_idx:
                vp = model.predict(waves[list(val_idx)])
                val_loss = bce(ad.Tensor(vp), y[list(val_idx)]).item()
                val_acc = segment_accuracy(vp, y[list(val_idx)], 0.5)
            else:
                val_loss, val_acc = train_loss, float("nan")
            entry = EpochLog(epoch, train_loss, val_loss, val_acc)
            result.history.append(entry)
            _emit(log_fn, entry, log_file)
            score = val_acc if val_idx else epoch
            if score > best:
                best, best_state = score, model.params.state_arrays()
                result.best_epoch, result.best_metric = epoch, val_acc
    finally:
        if log_file is not None:
            log_file.close()

    if best_state is not None:
        model.params.load_arrays(best_state)
    if checkpoint_path is not None:
        save_checkpoint(model.params, checkpoint_path)
    return result


def evaluate_segments(model: FusionNet, traces: Sequence[AccelTrace], labels: Sequence[int],
                      threshold: float = 0.5) -> ScoreReport:
    probs = model.predict(_stack(traces))
    return ScoreReport(segment_accuracy=segment_accuracy(probs, labels, threshold))


# --------------------------------------------------------------------------
# Track 2


def _warmup_lr(lr: float, step: int, warmup_steps: int) -> float:
    if warmup_steps <= 0 or step >= warmup_steps:
        return lr
    return lr * step / warmup_steps


def _window_batch(recs: Sequence[Recording], picks, window: int, dsp: DSPConfig, n_frames: int):
    hop_s = dsp.hop / recs[0].trace.sample_rate_hz
    xs, ys = [], []
    for i, start in picks:
        rec = recs[i]
        xs.append(rec.trace.samples[start:start + window])
        times = start / rec.trace.sample_rate_hz + (np.arange(n_frames) + 0.5) * hop_s
        ys.append(label_times(rec.events, times).astype(np.float32))
    return np.stack(xs).astype(np.float32), np.stack(ys)


def _val_pass(model: FusionNet, recs: Sequence[Recording], beta: float):
    losses, correct, total = [], 0, 0
    for rec in recs:
        probs = model.predict(rec.trace.samples[None])[0]
        truth = events_to_frames(rec.events, model.dsp.hop / rec.trace.sample_rate_hz, len(probs)).labels
        losses.append(streaming_loss(ad.Tensor(probs), truth.astype(np.float32), beta).item())
        correct += int(np.sum((probs > 0.5).astype(np.uint8) == truth))
        total += len(probs)
    return float(np.mean(losses)), correct / total


def train_streaming(recordings: Sequence[Recording], cfg: StreamTrainConfig = StreamTrainConfig(),
                    seed: int = 0, dsp: DSPConfig = DSPConfig(), arch: ModelConfig = ModelConfig(),
                    loss_cfg: LossConfig = LossConfig(), mixup_cfg: MixupConfig = MixupConfig(),
                    checkpoint_path=None, log_fn: Optional[Callable[[str], None]] = None,
                    log_path=None) -> TrainResult:
    """Frame-wise training on random fixed-length windows with MSE + soft-IoU and optional mixup."""
    if len(recordings) == 0:
        raise DataError("empty training corpus")
    recs = list(recordings)
    rate = recs[0].trace.sample_rate_hz
    if any(r.trace.sample_rate_hz != rate for r in recs):
        raise DataError("all recordings must share one sample rate")
    train_idx, val_idx = split_groups([r.group for r in recs], cfg.val_fraction, seed)
    train_recs = [recs[i] for i in train_idx]
    val_recs = [recs[i] for i in val_idx]

    window = int(round(cfg.window_s * rate))
    window = min(window, min(len(r.trace) for r in train_recs))
    if window < dsp.n_fft:
        raise DataError(f"training window of {window} samples is shorter than n_fft={dsp.n_fft}")
    # align window length to whole hops past the first frame
    window = dsp.n_fft + ((window - dsp.n_fft) // dsp.hop) * dsp.hop
    n_frames = 1 + (window - dsp.n_fft) // dsp.hop

    rng = np.random.default_rng(seed)
    model = FusionNet("stream", dsp, arch, rate, seed=seed)
    result = TrainResult(model, train_indices=train_idx, val_indices=val_idx)
    best_state, best = None, -np.inf

    n_steps = 0
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            picks = []
            for i, rec in enumerate(train_recs):
                n_starts = (len(rec.trace) - window) // dsp.hop + 1
                for s in rng.integers(0, n_starts, size=cfg.windows_per_trace):
                    picks.append((i, int(s) * dsp.hop))
            picks = [picks[k] for k in rng.permutation(len(picks))]
            losses = []
            for start in range(0, len(picks), cfg.batch_size):
                n_steps += 1
                x, y = _window_batch(train_recs, picks[start:start + cfg.batch_size], window, dsp, n_frames)
                if mixup_cfg.enabled and x.shape[0] > 1:
                    lam = sample_mixup_lambda(rng, mixup_cfg.alpha)
                    perm = rng.permutation(x.shape[0])
                    x, y = mixup(x, y, x[perm], y[perm], lam)
                probs = model.forward(x, training=True)
                loss = streaming_loss(probs, y, loss_cfg.beta)
                _check_finite(loss.item(), epoch)
                ad.backward(loss)
                ad.adam_step(model.params, lr=_warmup_lr(cfg.lr, n_steps, cfg.warmup_steps))
                model.params.zero_grads()
                losses.append(loss.item())
            train_loss = float(np.mean(losses))
            if val_recs:
                val_loss, val_acc = _val_pass(model, val_recs, loss_cfg.beta)
            else:
                val_loss, val_acc = train_loss, float("nan")
            entry = EpochLog(epoch, train_loss, val_loss, val_acc)
            result.history.append(entry)
            _emit(log_fn, entry, log_file)
            score = val_acc if val_recs else epoch
            if score > best:
                best, best_state = score, model.params.state_arrays()
                result.best_epoch, result.best_metric = epoch, val_acc
    finally:
        if log_file is not None:
            log_file.close()

    if best_state is not None:
        model.params.load_arrays(best_state)
    if checkpoint_path is not None:
        save_checkpoint(model.params, checkpoint_path)
    return result


def evaluate_recordings(model: FusionNet, recordings: Sequence[Recording],
                        stream_cfg: StreamConfig = StreamConfig()) -> ScoreReport:
    """Frame accuracy, boundary latencies and composite score over whole recordings."""
    report = ScoreReport()
    hop_s = model.dsp.hop / model.sample_rate_hz
    lookahead = model.receptive_field_frames()
    report.lookahead_s = (model.dsp.n_fft + lookahead * model.dsp.hop) / model.sample_rate_hz
    for rec in recordings:
        probs = model.predict(rec.trace.samples[None])[0]
        truth = events_to_frames(rec.events, hop_s, len(probs)).labels
        correct = int(np.sum((probs > stream_cfg.label_threshold).astype(np.uint8) == truth))
        pred = extract_events(probs, hop_s, stream_cfg.threshold_on, stream_cfg.threshold_off,
                              stream_cfg.min_dur_s, stream_cfg.min_gap_s)
        report.add_trace(correct, len(probs), pred, rec.events)
    return report.finalize()
