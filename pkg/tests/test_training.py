import numpy as np
import pytest

from stfusion import training
from stfusion.exceptions import DataError, TrainError
from stfusion.io import AccelTrace, checkpoint_bytes, load_checkpoint
from stfusion.losses import LossConfig, MixupConfig, mse_frames
from stfusion.models import FusionNet
from stfusion.synth import SynthConfig, simulate, slice_segments
from stfusion.training import (Recording, SegmentTrainConfig, StreamTrainConfig, evaluate_recordings,
                               evaluate_segments, split_groups, train_segmented, train_streaming)


@pytest.fixture(scope="module")
def segments():
    segs = []
    seed = 100
    while sum(s.label for s in segs) < 4 or sum(1 - s.label for s in segs) < 4:
        for s in slice_segments(simulate(SynthConfig(duration_s=60, seed=seed)), 8.0, seed):
            if sum(t.label == s.label for t in segs) < 4:
                segs.append(s)
        seed += 1
    return segs


@pytest.fixture(scope="module")
def recordings():
    return [_rec(200 + i, i) for i in range(4)]


def _rec(seed, group):
    res = simulate(SynthConfig(duration_s=30, seed=seed))
    return Recording(res.trace, res.events, group)


SEG_CFG = SegmentTrainConfig(epochs=1, batch_size=4, lr=1e-3, val_fraction=0.25)
STREAM_CFG = StreamTrainConfig(epochs=1, batch_size=2, window_s=12.0, windows_per_trace=1, warmup_steps=4)


def seg_data(segments):
    return [s.trace for s in segments], [s.label for s in segments], [s.source_seed for s in segments]


# --------------------------------------------------------------------------
# splitting


def test_split_groups_keeps_groups_together():
    groups = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    train, val = split_groups(groups, 0.2, seed=1)
    assert sorted(train + val) == list(range(10))
    assert {groups[i] for i in train}.isdisjoint({groups[i] for i in val})
    assert len({groups[i] for i in val}) == 1
    assert split_groups(groups, 0.2, seed=1) == (train, val)


def test_split_groups_degenerate():
    assert split_groups([5, 5, 5], 0.5, 0) == ((0, 1, 2), ())
    assert split_groups([1, 2, 3], 0.0, 0) == ((0, 1, 2), ())
    train, val = split_groups([1, 2], 0.99, 0)
    assert len(train) == 1 and len(val) == 1


# --------------------------------------------------------------------------
# Track 1


def test_segmented_smoke_writes_loadable_checkpoint(segments, tmp_path):
    traces, labels, groups = seg_data(segments)
    res = train_segmented(traces, labels, groups, SEG_CFG, seed=3, checkpoint_path=tmp_path / "m.ckpt",
                          log_path=tmp_path / "log.csv")
    model = FusionNet.from_params(load_checkpoint(tmp_path / "m.ckpt"))
    assert model.head == "segment"
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert len(lines) == 1
    fields = lines[0].split(",")
    assert fields[0] == "1" and len(fields) == 4
    assert all(np.isfinite(float(v)) for v in fields[1:])
    assert res.log_text().splitlines() == lines


def test_segmented_lr_zero_leaves_parameters(segments):
    traces, labels, groups = seg_data(segments)
    before = FusionNet("segment", seed=4).params
    res = train_segmented(traces, labels, groups, SegmentTrainConfig(epochs=1, batch_size=4, lr=0.0), seed=4)
    for name, t in res.params.trainable():
        assert t.data.tobytes() == before[name].data.tobytes(), name


def test_segmented_eval_reproduces_logged_val_acc(segments):
    traces, labels, groups = seg_data(segments)
    res = train_segmented(traces, labels, groups, SegmentTrainConfig(epochs=2, batch_size=4), seed=5)
    val = list(res.val_indices)
    rep = evaluate_segments(res.model, [traces[i] for i in val], [labels[i] for i in val])
    assert rep.segment_accuracy == res.history[res.best_epoch - 1].val_metric == res.best_metric


def test_zero_weight_model_scores_majority_fraction(segments):
    traces, labels, _ = seg_data(segments)
    model = FusionNet("segment", seed=0)
    model.head_w.data[:] = 0
    model.head_b.data[:] = 0
    labels = np.array(labels)
    rep = evaluate_segments(model, traces[:6], labels[:6])
    assert rep.segment_accuracy == np.mean(labels[:6] == 0)


def test_segmented_deterministic(segments, tmp_path):
    traces, labels, groups = seg_data(segments)
    a = train_segmented(traces, labels, groups, SEG_CFG, seed=6, checkpoint_path=tmp_path / "a.ckpt")
    b = train_segmented(traces, labels, groups, SEG_CFG, seed=6, checkpoint_path=tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert a.log_text() == b.log_text()


def test_segmented_errors(segments, monkeypatch):
    with pytest.raises(DataError):
        train_segmented([], [], cfg=SEG_CFG)
    traces, labels, groups = seg_data(segments)
    with pytest.raises(DataError):
        train_segmented(traces, labels[:-1], cfg=SEG_CFG)
    with pytest.raises(DataError):
        train_segmented([traces[0], AccelTrace(250, np.zeros((300, 3)))], [0, 1], cfg=SEG_CFG)
    monkeypatch.setattr(training, "bce", lambda p, y: p.mean() * float("nan"))
    with pytest.raises(TrainError, match="epoch 1"):
        train_segmented(traces, labels, groups, SEG_CFG)


# --------------------------------------------------------------------------
# Track 2


def test_streaming_smoke(recordings, tmp_path):
    res = train_streaming(recordings, STREAM_CFG, seed=1, checkpoint_path=tmp_path / "s.ckpt")
    assert FusionNet.from_params(load_checkpoint(tmp_path / "s.ckpt")).head == "stream"
    assert len(res.history) == 1 and len(res.val_indices) == 1


def test_mixup_changes_trajectory(recordings):
    on = train_streaming(recordings, STREAM_CFG, seed=2, mixup_cfg=MixupConfig(0.2, True))
    off = train_streaming(recordings, STREAM_CFG, seed=2, mixup_cfg=MixupConfig(0.2, False))
    assert on.history[0].train_loss != off.history[0].train_loss


def test_beta_zero_is_pure_mse(recordings, monkeypatch):
    cfg = StreamTrainConfig(epochs=2, batch_size=2, window_s=12.0, windows_per_trace=1, warmup_steps=2)
    a = train_streaming(recordings, cfg, seed=3, loss_cfg=LossConfig(0.0))
    monkeypatch.setattr(training, "streaming_loss", lambda p, y, beta: mse_frames(p, y))
    b = train_streaming(recordings, cfg, seed=3, loss_cfg=LossConfig(0.0))
    assert a.log_text() == b.log_text()
    assert checkpoint_bytes(a.params) == checkpoint_bytes(b.params)


def test_streaming_lr_zero_leaves_parameters(recordings):
    before = FusionNet("stream", seed=4).params
    res = train_streaming(recordings, StreamTrainConfig(epochs=1, batch_size=2, lr=0.0, window_s=12.0,
                                                        windows_per_trace=1), seed=4)
    for name, t in res.params.trainable():
        assert t.data.tobytes() == before[name].data.tobytes(), name


def test_validation_never_reaches_optimizer(recordings):
    res = train_streaming(recordings, STREAM_CFG, seed=5)
    (v,) = res.val_indices
    noisy = list(recordings)
    x = np.random.default_rng(0).normal(size=recordings[v].trace.samples.shape)
    noisy[v] = Recording(AccelTrace(250, x), recordings[v].events, recordings[v].group)
    again = train_streaming(noisy, STREAM_CFG, seed=5)
    assert checkpoint_bytes(again.params) == checkpoint_bytes(res.params)
    assert again.history[0].train_loss == res.history[0].train_loss


def test_streaming_deterministic_and_reload_identical(recordings, tmp_path):
    a = train_streaming(recordings, STREAM_CFG, seed=6, checkpoint_path=tmp_path / "a.ckpt")
    b = train_streaming(recordings, STREAM_CFG, seed=6, checkpoint_path=tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert a.log_text() == b.log_text()
    before = evaluate_recordings(a.model, recordings)
    after = evaluate_recordings(FusionNet.from_params(load_checkpoint(tmp_path / "a.ckpt")), recordings)
    assert before.to_lines() == after.to_lines()
    assert before.lookahead_s == pytest.approx((256 + 9 * 128) / 250)


def test_streaming_eval_reproduces_logged_val_acc(recordings):
    res = train_streaming(recordings, STREAM_CFG, seed=7)
    rep = evaluate_recordings(res.model, [recordings[i] for i in res.val_indices])
    assert rep.frame_accuracy == res.best_metric


def test_streaming_errors(recordings):
    with pytest.raises(DataError):
        train_streaming([], STREAM_CFG)
    short = [Recording(AccelTrace(250, np.zeros((200, 3))), r.events, r.group) for r in recordings]
    with pytest.raises(DataError):
        train_streaming(short, STREAM_CFG)


def test_warmup_schedule():
    assert training._warmup_lr(1.0, 0, 4) == 0.0
    assert training._warmup_lr(1.0, 2, 4) == 0.5
    assert training._warmup_lr(1.0, 4, 4) == 1.0
    assert training._warmup_lr(1.0, 1, 0) == 1.0
