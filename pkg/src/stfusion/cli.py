"""Command-line entry point: ``stfusion <subcommand> [options]``.

Exit codes: 0 success, 2 bad usage / config / input file, 3 training
diverged, 4 composite score below ``--min-score``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import Config, apply_overrides, load_config
from .exceptions import ConfigError, FormatError, STFusionError, TrainError, UsageError
from .io import (EventList, _parse_row, format_prediction, label_times, load_checkpoint, parse_predictions,
                 read_events)
from .models import FusionNet
from .scoring import ScoreReport, segment_accuracy
from .streaming import StreamState, extract_events
from .synth import load_recordings, load_segments, synth_corpus
from .training import Recording, evaluate_recordings, split_groups, train_segmented, train_streaming

EXIT_OK, EXIT_USAGE, EXIT_TRAIN, EXIT_GATE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file (defaults apply to missing keys)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def _thresholds(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold-on", type=float, help="hysteresis entry threshold")
    p.add_argument("--threshold-off", type=float, help="hysteresis exit threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stfusion", description="Accelerometer person-in-bed detection.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic corpus")
    _common(p)
    p.add_argument("--out", required=True, help="output corpus directory")

    for name, what in (("train-seg", "Track-1 segment classifier"), ("train-stream", "Track-2 frame detector")):
        p = sub.add_parser(name, help=f"train the {what}")
        _common(p)
        p.add_argument("--data", required=True, help="corpus directory written by 'synth'")
        p.add_argument("--checkpoint", help="where to write the best checkpoint")
        p.add_argument("--out", help="also write the epoch log CSV here")

    for name, track in (("eval-seg", "Track-1"), ("eval-stream", "Track-2")):
        p = sub.add_parser(name, help=f"evaluate a {track} checkpoint")
        _common(p)
        p.add_argument("--data", required=True, help="corpus directory written by 'synth'")
        p.add_argument("--checkpoint", help="checkpoint to evaluate")
        p.add_argument("--split", choices=("val", "train", "all"), default="val",
                       help="recordings to score; 'val' repeats the training split (default)")
        p.add_argument("--out", help="also write the report here")
        p.add_argument("--min-score", type=float, help="exit 4 if the score is below this")
        if name == "eval-stream":
            _thresholds(p)

    p = sub.add_parser("stream", help="stream a trace CSV from stdin to prediction CSV on stdout")
    _common(p)
    p.add_argument("--checkpoint", help="streaming-head checkpoint")
    p.add_argument("--out", help="write predictions here instead of stdout")

    p = sub.add_parser("score", help="score a prediction CSV against ground-truth events")
    _common(p)
    _thresholds(p)
    p.add_argument("--pred", required=True, help="prediction CSV (frame_index,time_s,prob,label)")
    p.add_argument("--truth", required=True, help="ground-truth event CSV")
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--min-score", type=float, help="exit 4 if composite is below this")
    return parser


# --------------------------------------------------------------------------


def _load_cfg(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    cfg = apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    threshold_on = getattr(args, "threshold_on", None)
    threshold_off = getattr(args, "threshold_off", None)
    if threshold_on is not None:
        cfg = replace(cfg, stream=replace(cfg.stream, threshold_on=threshold_on))
    if threshold_off is not None:
        cfg = replace(cfg, stream=replace(cfg.stream, threshold_off=threshold_off))
    return cfg.validate()


def _checkpoint_path(args, cfg: Config) -> str:
    path = args.checkpoint or cfg.checkpoint
    if not path:
        raise ConfigError("no checkpoint given; pass --checkpoint or set 'checkpoint' in the config")
    return path


def _load_model(path, cfg: Config, sample_rate_hz: int, head: str) -> FusionNet:
    model = FusionNet.from_params(load_checkpoint(path), cfg.dsp, cfg.model, sample_rate_hz)
    if model.head != head:
        raise UsageError(f"{path} holds a {model.head!r}-head model; this command needs {head!r}")
    return model


def _report(text: str, out: Optional[str]) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text, encoding="utf-8")


def _gate(score: float, min_score: Optional[float]) -> int:
    if min_score is not None and not score >= min_score:
        sys.stderr.write(f"score {score!r} below --min-score {min_score!r}\n")
        return EXIT_GATE
    return EXIT_OK


def _pick(split_idx, split: str, n: int) -> List[int]:
    train_idx, val_idx = split_idx
    chosen = {"all": range(n), "train": train_idx, "val": val_idx}[split]
    chosen = list(chosen)
    if not chosen:
        raise ConfigError(f"the {split!r} split is empty; use --split all")
    return chosen


# --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    n_segments = cfg.corpus.n_segments or None
    records = synth_corpus(cfg.synth_config(), cfg.corpus.n_traces, args.out, cfg.corpus.segment_s, n_segments)
    print(f"traces={len(records)}")
    print(f"out={args.out}")
    return EXIT_OK


def _print_line(line: str) -> None:
    print(line, flush=True)


def cmd_train_seg(args) -> int:
    cfg = _load_cfg(args)
    path = _checkpoint_path(args, cfg)
    segs = load_segments(args.data)
    result = train_segmented([s.trace for s in segs], [s.label for s in segs], [s.source_seed for s in segs],
                             cfg.train_seg, cfg.seed, cfg.dsp, cfg.model, checkpoint_path=path,
                             log_fn=_print_line, log_path=args.out)
    print(f"best_epoch={result.best_epoch}")
    print(f"best_val_acc={result.best_metric!r}")
    print(f"checkpoint={path}")
    return EXIT_OK


def _recordings(data) -> List[Recording]:
    return [Recording(t, e, seed) for t, e, seed in load_recordings(data)]


def cmd_train_stream(args) -> int:
    cfg = _load_cfg(args)
    path = _checkpoint_path(args, cfg)
    result = train_streaming(_recordings(args.data), cfg.train_stream, cfg.seed, cfg.dsp, cfg.model, cfg.loss,
                             cfg.mixup, checkpoint_path=path, log_fn=_print_line, log_path=args.out)
    print(f"best_epoch={result.best_epoch}")
    print(f"best_val_acc={result.best_metric!r}")
    print(f"checkpoint={path}")
    return EXIT_OK


def cmd_eval_seg(args) -> int:
    cfg = _load_cfg(args)
    segs = load_segments(args.data)
    groups = [s.source_seed for s in segs]
    idx = _pick(split_groups(groups, cfg.train_seg.val_fraction, cfg.seed), args.split, len(segs))
    rate = segs[idx[0]].trace.sample_rate_hz
    model = _load_model(_checkpoint_path(args, cfg), cfg, rate, "segment")
    probs = model.predict(np.stack([segs[i].trace.samples for i in idx]))
    report = ScoreReport(segment_accuracy=segment_accuracy(probs, [segs[i].label for i in idx], 0.5))
    _report(report.to_lines(), args.out)
    return _gate(report.segment_accuracy, args.min_score)


def cmd_eval_stream(args) -> int:
    cfg = _load_cfg(args)
    recs = _recordings(args.data)
    groups = [r.group for r in recs]
    idx = _pick(split_groups(groups, cfg.train_stream.val_fraction, cfg.seed), args.split, len(recs))
    rate = recs[idx[0]].trace.sample_rate_hz
    model = _load_model(_checkpoint_path(args, cfg), cfg, rate, "stream")
    report = evaluate_recordings(model, [recs[i] for i in idx], cfg.stream)
    _report(report.to_lines(), args.out)
    return _gate(report.composite, args.min_score)


def _read_header(stream) -> int:
    line = stream.readline()
    if not line:
        raise FormatError("empty input; expected a 'sample_rate_hz=<int>' header")
    key, sep, value = line.strip().partition("=")
    if key != "sample_rate_hz" or not sep:
        raise FormatError(f"bad header line {line.strip()!r}; expected 'sample_rate_hz=<int>'")
    try:
        rate = int(value)
    except ValueError:
        raise FormatError(f"sample rate {value!r} is not an integer") from None
    if rate <= 0:
        raise FormatError(f"sample rate must be positive, got {rate}")
    return rate


def cmd_stream(args, stdin=None, stdout=None) -> int:
    cfg = _load_cfg(args)
    stdin = stdin or sys.stdin
    rate = _read_header(stdin)
    cfg.dsp.validate(rate)
    model = _load_model(_checkpoint_path(args, cfg), cfg, rate, "stream")
    state = StreamState(model, label_threshold=cfg.stream.label_threshold)
    out = open(args.out, "w", encoding="utf-8") if args.out else (stdout or sys.stdout)
    try:
        for lineno, line in enumerate(stdin, start=2):
            if not line.strip():
                continue
            for pred in state.push(np.array([_parse_row(line, lineno)])):
                out.write(format_prediction(pred))
                out.flush()
        for pred in state.close():
            out.write(format_prediction(pred))
        out.flush()
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _infer_hop_s(preds, fallback: float) -> float:
    if len(preds) < 2:
        return fallback
    span = preds[-1].frame_index - preds[0].frame_index
    return (preds[-1].time_s - preds[0].time_s) / span


def cmd_score(args) -> int:
    cfg = _load_cfg(args)
    try:
        text = Path(args.pred).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.pred}: {exc}") from None
    preds = parse_predictions(text)
    if not preds:
        raise FormatError(f"{args.pred} holds no predictions")
    truth = read_events(args.truth)
    hop_s = _infer_hop_s(preds, cfg.dsp.hop / cfg.synth.sample_rate_hz)
    idx = np.array([p.frame_index for p in preds])
    probs = np.array([p.prob for p in preds])
    labels = np.array([p.label for p in preds])
    truth_labels = label_times(truth, (idx + 0.5) * hop_s)
    st = cfg.stream
    events = extract_events(probs, hop_s, st.threshold_on, st.threshold_off, st.min_dur_s, st.min_gap_s)
    if idx[0]:
        shift = idx[0] * hop_s
        events = EventList(tuple((a + shift, b + shift) for a, b in events))
    report = ScoreReport()
    report.add_trace(int(np.sum(labels == truth_labels)), len(preds), events, truth)
    report.finalize()
    _report(report.to_lines(), args.out)
    return _gate(report.composite, args.min_score)


COMMANDS = {
    "synth": cmd_synth,
    "train-seg": cmd_train_seg,
    "train-stream": cmd_train_stream,
    "eval-seg": cmd_eval_seg,
    "eval-stream": cmd_eval_stream,
    "stream": cmd_stream,
    "score": cmd_score,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except TrainError as exc:
        sys.stderr.write(f"stfusion: training failed: {exc}\n")
        return EXIT_TRAIN
    except (STFusionError, OSError) as exc:
        sys.stderr.write(f"stfusion: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
