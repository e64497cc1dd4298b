"""Labeled synthetic mattress-accelerometer recordings.

Occupancy alternates between "in bed" and "not in bed" with shifted
exponential dwell times.  In bed, the sensor sees respiration (fundamental
plus a second harmonic), a ballistocardiac pulse train and occasional
repositioning bursts, all projected onto the three axes through a random
body orientation that changes after each repositioning.  Out of bed it sees
only baseline noise and footstep transients (damped 5-20 Hz oscillations).
A 0.5 s linear ramp smooths every occupancy change.

Everything is a pure function of the config and its seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .exceptions import ConfigError
from .io import AccelTrace, EventList, emit_events, emit_trace

__all__ = [
    "OccupantConfig",
    "AmbientConfig",
    "OccupancyConfig",
    "SynthConfig",
    "SynthResult",
    "Segment",
    "simulate",
    "synth_trace",
    "slice_segments",
    "synth_corpus",
    "regenerate_corpus",
    "read_manifest",
    "write_manifest",
    "load_segments",
    "load_recordings",
]


@dataclass(frozen=True)
class OccupantConfig:
    resp_hz: tuple = (0.15, 0.45)
    resp_amp: float = 0.05
    cardiac_hz: tuple = (0.9, 1.8)
    cardiac_amp: float = 0.02
    posture_shift_rate: float = 0.5  # per minute in bed
    posture_shift_gain: float = 4.0  # burst amplitude relative to resp_amp
    individual_spread: float = 0.4  # per-trace amplitude factor drawn from 1 +/- spread


@dataclass(frozen=True)
class AmbientConfig:
    noise_std: float = 0.01
    foot_traffic_rate: float = 4.0  # walking passes per minute out of bed
    foot_traffic_amp: float = 0.15


@dataclass(frozen=True)
class OccupancyConfig:
    mean_in_bed_s: float = 60.0
    mean_out_bed_s: float = 30.0
    min_dwell_s: float = 5.0
    ramp_s: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 120.0
    sample_rate_hz: int = 250
    seed: int = field(default=0, metadata={"config": False})
    occupant: OccupantConfig = OccupantConfig()
    ambient: AmbientConfig = AmbientConfig()
    occupancy: OccupancyConfig = OccupancyConfig()

    def validate(self) -> None:
        if self.duration_s < 10:
            raise ConfigError(f"duration_s must be >= 10, got {self.duration_s}")
        if self.sample_rate_hz <= 0:
            raise ConfigError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        occ, amb, ocp = self.occupant, self.ambient, self.occupancy
        nonneg = {
            "resp_amp": occ.resp_amp, "cardiac_amp": occ.cardiac_amp,
            "posture_shift_rate": occ.posture_shift_rate, "posture_shift_gain": occ.posture_shift_gain,
            "noise_std": amb.noise_std, "foot_traffic_rate": amb.foot_traffic_rate,
            "foot_traffic_amp": amb.foot_traffic_amp, "ramp_s": ocp.ramp_s,
        }
        for name, v in nonneg.items():
            if v < 0:
                raise ConfigError(f"{name} must be >= 0, got {v}")
        if not 0 <= occ.individual_spread < 1:
            raise ConfigError(f"individual_spread must be in [0, 1), got {occ.individual_spread}")
        for name, (lo, hi) in (("resp_hz", occ.resp_hz), ("cardiac_hz", occ.cardiac_hz)):
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} range must satisfy 0 < low <= high, got ({lo}, {hi})")
        if not ocp.min_dwell_s > 0:
            raise ConfigError(f"min_dwell_s must be > 0, got {ocp.min_dwell_s}")
        if ocp.mean_in_bed_s < ocp.min_dwell_s or ocp.mean_out_bed_s < ocp.min_dwell_s:
            raise ConfigError("mean dwell times must be >= min_dwell_s")


@dataclass(frozen=True, eq=False)
class SynthResult:
    trace: AccelTrace
    events: EventList
    in_bed: np.ndarray  # per-sample occupancy state


@dataclass(frozen=True, eq=False)
class Segment:
    """A fixed-length Track-1 example cut wholly inside or outside an event."""

    trace: AccelTrace
    label: int
    source_seed: int
    start_s: float


def _unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _occupancy(cfg: SynthConfig, rng, n: int):
    """Per-sample boolean state plus state-change sample indices."""
    sr, ocp = cfg.sample_rate_hz, cfg.occupancy
    p_in = ocp.mean_in_bed_s / (ocp.mean_in_bed_s + ocp.mean_out_bed_s)
    state = bool(rng.random() < p_in)
    in_bed = np.zeros(n, dtype=bool)
    runs = []
    k = 0
    while k < n:
        mean = ocp.mean_in_bed_s if state else ocp.mean_out_bed_s
        dwell = ocp.min_dwell_s + rng.exponential(mean - ocp.min_dwell_s) if mean > ocp.min_dwell_s else mean
        stop = min(n, k + max(1, int(round(dwell * sr))))
        in_bed[k:stop] = state
        runs.append((k, stop, state))
        k = stop
        state = not state
    return in_bed, runs


def _envelope(runs, n: int, sr: int, ramp_s: float) -> np.ndarray:
    env = np.zeros(n)
    ramp = int(round(ramp_s * sr))
    for a, b, state in runs:
        if not state:
            continue
        env[a:b] = 1.0
        r = min(ramp, (b - a) // 2)
        if r > 0:
            up = np.arange(1, r + 1) / (r + 1)
            if a > 0:
                env[a:a + r] = up
            if b < n:
                env[b - r:b] = up[::-1]
    return env


def simulate(cfg: SynthConfig) -> SynthResult:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    sr = cfg.sample_rate_hz
    n = int(round(cfg.duration_s * sr))
    t = np.arange(n) / sr
    occ, amb = cfg.occupant, cfg.ambient

    in_bed, runs = _occupancy(cfg, rng, n)
    env = _envelope(runs, n, sr, cfg.occupancy.ramp_s)
    x = np.zeros((n, 3))

    # per-trace occupant traits
    spread = occ.individual_spread
    resp_amp = occ.resp_amp * rng.uniform(1 - spread, 1 + spread)
    cardiac_amp = occ.cardiac_amp * rng.uniform(1 - spread, 1 + spread)
    resp_hz = rng.uniform(*occ.resp_hz)
    cardiac_hz = rng.uniform(*occ.cardiac_hz)
    carrier_hz = rng.uniform(4.0, 8.0)

    # posture changes: orientation re-drawn per episode and after each burst
    orient_r = np.zeros((n, 3))
    orient_c = np.zeros((n, 3))
    burst_rate = occ.posture_shift_rate / 60.0
    for a, b, state in runs:
        if not state:
            continue
        cuts = [a]
        pos = a
        while burst_rate > 0:
            pos += int(round(rng.exponential(1.0 / burst_rate) * sr))
            if pos >= b:
                break
            dur = int(round(rng.uniform(1.0, 3.0) * sr))
            stop = min(b, pos + dur)
            burst = rng.normal(size=(stop - pos, 3))
            kernel = np.ones(max(1, sr // 20)) / max(1, sr // 20)
            burst = np.stack([np.convolve(burst[:, i], kernel, mode="same") for i in range(3)], axis=1)
            burst /= max(burst.std(), 1e-12)
            x[pos:stop] += occ.posture_shift_gain * resp_amp * burst * np.hanning(stop - pos)[:, None]
            cuts.append(stop)
            pos = stop
        cuts.append(b)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            orient_r[lo:hi] = _unit(rng)
            orient_c[lo:hi] = _unit(rng)

    phase1, phase2 = rng.uniform(0, 2 * np.pi, size=2)
    resp = resp_amp * (np.sin(2 * np.pi * resp_hz * t + phase1)
                       + 0.3 * np.sin(2 * np.pi * 2 * resp_hz * t + phase2))

    cardiac = np.zeros(n)
    if cardiac_amp > 0:
        sigma = 0.05
        half = int(4 * sigma * sr)
        tau = np.arange(-half, half + 1) / sr
        wavelet = np.exp(-0.5 * (tau / sigma) ** 2) * np.cos(2 * np.pi * carrier_hz * tau)
        beat = rng.uniform(0, 1.0 / cardiac_hz)
        while beat < cfg.duration_s:
            c = int(round(beat * sr))
            lo, hi = max(0, c - half), min(n, c + half + 1)
            cardiac[lo:hi] += cardiac_amp * wavelet[lo - (c - half):hi - (c - half)]
            beat += (1.0 / cardiac_hz) * (1.0 + 0.03 * rng.normal())

    x += env[:, None] * (resp[:, None] * orient_r + cardiac[:, None] * orient_c)

    # footsteps: walking passes of several steps while the bed is empty
    step_rate = amb.foot_traffic_rate / 60.0
    if step_rate > 0 and amb.foot_traffic_amp > 0:
        for a, b, state in runs:
            if state:
                continue
            pos = a / sr
            while True:
                pos += rng.exponential(1.0 / step_rate)
                if pos >= b / sr:
                    break
                n_steps = int(rng.integers(2, 7))
                freq = rng.uniform(5.0, 20.0)
                decay = rng.uniform(0.1, 0.4)
                direction = _unit(rng)
                amp = amb.foot_traffic_amp * rng.uniform(0.5, 1.5)
                for s in range(n_steps):
                    start = int(round((pos + 0.5 * s) * sr))
                    if start >= n:
                        break
                    m = min(n - start, int(5 * decay * sr))
                    tt = np.arange(m) / sr
                    pulse = amp * np.exp(-tt / decay) * np.sin(2 * np.pi * freq * tt)
                    x[start:start + m] += pulse[:, None] * direction

    if amb.noise_std > 0:
        x += rng.normal(scale=amb.noise_std, size=(n, 3))

    events = EventList(tuple((a / sr, b / sr) for a, b, state in runs if state))
    return SynthResult(AccelTrace(sr, x), events, in_bed)


def synth_trace(cfg: SynthConfig):
    """Return ``(AccelTrace, EventList)`` for one recording."""
    res = simulate(cfg)
    return res.trace, res.events


def slice_segments(res: SynthResult, segment_s: float, seed: int) -> List[Segment]:
    """Cut back-to-back windows lying wholly inside one occupancy run."""
    trace = res.trace
    sr = trace.sample_rate_hz
    seg_len = int(round(segment_s * sr))
    state = res.in_bed
    change = np.flatnonzero(np.diff(state.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [len(state)]])
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        label = int(state[a])
        for k in range((b - a) // seg_len):
            start = a + k * seg_len
            out.append(Segment(trace.slice(start, start + seg_len), label, seed, float(start / sr)))
    return out


# --------------------------------------------------------------------------
# corpus on disk


def write_manifest(records, path) -> None:
    blocks = ["".join(f"{k}={v}\n" for k, v in rec.items()) for rec in records]
    Path(path).write_text("\n".join(blocks), encoding="utf-8")


def read_manifest(path) -> list:
    records, cur = [], {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if cur:
                records.append(cur)
                cur = {}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}: malformed manifest line {line!r}")
        cur[key.strip()] = value.strip()
    if cur:
        records.append(cur)
    return records


def synth_corpus(cfg: SynthConfig, n_traces: int, out_dir, segment_s: float = 30.0,
                 n_segments: Optional[int] = None) -> list:
    """Write traces, event files, a manifest, and Track-1 segments under ``out_dir``.

    Trace ``i`` uses seed ``cfg.seed + i``.  Without ``n_segments`` every
    whole segment of the written traces is emitted; with it, a class-balanced
    set of exactly ``n_segments`` is drawn in trace order, generating further
    source traces (seeds continuing after the written ones) as needed.
    """
    from .config import dump_synth_config

    if n_traces < 1:
        raise ConfigError(f"n_traces must be >= 1, got {n_traces}")
    out = Path(out_dir)
    try:
        (out / "segments").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out}: {exc}") from exc
    cfg.validate()
    (out / "synth.cfg").write_text(dump_synth_config(cfg), encoding="utf-8")
    write_manifest([{"base_seed": cfg.seed, "n_traces": n_traces, "segment_s": repr(float(segment_s)),
                     "n_segments": "all" if n_segments is None else n_segments}], out / "corpus.txt")

    records = []
    segments: List[Segment] = []
    want = None if n_segments is None else {1: (n_segments + 1) // 2, 0: n_segments // 2}
    have = {0: 0, 1: 0}
    i = 0
    while i < n_traces or (want is not None and any(have[c] < want[c] for c in (0, 1))):
        seed = cfg.seed + i
        res = simulate(replace(cfg, seed=seed))
        if i < n_traces:
            name = f"trace_{i:04d}"
            _write(out / f"{name}.csv", emit_trace(res.trace))
            _write(out / f"events_{i:04d}.csv", emit_events(res.events))
            frac = float(res.in_bed.mean())
            records.append({"name": name, "trace": f"{name}.csv", "events": f"events_{i:04d}.csv",
                            "seed": seed, "duration_s": repr(float(res.trace.duration_s)),
                            "occupancy": f"{frac:.6f}"})
        for seg in slice_segments(res, segment_s, seed):
            if want is None:
                segments.append(seg)
            elif have[seg.label] < want[seg.label]:
                segments.append(seg)
                have[seg.label] += 1
        i += 1
        if want is not None and i > n_traces + 100000:
            raise ConfigError("could not collect enough segments; check occupancy settings")

    seg_records = []
    for j, seg in enumerate(segments):
        fname = f"seg_{j:05d}.csv"
        _write(out / "segments" / fname, emit_trace(seg.trace))
        seg_records.append({"name": f"seg_{j:05d}", "trace": fname, "label": seg.label,
                            "source_seed": seg.source_seed, "start_s": repr(float(seg.start_s))})
    write_manifest(records, out / "manifest.txt")
    write_manifest(seg_records, out / "segments" / "manifest.txt")
    return records


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def regenerate_corpus(src_dir, out_dir) -> list:
    """Rebuild a corpus byte-for-byte from its stored synth config and corpus parameters."""
    from .config import load_synth_config

    src = Path(src_dir)
    cfg = load_synth_config(src / "synth.cfg")
    params = read_manifest(src / "corpus.txt")[0]
    n_segments = None if params["n_segments"] == "all" else int(params["n_segments"])
    return synth_corpus(replace(cfg, seed=int(params["base_seed"])), int(params["n_traces"]), out_dir,
                        segment_s=float(params["segment_s"]), n_segments=n_segments)


def load_segments(corpus_dir) -> List[Segment]:
    from .io import read_trace

    seg_dir = Path(corpus_dir) / "segments"
    return [Segment(read_trace(seg_dir / r["trace"]), int(r["label"]), int(r["source_seed"]), float(r["start_s"]))
            for r in read_manifest(seg_dir / "manifest.txt")]


def load_recordings(corpus_dir) -> list:
    """``(trace, events, seed)`` triples for every trace in the manifest."""
    from .io import read_events, read_trace

    root = Path(corpus_dir)
    return [(read_trace(root / r["trace"]), read_events(root / r["events"]), int(r["seed"]))
            for r in read_manifest(root / "manifest.txt")]
