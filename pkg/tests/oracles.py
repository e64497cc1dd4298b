"""Independent reference implementations used as test oracles.

Everything here is written from the definitions with plain loops and the
``math`` module, never by calling into the package code it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

# --------------------------------------------------------------------------
# spectral front end


def hann(n):
    return [0.5 - 0.5 * math.cos(2.0 * math.pi * k / (n - 1)) for k in range(n)]


def direct_dft_power(signal, n_fft, hop):
    """O(n^2) windowed DFT power, shape ``(n_fft // 2 + 1, n_frames)``."""
    x = np.asarray(signal, dtype=np.float64)
    n_frames = 1 + (len(x) - n_fft) // hop
    w = np.array(hann(n_fft))
    n = np.arange(n_fft)
    k = np.arange(n_fft // 2 + 1)
    angle = 2.0 * np.pi * np.outer(k, n) / n_fft
    cos, sin = np.cos(angle), np.sin(angle)
    out = np.zeros((len(k), n_frames))
    for f in range(n_frames):
        seg = x[f * hop:f * hop + n_fft] * w
        re = cos @ seg
        im = -(sin @ seg)
        out[:, f] = re * re + im * im
    return out


def naive_mel_bank(sr, n_fft, n_mels, fmin, fmax):
    """Row-normalized HTK triangles built one entry at a time."""
    def mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    lo, hi = mel(fmin), mel(fmax)
    pts = [hz(lo + (hi - lo) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    n_bins = n_fft // 2 + 1
    rows = []
    for m in range(n_mels):
        left, mid, right = pts[m], pts[m + 1], pts[m + 2]
        row = []
        for b in range(n_bins):
            f = b * sr / n_fft
            if left < f <= mid:
                v = (f - left) / (mid - left)
            elif mid < f < right:
                v = (right - f) / (right - mid)
            else:
                v = 0.0
            row.append(v)
        total = sum(row)
        rows.append([v / total for v in row])
    return np.array(rows)


# --------------------------------------------------------------------------
# labels and events


def frame_labels(events, hop_s, n_frames):
    out = []
    for t in range(n_frames):
        c = (t + 0.5) * hop_s
        out.append(int(any(on <= c < off for on, off in events)))
    return out


def hysteresis_events(probs, hop_s, on, off, min_dur, min_gap):
    """Reference scanner: per-frame state, then runs, merge, filter."""
    state = []
    inside = False
    for p in probs:
        if inside:
            inside = p >= off
        else:
            inside = p >= on
        state.append(inside)
    runs = []
    t = 0
    n = len(state)
    while t < n:
        if state[t]:
            u = t
            while u + 1 < n and state[u + 1]:
                u += 1
            runs.append(((t + 0.5) * hop_s, (u + 0.5) * hop_s))
            t = u + 1
        else:
            t += 1
    merged = []
    for a, b in runs:
        if merged and a - merged[-1][1] < min_gap:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    return [(a, b) for a, b in merged if b > a and b - a >= min_dur]


def accuracy_loop(preds, labels, threshold):
    hits = 0
    for p, y in zip(preds, labels):
        guess = 1 if p > threshold else 0
        hits += guess == y
    return hits / len(preds)


def _ov(a, b):
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))


def greedy_by_search(pred, truth):
    """Greedy matching where each step searches every remaining pair.

    Returns the list of ``(pred_idx, truth_idx)`` pairs in selection order;
    ties in overlap go to the smallest ``(pred_idx, truth_idx)``.
    """
    free_p, free_t = set(range(len(pred))), set(range(len(truth)))
    pairs = []
    while True:
        best = None
        for i in sorted(free_p):
            for j in sorted(free_t):
                o = _ov(pred[i], truth[j])
                if o <= 0:
                    continue
                if best is None or o > best[0]:
                    best = (o, i, j)
        if best is None:
            return pairs
        pairs.append((best[1], best[2]))
        free_p.discard(best[1])
        free_t.discard(best[2])


def best_total_overlap(pred, truth):
    """Exhaustive maximum of summed overlap over all one-to-one matchings."""
    best = 0.0
    n_p, n_t = len(pred), len(truth)
    if n_p > n_t:
        pred, truth = truth, pred
        n_p, n_t = n_t, n_p
    for k in range(n_p + 1):
        for ps in itertools.combinations(range(n_p), k):
            for ts in itertools.permutations(range(n_t), k):
                total = sum(_ov(pred[i], truth[j]) for i, j in zip(ps, ts))
                best = max(best, total)
    return best


# --------------------------------------------------------------------------
# gradients


def numeric_grads(loss_fn, arrays, h=1e-6):
    """Central differences of a scalar ``loss_fn(arrays)`` for every entry."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_fn(arrays)
            flat[i] = keep - h
            down = loss_fn(arrays)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    """``max |a - n| / max(max |a|, max |n|)``; scale-free and zero-safe."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-30)
    return float(np.max(np.abs(analytic - numeric)) / scale)
