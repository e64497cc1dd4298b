"""Spectral front-end: Hann-windowed STFT power and per-axis log-Mel spectrograms.

Frames start at sample 0 with no centering or padding, so frame ``f`` covers
samples ``[f * hop, f * hop + n_fft)``.  Streaming and offline framing are
therefore identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError, DataError
from .io import AccelTrace

__all__ = [
    "DSPConfig",
    "SpectralGram",
    "MelBank",
    "hann_window",
    "stft_power",
    "n_frames_for",
    "hz_to_mel",
    "mel_to_hz",
    "mel_bank",
    "log_mel_gram",
    "log_mel_batch",
    "LogMelSpectrogram",
]


@dataclass(frozen=True)
class DSPConfig:
    n_fft: int = 256
    hop: int = 128
    n_mels: int = 32
    fmin: float = 0.0
    fmax: float = 125.0
    floor_eps: float = 1e-10

    def validate(self, sample_rate_hz: int = None) -> None:
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise ConfigError(f"n_fft must be a power of two >= 2, got {self.n_fft}")
        if self.hop < 1:
            raise ConfigError(f"hop must be >= 1, got {self.hop}")
        if self.n_mels < 2:
            raise ConfigError(f"n_mels must be >= 2, got {self.n_mels}")
        if not self.floor_eps > 0:
            raise ConfigError(f"floor_eps must be positive, got {self.floor_eps}")
        if sample_rate_hz is not None and not (0 <= self.fmin < self.fmax <= sample_rate_hz / 2):
            raise ConfigError(f"need 0 <= fmin < fmax <= {sample_rate_hz / 2}, got {self.fmin}, {self.fmax}")


@dataclass(frozen=True, eq=False)
class SpectralGram:
    """Log-Mel power, shape ``(3, n_mels, n_frames)``."""

    data: np.ndarray
    n_fft: int
    hop: int
    sample_rate_hz: int

    @property
    def n_frames(self) -> int:
        return self.data.shape[-1]


@dataclass(frozen=True, eq=False)
class MelBank:
    weights: np.ndarray
    fmin_hz: float
    fmax_hz: float
    center_hz: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann window ``0.5 * (1 - cos(2 pi k / (n - 1)))``."""
    if n < 2:
        raise ConfigError(f"window length must be >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / (n - 1)))


def n_frames_for(n_samples: int, n_fft: int, hop: int) -> int:
    if n_samples < n_fft:
        return 0
    return 1 + (n_samples - n_fft) // hop


def stft_power(signal, n_fft: int, hop: int) -> np.ndarray:
    """Squared-magnitude STFT, shape ``(n_fft // 2 + 1, n_frames)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"signal must be 1-D, got shape {x.shape}")
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ConfigError(f"n_fft must be a power of two, got {n_fft}")
    if hop < 1:
        raise ConfigError(f"hop must be >= 1, got {hop}")
    if x.shape[0] < n_fft:
        raise DataError(f"signal has {x.shape[0]} samples, fewer than n_fft={n_fft}")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop]
    spec = np.fft.rfft(frames * hann_window(n_fft), axis=-1)
    return (spec.real ** 2 + spec.imag ** 2).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_bank(sample_rate_hz: int, n_fft: int, n_mels: int, fmin_hz: float, fmax_hz: float) -> MelBank:
    """HTK-scale triangular filters, each row normalized to sum to 1."""
    if n_mels < 2:
        raise ConfigError(f"n_mels must be >= 2, got {n_mels}")
    if not (0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2):
        raise ConfigError(f"invalid band edges fmin={fmin_hz}, fmax={fmax_hz} for rate {sample_rate_hz}")
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    sums = weights.sum(axis=1)
    if np.any(sums <= 0):
        empty = int(np.argmin(sums))
        raise ConfigError(f"mel filter {empty} covers no FFT bin; reduce n_mels or raise n_fft")
    weights /= sums[:, None]
    return MelBank(weights, float(fmin_hz), float(fmax_hz), edges[1:-1].copy())


def _cfg_bank(cfg: DSPConfig, sample_rate_hz: int) -> MelBank:
    cfg.validate(sample_rate_hz)
    return mel_bank(sample_rate_hz, cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)


def log_mel_gram(trace: AccelTrace, cfg: DSPConfig = DSPConfig(), bank: MelBank = None) -> SpectralGram:
    """Per-axis ``log(mel @ |STFT|^2 + floor_eps)`` with shape ``(3, n_mels, n_frames)``."""
    if bank is None:
        bank = _cfg_bank(cfg, trace.sample_rate_hz)
    data = log_mel_batch(trace.samples[None], cfg, bank)[0]
    return SpectralGram(data, cfg.n_fft, cfg.hop, trace.sample_rate_hz)


def log_mel_batch(waves: np.ndarray, cfg: DSPConfig, bank: MelBank) -> np.ndarray:
    """Vectorized log-Mel over waveforms ``(N, n_samples, 3)`` -> ``(N, 3, n_mels, T)``."""
    waves = np.asarray(waves, dtype=np.float64)
    if waves.ndim != 3 or waves.shape[2] != 3:
        raise DataError(f"expected waveforms of shape (N, n_samples, 3), got {waves.shape}")
    if waves.shape[1] < cfg.n_fft:
        raise DataError(f"trace has {waves.shape[1]} samples, fewer than n_fft={cfg.n_fft}")
    frames = np.lib.stride_tricks.sliding_window_view(waves, cfg.n_fft, axis=1)[:, ::cfg.hop]
    # frames: (N, T, 3, n_fft)
    spec = np.fft.rfft(frames * hann_window(cfg.n_fft), axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    mel = np.einsum("mf,ntaf->namt", bank.weights, power)
    return np.log(mel + cfg.floor_eps)


class LogMelSpectrogram(TransformerMixin, BaseEstimator):
    """Transform ``(n_samples, 3)`` traces into ``(3, n_mels, n_frames)`` log-Mel grams.

    ``transform`` returns a stacked array when all inputs share a length,
    otherwise a list.
    """

    def __init__(self, sample_rate_hz=250, n_fft=256, hop=128, n_mels=32, fmin=0.0, fmax=125.0,
                 floor_eps=1e-10):
        self.sample_rate_hz = sample_rate_hz
        self.n_fft = n_fft
        self.hop = hop
        self.n_mels = n_mels
        self.fmin = fmin
        self.fmax = fmax
        self.floor_eps = floor_eps

    def _config(self) -> DSPConfig:
        return DSPConfig(self.n_fft, self.hop, self.n_mels, self.fmin, self.fmax, self.floor_eps)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.mel_bank_ = _cfg_bank(self.config_, self.sample_rate_hz)
        return self

    def transform(self, X):
        from ._validation import check_traces
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "mel_bank_")
        traces = check_traces(X, self.sample_rate_hz, min_length=self.n_fft)
        grams = [log_mel_batch(t.samples[None], self.config_, self.mel_bank_)[0] for t in traces]
        if len({g.shape for g in grams}) == 1:
            return np.stack(grams)
        return grams
