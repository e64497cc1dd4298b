"""Spectral-temporal fusion networks.

Data flow for a batch of raw waveforms ``(N, n_samples, 3)``::

    log-Mel  (N, 3, n_mels, T) ──┐
                                 ├─ concat ─ fusion CNN ─ (N, 1, n_mels, T)
    TgramNet (N, 3, n_mels, T) ──┘                │
                                         MFN projector (N, 64, n_mels/4, T)
                                                  │
                      segment head (N,)  or  streaming head (N, T)

No layer strides along time, so every stage shares the frame count ``T``
of the STFT framing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .autodiff.init import kaiming_uniform, ones, zeros
from .dsp import DSPConfig, log_mel_batch, mel_bank
from .exceptions import DataError, FormatError, ShapeError

__all__ = ["ModelConfig", "FusionNet", "receptive_field_frames", "HEADS"]

HEADS = ("segment", "stream")


@dataclass(frozen=True)
class ModelConfig:
    tgram_blocks: int = 3
    mfn_blocks: int = 3
    time_kernel: int = 3
    fusion_channels: int = 16
    stem_channels: int = 32
    mfn_channels: int = 64
    expansion: int = 2
    bn_momentum: float = 0.1


def receptive_field_frames(arch: ModelConfig = ModelConfig()) -> int:
    """Frames of context needed on each side of an output frame.

    Each time-axis convolution wider than 1 adds ``time_kernel // 2``:
    TgramNet blocks, two fusion convs, the MFN stem and one depthwise conv
    per bottleneck.
    """
    n_time_convs = arch.tgram_blocks + 2 + 1 + arch.mfn_blocks
    return (arch.time_kernel // 2) * n_time_convs


class _Conv:
    def __init__(self, store, name, rng, cin, cout, kernel, stride=(1, 1), groups=1):
        kh, kw = kernel
        self.w = store.add(f"{name}.w", kaiming_uniform(rng, (cout, cin // groups, kh, kw), (cin // groups) * kh * kw))
        self.b = store.add(f"{name}.b", zeros((cout,)))
        self.stride, self.pad, self.groups = stride, (kh // 2, kw // 2), groups

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, self.stride, self.pad, self.groups)


class _BatchNorm:
    def __init__(self, store, name, channels, momentum):
        self.gamma = store.add(f"{name}.gamma", ones((channels,)))
        self.beta = store.add(f"{name}.beta", zeros((channels,)))
        self.running_mean = store.add(f"{name}.running_mean", zeros((channels,), requires_grad=False))
        self.running_var = store.add(f"{name}.running_var", ones((channels,), requires_grad=False))
        self.momentum = momentum

    def __call__(self, x, training):
        return ad.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             training, self.momentum)


class _Bottleneck:
    """Inverted residual: 1x1 expand, depthwise 3x3, linear 1x1 project."""

    def __init__(self, store, name, rng, cin, cout, expansion, stride, kt, momentum):
        hidden = cin * expansion
        self.expand = _Conv(store, f"{name}.expand.conv", rng, cin, hidden, (1, 1))
        self.expand_bn = _BatchNorm(store, f"{name}.expand.bn", hidden, momentum)
        self.dw = _Conv(store, f"{name}.dw", rng, hidden, hidden, (3, kt), stride=stride, groups=hidden)
        self.project = _Conv(store, f"{name}.project.conv", rng, hidden, cout, (1, 1))
        self.project_bn = _BatchNorm(store, f"{name}.project.bn", cout, momentum)
        self.residual = cin == cout and stride == (1, 1)

    def __call__(self, x, training):
        h = ad.relu(self.expand_bn(self.expand(x), training))
        h = self.dw(h)
        h = self.project_bn(self.project(h), training)
        return x + h if self.residual else h


class FusionNet:
    """Trainable detector; ``head`` is ``"segment"`` (Track 1) or ``"stream"`` (Track 2)."""

    def __init__(self, head: str = "segment", dsp: DSPConfig = DSPConfig(), arch: ModelConfig = ModelConfig(),
                 sample_rate_hz: int = 250, seed: int = 0):
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {head!r}")
        dsp.validate(sample_rate_hz)
        self.head, self.dsp, self.arch, self.sample_rate_hz = head, dsp, arch, sample_rate_hz
        self.bank = mel_bank(sample_rate_hz, dsp.n_fft, dsp.n_mels, dsp.fmin, dsp.fmax)
        self.params = store = ParamStore()
        rng = np.random.default_rng(seed)
        nm, kt, mom = dsp.n_mels, arch.time_kernel, arch.bn_momentum

        self.tg_conv0_w = store.add("tgram.conv0.w", kaiming_uniform(rng, (nm, 1, dsp.n_fft), dsp.n_fft))
        self.tg_conv0_b = store.add("tgram.conv0.b", zeros((nm,)))
        self.tg_blocks = []
        for i in range(arch.tgram_blocks):
            p = f"tgram.block{i}"
            self.tg_blocks.append((
                store.add(f"{p}.ln.gamma", ones((nm,))),
                store.add(f"{p}.ln.beta", zeros((nm,))),
                store.add(f"{p}.conv.w", kaiming_uniform(rng, (nm, nm, kt), nm * kt)),
                store.add(f"{p}.conv.b", zeros((nm,))),
            ))

        fc = arch.fusion_channels
        self.fusion_conv0 = _Conv(store, "fusion.conv0", rng, 6, fc, (3, kt))
        self.fusion_bn0 = _BatchNorm(store, "fusion.bn0", fc, mom)
        self.fusion_conv1 = _Conv(store, "fusion.conv1", rng, fc, 1, (3, kt))

        sc, mc = arch.stem_channels, arch.mfn_channels
        self.stem = _Conv(store, "mfn.stem.conv", rng, 1, sc, (3, kt), stride=(2, 1))
        self.stem_bn = _BatchNorm(store, "mfn.stem.bn", sc, mom)
        self.blocks = []
        cin = sc
        for i in range(arch.mfn_blocks):
            stride = (2, 1) if i == 0 else (1, 1)
            self.blocks.append(_Bottleneck(store, f"mfn.block{i}", rng, cin, mc, arch.expansion, stride, kt, mom))
            cin = mc
        self.proj_channels = cin
        self.proj_height = self._projected_height(nm, arch.mfn_blocks)

        if head == "segment":
            fin = cin
            self.head_w = store.add("head.seg.linear.w", kaiming_uniform(rng, (1, fin), fin))
            self.head_b = store.add("head.seg.linear.b", zeros((1,)))
        else:
            fin = cin * self.proj_height
            self.head_w = store.add("head.stream.linear.w", kaiming_uniform(rng, (1, fin), fin))
            self.head_b = store.add("head.stream.linear.b", zeros((1,)))

    @staticmethod
    def _projected_height(n_mels: int, n_blocks: int) -> int:
        h = (n_mels - 1) // 2 + 1
        if n_blocks:
            h = (h - 1) // 2 + 1
        return h

    # -- stages --------------------------------------------------------------

    def receptive_field_frames(self) -> int:
        return receptive_field_frames(self.arch)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.dsp.n_fft:
            return 0
        return 1 + (n_samples - self.dsp.n_fft) // self.dsp.hop

    def _check_waves(self, waves) -> np.ndarray:
        waves = np.asarray(waves)
        if waves.ndim == 2:
            waves = waves[None]
        if waves.ndim != 3 or waves.shape[2] != 3:
            raise ShapeError(f"expected waveforms (N, n_samples, 3), got {waves.shape}")
        if waves.shape[1] < self.dsp.n_fft:
            raise DataError(f"trace has {waves.shape[1]} samples, fewer than n_fft={self.dsp.n_fft}")
        return waves

    def spectral(self, waves) -> Tensor:
        """H_s: log-Mel grams ``(N, 3, n_mels, T)``; no gradient."""
        waves = self._check_waves(waves)
        return Tensor(log_mel_batch(waves, self.dsp, self.bank))

    def tgram(self, waves) -> Tensor:
        """H_t: learned temporal grams ``(N, 3, n_mels, T)``, weights shared across axes."""
        waves = self._check_waves(waves)
        n, length, _ = waves.shape
        x = Tensor(np.ascontiguousarray(waves.transpose(0, 2, 1)).reshape(n * 3, 1, length))
        h = ad.conv1d(x, self.tg_conv0_w, self.tg_conv0_b, stride=self.dsp.hop, pad=0)
        pad = self.arch.time_kernel // 2
        for gamma, beta, w, b in self.tg_blocks:
            h = ad.layer_norm(h, axis=1, gamma=gamma, beta=beta)
            h = ad.leaky_relu(h, 0.01)
            h = ad.conv1d(h, w, b, stride=1, pad=pad)
        return h.reshape(n, 3, h.shape[1], h.shape[2])

    def fuse(self, hs: Tensor, ht: Tensor, training: bool = False) -> Tensor:
        """H = F(H_s, H_t): two-layer CNN down to one channel ``(N, 1, n_mels, T)``."""
        hs, ht = ad.as_tensor(hs), ad.as_tensor(ht)
        if hs.shape != ht.shape:
            raise ShapeError(f"spectral gram {hs.shape} and temporal gram {ht.shape} differ")
        x = ad.concat([hs, ht], axis=1)
        x = ad.relu(self.fusion_bn0(self.fusion_conv0(x), training))
        return self.fusion_conv1(x)

    def project(self, h: Tensor, training: bool = False) -> Tensor:
        """MFN-style projector, ``(N, 1, n_mels, T) -> (N, 64, n_mels/4, T)``."""
        x = ad.relu(self.stem_bn(self.stem(h), training))
        for block in self.blocks:
            x = block(x, training)
        return x

    def segment_head(self, hp: Tensor) -> Tensor:
        pooled = ad.global_avg_pool(hp, axes=(2, 3))
        return ad.sigmoid(ad.linear(pooled, self.head_w, self.head_b)).reshape(hp.shape[0])

    def streaming_head(self, hp: Tensor) -> Tensor:
        n, c, m, t = hp.shape
        cols = hp.transpose(0, 3, 1, 2).reshape(n * t, c * m)
        return ad.sigmoid(ad.linear(cols, self.head_w, self.head_b)).reshape(n, t)

    def features(self, waves, training: bool = False) -> Tensor:
        hs = self.spectral(waves)
        ht = self.tgram(waves)
        return self.project(self.fuse(hs, ht, training), training)

    def forward(self, waves, training: bool = False) -> Tensor:
        """Probabilities: ``(N,)`` for the segment head, ``(N, T)`` for the streaming head."""
        hp = self.features(waves, training)
        return self.segment_head(hp) if self.head == "segment" else self.streaming_head(hp)

    __call__ = forward

    def predict(self, waves, batch_size: int = 16) -> np.ndarray:
        """Eval-mode probabilities as a numpy array, batched to bound memory."""
        waves = self._check_waves(waves)
        outs = [self.forward(waves[i:i + batch_size], training=False).data
                for i in range(0, waves.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)

    # -- persistence ------------------------------------------------------------

    def load_params(self, store: ParamStore) -> None:
        """Copy tensors from a loaded checkpoint; names and shapes must match exactly."""
        ours, theirs = set(self.params.names()), set(store.names())
        missing, extra = sorted(ours - theirs), sorted(theirs - ours)
        if missing or extra:
            raise FormatError(f"checkpoint does not match architecture; missing={missing} extra={extra}")
        for name, t in self.params.items():
            src = store[name].data
            if src.shape != t.shape:
                raise FormatError(f"parameter {name!r}: checkpoint shape {src.shape} != model shape {t.shape}")
            t.data = np.array(src, dtype=t.dtype)

    @classmethod
    def from_params(cls, store: ParamStore, dsp: DSPConfig = DSPConfig(), arch: ModelConfig = ModelConfig(),
                    sample_rate_hz: int = 250) -> "FusionNet":
        """Rebuild a model around checkpoint tensors, inferring the head from parameter names."""
        names = store.names()
        if "head.seg.linear.w" in names:
            head = "segment"
        elif "head.stream.linear.w" in names:
            head = "stream"
        else:
            raise FormatError("checkpoint has no recognizable head parameters")
        net = cls(head, dsp, arch, sample_rate_hz)
        net.load_params(store)
        return net
