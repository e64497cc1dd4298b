"""Training objectives and mixup augmentation.

Losses take probabilities as autodiff tensors and targets as plain arrays
(soft targets from mixup are allowed).  Batched frame losses of shape
``(N, T)`` are computed per sequence and averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .autodiff.functional import SIGMOID_EPS
from .exceptions import ConfigError, ShapeError

__all__ = [
    "LossConfig",
    "MixupConfig",
    "bce",
    "mse_frames",
    "soft_iou_loss",
    "streaming_loss",
    "mixup",
    "sample_mixup_lambda",
    "IOU_SMOOTH",
]

IOU_SMOOTH = 1e-6


@dataclass(frozen=True)
class LossConfig:
    beta: float = 1.0

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError(f"loss.beta must be >= 0, got {self.beta}")


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.2
    enabled: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"mixup.alpha must be > 0, got {self.alpha}")


def _target(y, like: Tensor) -> Tensor:
    y = np.asarray(y, dtype=like.dtype)
    if y.shape != like.shape:
        raise ShapeError(f"prediction shape {like.shape} != target shape {y.shape}")
    return Tensor(y, dtype=like.dtype)


def bce(p: Tensor, y, eps: float = SIGMOID_EPS) -> Tensor:
    """Mean binary cross-entropy ``-[y log p + (1 - y) log(1 - p)]``."""
    p = ad.as_tensor(p)
    y = _target(y, p)
    p = ad.clip(p, eps, 1.0 - eps)
    ll = y * ad.log(p) + (1.0 - y) * ad.log(1.0 - p)
    return -ll.mean()


def _as_rows(p: Tensor, y: Tensor):
    if p.ndim == 1:
        return p.reshape(1, p.shape[0]), y.reshape(1, y.shape[0])
    if p.ndim != 2:
        raise ShapeError(f"frame losses expect (T,) or (N, T), got {p.shape}")
    return p, y


def mse_frames(p: Tensor, y) -> Tensor:
    p = ad.as_tensor(p)
    y = _target(y, p)
    if p.size == 0:
        raise ShapeError("mse_frames needs at least one frame")
    d = p - y
    return (d * d).mean()


def soft_iou_loss(p: Tensor, y, smooth: float = IOU_SMOOTH) -> Tensor:
    """``1 - (sum p*y + s) / (sum p + sum y - sum p*y + s)`` per sequence, batch-averaged."""
    p = ad.as_tensor(p)
    y = _target(y, p)
    p2, y2 = _as_rows(p, y)
    inter = (p2 * y2).sum(axis=1)
    union = p2.sum(axis=1) + y2.sum(axis=1) - inter
    return (1.0 - (inter + smooth) / (union + smooth)).mean()


def streaming_loss(p: Tensor, y, beta: float = 1.0) -> Tensor:
    loss = mse_frames(p, y)
    if beta:
        loss = loss + beta * soft_iou_loss(p, y)
    return loss


def mixup(x1, y1, x2, y2, lam: float):
    """Convex combination of two examples and their labels with weight ``lam``."""
    x1, x2 = np.asarray(x1), np.asarray(x2)
    y1, y2 = np.asarray(y1), np.asarray(y2)
    if x1.shape != x2.shape:
        raise ShapeError(f"mixup inputs differ in shape: {x1.shape} vs {x2.shape}")
    if y1.shape != y2.shape:
        raise ShapeError(f"mixup labels differ in shape: {y1.shape} vs {y2.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup weight must be in [0, 1], got {lam}")
    if lam == 1.0:
        return x1.copy(), y1.astype(np.float64)
    x = lam * x1 + (1.0 - lam) * x2
    y = lam * y1 + (1.0 - lam) * y2
    return x.astype(np.result_type(x1.dtype, np.float32)), y


def sample_mixup_lambda(rng: np.random.Generator, alpha: float) -> float:
    return float(rng.beta(alpha, alpha))
