"""Adam with bias correction; moment state lives on the ParamStore."""

from __future__ import annotations

import numpy as np

from ..exceptions import UsageError
from .tensor import ParamStore


def adam_step(params: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    trainable = params.trainable()
    missing = [name for name, t in trainable if t.grad is None]
    if missing:
        raise UsageError(f"no gradient for {len(missing)} parameter(s), e.g. {missing[0]!r}")
    state = params.optim_state
    step = state.get("step", 0) + 1
    state["step"] = step
    moments = state.setdefault("moments", {})
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for name, t in trainable:
        g = t.grad
        m, v = moments.get(name, (np.zeros_like(t.data), np.zeros_like(t.data)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        moments[name] = (m, v)
        m_hat = m / bc1
        v_hat = v / bc2
        t.data = (t.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(t.dtype)
