"""Input coercion for the estimator API."""

from __future__ import annotations

from typing import List

import numpy as np

from .exceptions import DataError
from .io import AccelTrace, EventList


def check_traces(X, sample_rate_hz: int, min_length: int = 1) -> List[AccelTrace]:
    """Accept AccelTraces, ``(n, 3)`` arrays, or a stacked ``(N, n, 3)`` array."""
    if isinstance(X, AccelTrace):
        X = [X]
    elif isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = [X]
        elif X.ndim != 3:
            raise DataError(f"expected an (N, n_samples, 3) array, got shape {X.shape}")
    traces = []
    for i, item in enumerate(X):
        if isinstance(item, AccelTrace):
            trace = item
            if trace.sample_rate_hz != sample_rate_hz:
                raise DataError(f"trace {i} sampled at {trace.sample_rate_hz} Hz, estimator expects {sample_rate_hz}")
        else:
            trace = AccelTrace(sample_rate_hz, np.asarray(item))
        if len(trace) < min_length:
            raise DataError(f"trace {i} has {len(trace)} samples; at least {min_length} required")
        traces.append(trace)
    if not traces:
        raise DataError("no traces given")
    return traces


def check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise DataError(f"expected {n} labels, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    return y.astype(np.int64)


def check_event_lists(events, n: int) -> List[EventList]:
    out = [e if isinstance(e, EventList) else EventList(tuple(e)) for e in events]
    if len(out) != n:
        raise DataError(f"expected {n} event lists, got {len(out)}")
    return out
