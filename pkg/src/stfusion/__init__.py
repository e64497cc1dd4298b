"""Person-in-bed detection from 3-axis accelerometer traces.

A log-Mel spectral branch and a learned temporal branch are fused and
projected by a compact inverted-residual CNN.  Two heads share that
backbone: a segment classifier (Track 1) and a frame-wise streaming
detector with fixed lookahead (Track 2).
"""

from .config import Config, load_config
from .dsp import DSPConfig, LogMelSpectrogram
from .estimators import SegmentDetector, StreamingDetector
from .exceptions import (ConfigError, DataError, FormatError, ShapeError, STFusionError, TrainError,
                         UsageError)
from .io import AccelTrace, EventList, Prediction, read_events, read_trace
from .models import FusionNet, ModelConfig
from .scoring import ScoreReport
from .streaming import StreamConfig, StreamState, extract_events

__version__ = "0.1.0"

__all__ = [
    "AccelTrace",
    "Config",
    "ConfigError",
    "DataError",
    "DSPConfig",
    "EventList",
    "FormatError",
    "FusionNet",
    "LogMelSpectrogram",
    "ModelConfig",
    "Prediction",
    "STFusionError",
    "ScoreReport",
    "SegmentDetector",
    "ShapeError",
    "StreamConfig",
    "StreamState",
    "StreamingDetector",
    "TrainError",
    "UsageError",
    "extract_events",
    "load_config",
    "read_events",
    "read_trace",
]
