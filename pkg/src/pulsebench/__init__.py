"""Synthetic-data benchmark for camera-based heart-rate estimation."""

from .extraction import ColorSignal, StrategyConfig, extract_signal, oracle_features
from .metrics import MetricsReport, error_stats
from .pipeline import PipelineConfig, bench, run_pipeline
from .spectral import estimate_hr_spectral

__all__ = [
    "ColorSignal",
    "MetricsReport",
    "PipelineConfig",
    "StrategyConfig",
    "bench",
    "error_stats",
    "estimate_hr_spectral",
    "extract_signal",
    "oracle_features",
    "run_pipeline",
]
