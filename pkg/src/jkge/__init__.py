"""Non-stationary benchmark efficiency metrics (JKGE_SS family) for daily
hydrological time series, with gradients, calibration and evaluation tools."""

from jkge.errors import (
    ArgumentError,
    DegenerateInputError,
    GradientUndefinedError,
    IngestionError,
)
from jkge.series import PairedSeries, TimeSeries, WaterYearIndex
from jkge.benchmark import LTM, MovingMean, SectionMean, parse_method
from jkge.metrics import (
    full_report,
    jkge_ablated,
    jkge_aug,
    jkge_musigma,
    jkge_ss,
    kge_ss,
    kge_with_components,
    mse,
    nonstationary_components,
    nse,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "DegenerateInputError",
    "GradientUndefinedError",
    "IngestionError",
    "LTM",
    "MovingMean",
    "PairedSeries",
    "SectionMean",
    "TimeSeries",
    "WaterYearIndex",
    "full_report",
    "jkge_ablated",
    "jkge_aug",
    "jkge_musigma",
    "jkge_ss",
    "kge_ss",
    "kge_with_components",
    "mse",
    "nonstationary_components",
    "nse",
    "parse_method",
]
