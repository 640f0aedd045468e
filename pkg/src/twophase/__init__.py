"""Two-phase (unimodal/bimodal) bifurcation analysis for financial index
increment series: conditional return distributions, power-law tail fits,
and surrogate experiments."""

__version__ = "0.1.0"

from .conddist import (ConditionalDistribution, DetectorParams, ModalityReport,
                       PhaseScan, classify, condition, count_modes, scan)
from .errors import InputError, InsufficientDataError
from .series import (IncrementSeries, Segment, Session, TickSeries,
                     TradingCalendar, hk_calendar, increments, load_calendar,
                     load_csv, segment_by_calendar, whole_series_segment)
from .surrogate import (SurrogateSpec, SweepResult, assign_signs,
                        run_experiment, sample_abs_increments,
                        surrogate_increments, sweep)
from .tailfit import (CollapseReport, TailFit, TailFitConfig, ccdf_points,
                      collapse, fit_tail, ks_distance, ls_exponent,
                      mle_exponent, select_lower_bound)
from .windows import WindowStats, scale_grid, window_stats

__all__ = [
    "ConditionalDistribution", "DetectorParams", "ModalityReport", "PhaseScan",
    "classify", "condition", "count_modes", "scan",
    "InputError", "InsufficientDataError",
    "IncrementSeries", "Segment", "Session", "TickSeries", "TradingCalendar",
    "hk_calendar", "increments", "load_calendar", "load_csv",
    "segment_by_calendar", "whole_series_segment",
    "SurrogateSpec", "SweepResult", "assign_signs", "run_experiment",
    "sample_abs_increments", "surrogate_increments", "sweep",
    "CollapseReport", "TailFit", "TailFitConfig", "ccdf_points", "collapse",
    "fit_tail", "ks_distance", "ls_exponent", "mle_exponent",
    "select_lower_bound",
    "WindowStats", "scale_grid", "window_stats",
    "__version__",
]
