"""Quasi-experimental road-safety evaluation with interrupted time series."""

from .config import RunConfig
from .diagnostics import acf, diagnose, durbin_watson, pacf, qq_points
from .effects import CounterfactualPair, EffectTable, evaluate_effects, predict_counterfactual
from .exceptions import (
    ConfigError,
    CrashItsaError,
    DiagnosticsError,
    FitError,
    InputError,
    NonStationaryError,
    PositivityWarning,
    RankDeficiencyError,
    RecordError,
    SeparationError,
)
from .itsa import (
    InterventionSchedule,
    ItsaModelSpec,
    build_controlled_design,
    build_level,
    build_single_design,
    build_trend,
    build_variables,
    fit_itsa,
    prune_seasonality,
    select_ar_order,
)
from .panel import CrashRecord, MonthlyPanel, SectionRecord, StudyWindow, lane_miles, panel_from_records
from .psm import PropensityModel, SectionProfile, fit_propensity, knn_match, odds_ratio_balance, score
from .regress import anova_compare, fit_ar, fit_logit, ols
from .simgen import ScenarioSpec, generate, recovery_study

__version__ = "0.1.0"
