"""Run configuration with explicit defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .exceptions import ConfigError
from .itsa import TREND_CODINGS
from .panel import CATEGORIES, StudyWindow


def _default_window() -> dict:
    return {"start": "1995-01", "end": "2010-12", "intervention_month": 90}


@dataclass
class RunConfig:
    window: dict = field(default_factory=_default_window)
    alpha: float = 0.05
    k: int = 5
    p_max: int = 12
    dw_band: list = field(default_factory=lambda: [1.6, 2.4])
    pacf_lags: str = "next"
    trend_coding: str = "since_intervention"
    link_sign: int = 1
    scale: float = 100.0
    # None resolves to every full calendar year after the intervention year
    eval_years: list | None = None
    activation_rule: str = "last"
    categories: list = field(default_factory=lambda: list(CATEGORIES))
    max_lag: int = 24
    replications: int = 0
    seed: int = 0

    def __post_init__(self):
        self.study_window  # validates
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.p_max < 0:
            raise ConfigError("p_max must be >= 0")
        if len(self.dw_band) != 2 or not self.dw_band[0] < self.dw_band[1]:
            raise ConfigError("dw_band must be [low, high] with low < high")
        if self.pacf_lags not in ("next", "all"):
            raise ConfigError("pacf_lags must be 'next' or 'all'")
        if self.trend_coding not in TREND_CODINGS:
            raise ConfigError(f"trend_coding must be one of {TREND_CODINGS}")
        if self.link_sign not in (1, -1):
            raise ConfigError("link_sign must be 1 or -1")
        if not self.scale > 0:
            raise ConfigError("scale must be > 0")
        if self.activation_rule not in ("first", "last"):
            raise ConfigError("activation_rule must be 'first' or 'last'")
        bad = [c for c in self.categories if c not in CATEGORIES]
        if bad or not self.categories:
            raise ConfigError(f"categories must be a non-empty subset of {CATEGORIES}")
        if self.replications < 0:
            raise ConfigError("replications must be >= 0")
        if self.eval_years is None:
            w = self.study_window
            first_post = int(w.year_of()[w.intervention_month - 1])
            self.eval_years = [y for y in w.years if y > first_post]

    @property
    def study_window(self) -> StudyWindow:
        try:
            return StudyWindow.from_dict(self.window)
        except KeyError as exc:
            raise ConfigError(f"window is missing {exc}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        if path is None:
            return cls()
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)
