"""Seeded synthetic ITSA data for validating the estimators.

A scenario describes a segmented mean (single-group or controlled),
month-of-year effects, stationary AR(p) errors and an intervention
schedule. Replication ``i`` of a study uses seed ``seed + i``.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .effects import evaluate_effects, predict_counterfactual
from .exceptions import ConfigError, CrashItsaError, NonStationaryError
from .itsa import (
    CONTROLLED_CORE,
    MONTH_NAMES,
    SINGLE_CORE,
    InterventionSchedule,
    ItsaModelSpec,
    build_controlled_design,
    build_level,
    build_single_design,
    build_variables,
    fit_design,
    fit_itsa,
)
from .panel import CrashRecord, SectionRecord, StudyWindow
from .regress import is_stationary

RNG_ALGORITHM = "numpy.PCG64"
SCENARIO_KEYS = {
    "kind", "start", "end", "intervention_month", "beta", "month_effects", "phi",
    "sigma", "activation_months", "seed", "rounding", "trend_coding", "rng",
}


@dataclass
class ScenarioSpec:
    """Generative ITSA scenario.

    ``beta`` follows the column order of the matching design (4 entries for
    ``kind="single"``, 8 for ``"controlled"``). ``month_effects`` maps month
    names ``M_1``..``M_11`` to additive effects. ``activation_months`` lists,
    per unit, the 1-based month it switches on; by default a single unit
    switches on at the intervention month.
    """

    beta: Sequence[float]
    kind: str = "single"
    start: str = "1995-01"
    end: str = "2010-12"
    intervention_month: int = 90
    month_effects: dict[str, float] = field(default_factory=dict)
    phi: Sequence[float] = ()
    sigma: float = 1.0
    activation_months: Sequence[int] | None = None
    seed: int = 0
    rounding: bool = False
    trend_coding: str = "since_intervention"
    rng: str = RNG_ALGORITHM

    def __post_init__(self):
        self.beta = [float(b) for b in self.beta]
        self.phi = [float(p) for p in self.phi]
        want = {"single": 4, "controlled": 8}.get(self.kind)
        if want is None:
            raise ConfigError(f"scenario kind must be 'single' or 'controlled', got {self.kind!r}")
        if len(self.beta) != want:
            raise ConfigError(f"{self.kind} scenario needs {want} beta values, got {len(self.beta)}")
        if not self.sigma >= 0:
            raise ConfigError("sigma must be >= 0")
        if not is_stationary(self.phi):
            raise NonStationaryError(f"scenario AR coefficients {self.phi} are not stationary")
        bad = set(self.month_effects) - set(MONTH_NAMES)
        if bad:
            raise ConfigError(f"unknown month effects {sorted(bad)}")
        if self.rng != RNG_ALGORITHM:
            raise ConfigError(f"unsupported generator {self.rng!r}; only {RNG_ALGORITHM}")

    @property
    def window(self) -> StudyWindow:
        return StudyWindow(self.start, self.end, self.intervention_month)

    @property
    def names(self) -> tuple[str, ...]:
        return SINGLE_CORE if self.kind == "single" else CONTROLLED_CORE

    def schedule(self) -> InterventionSchedule:
        months = self.activation_months or [self.intervention_month]
        w = self.window
        cum = np.zeros(w.n_months)
        for m in months:
            cum[int(m) - 1 :] += 1
        return InterventionSchedule(cum, len(months))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        d["phi"] = list(self.phi)
        if self.activation_months is not None:
            d["activation_months"] = [int(m) for m in self.activation_months]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d) -> "ScenarioSpec":
        unknown = set(d) - SCENARIO_KEYS
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class SyntheticData:
    window: StudyWindow
    level: np.ndarray
    treated: np.ndarray
    control: np.ndarray | None
    mean_treated: np.ndarray
    mean_control: np.ndarray | None


def ar_noise(phi: Sequence[float], sigma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """AR(p) noise with ``10 * p`` burn-in steps started from zero."""
    phi = np.asarray(phi, dtype=float)
    p = phi.size
    burn = 10 * p
    w = rng.normal(0.0, sigma, n + burn) if sigma > 0 else np.zeros(n + burn)
    e = np.zeros(n + burn)
    for t in range(n + burn):
        acc = w[t]
        for i in range(min(p, t)):
            acc += phi[i] * e[t - 1 - i]
        e[t] = acc
    return e[burn:]


def _mean_paths(spec: ScenarioSpec, level: np.ndarray):
    variables = build_variables(spec.window, level, spec.trend_coding)
    season = np.zeros(variables.n)
    dummies = variables.month_dummies()
    for name, a in spec.month_effects.items():
        season += a * dummies[:, MONTH_NAMES.index(name)]
    b = spec.beta
    core = np.column_stack([np.ones(variables.n), variables.time, variables.level, variables.trend])
    if spec.kind == "single":
        return variables, core @ b + season, None
    control = core @ np.array([b[0], b[1], b[4], b[5]]) + season
    treated = control + core @ np.array([b[2], b[3], b[6], b[7]])
    return variables, treated, control


def generate(spec: ScenarioSpec, seed: int | None = None) -> SyntheticData:
    """Draw one synthetic dataset. Control noise is drawn after treated noise."""
    rng = np.random.Generator(np.random.PCG64(spec.seed if seed is None else seed))
    level = build_level(spec.schedule(), spec.window)
    _, mean_t, mean_c = _mean_paths(spec, level)
    n = mean_t.size
    yt = mean_t + ar_noise(spec.phi, spec.sigma, n, rng)
    yc = None if mean_c is None else mean_c + ar_noise(spec.phi, spec.sigma, n, rng)
    if spec.rounding:
        yt = np.maximum(0.0, np.round(yt))
        yc = None if yc is None else np.maximum(0.0, np.round(yc))
    return SyntheticData(spec.window, level, yt, yc, mean_t, mean_c)


def design_for(spec: ScenarioSpec, data: SyntheticData, with_months: bool = True):
    variables = build_variables(spec.window, data.level, spec.trend_coding)
    if spec.kind == "single":
        design = build_single_design(data.treated, variables)
    else:
        design = build_controlled_design(data.treated, data.control, variables)
    keep = [m for m in MONTH_NAMES if m in spec.month_effects] if with_months else []
    return design.with_months(keep)


@dataclass
class RecoverySummary:
    """Per-parameter bias, RMSE and empirical 95% CI coverage."""

    names: list[str]
    truth: list[float]
    bias: list[float]
    rmse: list[float]
    coverage: list[float]
    replications: int
    failures: int
    mean_overall_delta: float = float("nan")
    mc_se_overall_delta: float = float("nan")
    true_overall_delta: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    def as_table(self) -> dict[str, dict[str, float]]:
        return {
            n: {"truth": t, "bias": b, "rmse": r, "coverage": c}
            for n, t, b, r, c in zip(self.names, self.truth, self.bias, self.rmse, self.coverage)
        }


def recovery_study(spec: ScenarioSpec, replications: int, p: int | None = None,
                   select_order: bool = False, alpha: float = 0.05) -> RecoverySummary:
    """Refit the generating model on ``replications`` seeded draws.

    The fitted design holds the core columns plus the month dummies that
    carry effects in the scenario. The AR order is the true order unless
    ``p`` is given or ``select_order`` is set. Fit failures are counted
    and excluded from the summaries.
    """
    if replications < 1:
        raise ConfigError("replications must be >= 1")
    names = list(spec.names) + [m for m in MONTH_NAMES if m in spec.month_effects]
    truth = np.array(list(spec.beta) + [spec.month_effects[m] for m in names[len(spec.beta):]])
    order = len(spec.phi) if p is None else p
    est, covered, deltas = [], [], []
    true_delta = None
    failures = 0
    for i in range(replications):
        data = generate(spec, seed=spec.seed + i)
        design = design_for(spec, data)
        try:
            if select_order:
                model = fit_itsa(design, alpha=1.0)
                fit = model.fit
            else:
                fit = fit_design(design, order)
                model = ItsaModelSpec(design, order, fit, alpha=1.0)
        except CrashItsaError:
            failures += 1
            continue
        ci = fit.conf_int(alpha)
        est.append(fit.coef)
        covered.append((ci[:, 0] <= truth) & (truth <= ci[:, 1]))
        pair = predict_counterfactual(model)
        table = evaluate_effects(pair, spec.window)
        deltas.append(table.overall_delta)
        if true_delta is None:
            true_delta = _true_overall_delta(spec, data, table.years)
    if not est:
        return RecoverySummary(names, truth.tolist(), [], [], [], replications, failures)
    est = np.array(est)
    err = est - truth
    d = np.array(deltas)
    return RecoverySummary(
        names=names,
        truth=truth.tolist(),
        bias=err.mean(axis=0).tolist(),
        rmse=np.sqrt((err**2).mean(axis=0)).tolist(),
        coverage=np.mean(covered, axis=0).tolist(),
        replications=replications,
        failures=failures,
        mean_overall_delta=float(d.mean()),
        mc_se_overall_delta=float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else float("nan"),
        true_overall_delta=float(true_delta),
    )


def _true_overall_delta(spec: ScenarioSpec, data: SyntheticData, years: list[int]) -> float:
    v = build_variables(spec.window, data.level, spec.trend_coding)
    b = spec.beta
    if spec.kind == "single":
        path = b[2] * v.level + b[3] * v.trend
    else:
        path = b[6] * v.level + b[7] * v.trend
    yr = spec.window.year_of()
    return float(path[np.isin(yr, years)].sum())


def to_crash_records(
    rates: np.ndarray, window: StudyWindow, section_id: str, rng: np.random.Generator,
    pedestrian_share: float = 0.03, bike_share: float = 0.02,
) -> list[CrashRecord]:
    """Turn whole-number monthly counts into individual crash records.

    Counts are ``max(0, round(rate))``; with one 100 lane-mile section per
    group a count equals the rate. Each month's first half (rounded up) is
    PDO and the rest FI; pedestrian and bike flags are Bernoulli draws.
    """
    out = []
    for (y, m), r in zip(window.calendar(), rates):
        count = int(max(0, round(float(r))))
        n_pdo = (count + 1) // 2
        ped = rng.random(count) < pedestrian_share
        bike = rng.random(count) < bike_share
        day = dt.date(y, m, 15)
        for j in range(count):
            out.append(CrashRecord(day, section_id, "PDO" if j < n_pdo else "FI", bool(ped[j]), bool(bike[j])))
    return out


def synthetic_sections(kind: str) -> list[SectionRecord]:
    """One 100 lane-mile section per group (1 lane x 100 mi)."""
    out = [SectionRecord("SIM_T", "treated", 1, 100.0)]
    if kind == "controlled":
        out.append(SectionRecord("SIM_C", "control", 1, 100.0))
    return out
