"""Propensity scores, k-nearest-neighbour matching with replacement, balance checks."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.special import expit

from .exceptions import InputError, PositivityWarning, SeparationError
from .panel import CATEGORIES, MonthlyPanel, SectionRecord, annual_totals
from .regress import DesignMatrix, fit_logit

COVARIATES = (
    "ln_aadt", "oneway", "lanes", "median_ratio", "bus_routes",
    "major_freq", "secondary_freq", "signal_density",
)
PROFILE_COLUMNS = ("aadt", "oneway", "median_ratio", "bus_routes", "major_freq",
                   "secondary_freq", "signal_density")
POSITIVITY_EPS = 1e-6


@dataclass(frozen=True)
class SectionProfile:
    section_id: str
    aadt: float
    oneway: int
    lanes: float
    median_ratio: float
    bus_routes: float
    major_freq: float
    secondary_freq: float
    signal_density: float
    length: float

    def __post_init__(self):
        if not self.aadt > 0:
            raise InputError(f"section {self.section_id}: aadt must be > 0")
        if not self.length > 0:
            raise InputError(f"section {self.section_id}: length must be > 0")
        if not 0.0 <= self.median_ratio <= 1.0:
            raise InputError(f"section {self.section_id}: median_ratio must lie in [0, 1]")

    def covariate_vector(self) -> np.ndarray:
        return np.array([
            np.log(self.aadt), self.oneway, self.lanes, self.median_ratio, self.bus_routes,
            self.major_freq, self.secondary_freq, self.signal_density,
        ], dtype=float)

    @classmethod
    def from_section(cls, s: SectionRecord) -> "SectionProfile":
        missing = [c for c in PROFILE_COLUMNS if c not in s.covariates]
        if missing:
            raise InputError(f"section {s.section_id}: missing covariate column(s) {', '.join(missing)}")
        c = s.covariates
        return cls(s.section_id, c["aadt"], int(c["oneway"]), s.lanes, c["median_ratio"],
                   c["bus_routes"], c["major_freq"], c["secondary_freq"], c["signal_density"], s.length)


@dataclass(frozen=True)
class PropensityModel:
    """Logit selection model with ``ln(length)`` as a unit-coefficient offset.

    ``link_sign = 1`` gives ``1 / (1 + exp(-eta))``; ``-1`` evaluates
    ``1 / (1 + exp(+eta))`` instead.
    """

    intercept: float
    coefs: Mapping[str, float]
    link_sign: int = 1
    loglik: float = float("nan")
    dropped: tuple[str, ...] = ()

    def linear_predictor(self, profile: SectionProfile) -> float:
        x = dict(zip(COVARIATES, profile.covariate_vector()))
        eta = self.intercept + sum(c * x[name] for name, c in self.coefs.items())
        return float(eta + np.log(profile.length))

    def score_eta(self, eta: float) -> float:
        return float(expit(self.link_sign * eta))


def score(model: PropensityModel, profile: SectionProfile) -> float:
    """Propensity score in (0, 1); warns when positivity is in doubt."""
    s = model.score_eta(model.linear_predictor(profile))
    if s < POSITIVITY_EPS or s > 1.0 - POSITIVITY_EPS:
        warnings.warn(
            f"section {profile.section_id}: propensity score {s:.3g} is at the edge of (0, 1)",
            PositivityWarning,
            stacklevel=2,
        )
    return s


def fit_propensity(
    profiles: Sequence[SectionProfile], treated_flags: Sequence[bool], link_sign: int = 1
) -> PropensityModel:
    """Fit the selection logit by IRLS.

    Covariates that are constant across all sections are left out (their
    coefficient is reported as 0); with all covariates constant the model
    is intercept-only.
    """
    if len(profiles) != len(treated_flags):
        raise InputError("profiles and treated_flags differ in length")
    if link_sign not in (1, -1):
        raise InputError("link_sign must be 1 or -1")
    y = np.asarray(treated_flags, dtype=float)
    if y.min() == y.max():
        raise InputError("propensity model needs both treated and untreated sections")
    C = np.array([p.covariate_vector() for p in profiles])
    offset = np.log([p.length for p in profiles])
    varying = [j for j in range(C.shape[1]) if np.ptp(C[:, j]) > 0]
    names = ("(Intercept)",) + tuple(COVARIATES[j] for j in varying)
    X = np.column_stack([np.ones(len(profiles)), C[:, varying]])
    try:
        fit = fit_logit(DesignMatrix(X, names), y, offset=link_sign * offset)
    except SeparationError as exc:
        raise SeparationError(
            f"{exc}. Treated and untreated sections are perfectly separated by the covariates; "
            "drop or merge covariates and refit"
        ) from None
    b = link_sign * fit.coef
    coefs = {name: 0.0 for name in COVARIATES}
    coefs.update(zip(names[1:], b[1:].tolist()))
    dropped = tuple(c for c in COVARIATES if c not in names)
    return PropensityModel(float(b[0]), coefs, link_sign, fit.loglik, dropped)


@dataclass
class MatchResult:
    """Per treated unit, ``k`` ``(control_id, distance)`` pairs in rank order."""

    matches: dict[str, list[tuple[str, float]]]
    times_matched: dict[str, int]
    k: int

    def to_csv(self, matches_path, counts_path) -> None:
        with open(matches_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["treated_id", "rank", "control_id", "score_distance"])
            for tid, lst in self.matches.items():
                for rank, (cid, d) in enumerate(lst, start=1):
                    w.writerow([tid, rank, cid, f"{d:.10g}"])
        with open(counts_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["control_id", "times_matched"])
            for cid, m in self.times_matched.items():
                w.writerow([cid, m])


def knn_match(scores_treated: Mapping[str, float], scores_control: Mapping[str, float], k: int = 5) -> MatchResult:
    """k-nearest-neighbour matching on the score, with replacement.

    Each treated unit independently takes the ``k`` controls with the
    smallest absolute score difference; ties go to the smaller control id
    (compared as strings).
    """
    if k < 1:
        raise InputError("k must be >= 1")
    if len(scores_control) < k:
        raise InputError(f"need at least {k} candidate controls, got {len(scores_control)}")
    cids = sorted(scores_control, key=str)
    cs = np.array([scores_control[c] for c in cids], dtype=float)
    matches: dict[str, list[tuple[str, float]]] = {}
    counts: dict[str, int] = {}
    for tid, s in scores_treated.items():
        d = np.abs(cs - s)
        # stable sort keeps the id order among equal distances
        order = np.argsort(d, kind="stable")[:k]
        matches[tid] = [(cids[i], float(d[i])) for i in order]
        for i in order:
            counts[cids[i]] = counts.get(cids[i], 0) + 1
    times = {c: counts[c] for c in cids if c in counts}
    return MatchResult(matches, times, k)


@dataclass
class BalanceRow:
    mean_or: float
    se: float
    ci_low: float
    ci_high: float
    n_pairs: int
    skipped: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class BalanceReport:
    rows: dict[str, BalanceRow]
    pre_years: list[int]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["category", "mean_odds_ratio", "std_error", "ci_low", "ci_high", "n_pairs", "skipped_pairs"])
            for cat, r in self.rows.items():
                skipped = ";".join(f"{a}-{b}" for a, b in r.skipped)
                w.writerow([cat, f"{r.mean_or:.6f}", f"{r.se:.6f}", f"{r.ci_low:.6f}", f"{r.ci_high:.6f}",
                            r.n_pairs, skipped])


def odds_ratio_balance(
    panel: MonthlyPanel,
    pre_years: Sequence[int] | None = None,
    categories: Iterable[str] = CATEGORIES,
    level: float = 0.95,
) -> BalanceReport:
    """Pre-intervention comparability of treated and control annual counts.

    For each consecutive year pair ``(t, t+1)`` the odds ratio is
    ``(T_t / T_{t+1}) / (C_t / C_{t+1})``. Pairs with a zero count are
    skipped and listed. The report gives the mean ratio, the standard error
    of that mean across pairs and a normal-theory interval. With a single
    usable pair the standard error is NaN.
    """
    if pre_years is None:
        pre_years = panel.window.pre_intervention_years()
    pre_years = sorted(pre_years)
    if len(pre_years) < 2:
        raise InputError("odds-ratio balance needs at least 2 pre-intervention years")
    z = stats.norm.ppf(0.5 + level / 2.0)
    rows = {}
    for cat in categories:
        tr = annual_totals(panel.series("treated", cat), panel.window)
        co = annual_totals(panel.series("control", cat), panel.window)
        ratios, skipped = [], []
        for a, b in zip(pre_years, pre_years[1:]):
            if min(tr[a], tr[b], co[a], co[b]) <= 0:
                skipped.append((a, b))
                continue
            ratios.append((tr[a] / tr[b]) / (co[a] / co[b]))
        if not ratios:
            raise InputError(f"{cat}: every pre-intervention year pair has a zero count")
        r = np.array(ratios)
        mean = float(r.mean())
        se = float(r.std(ddof=1) / np.sqrt(r.size)) if r.size > 1 else float("nan")
        rows[cat] = BalanceRow(mean, se, mean - z * se, mean + z * se, r.size, skipped)
    return BalanceReport(rows, list(pre_years))
