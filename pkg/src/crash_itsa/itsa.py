"""Segmented-regression designs for interrupted time series.

Single-group designs regress the treated series on time, the intervention
level and trend, and month-of-year dummies (December is the reference).
Controlled designs stack treated and control series and add the group
indicator ``tsp`` with its interactions.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .diagnostics import durbin_watson, pacf
from .exceptions import InputError
from .panel import StudyWindow
from .regress import ArFitResult, DesignMatrix, anova_compare, fit_ar

MONTH_NAMES = tuple(f"M_{m}" for m in range(1, 12))
SINGLE_CORE = ("(Intercept)", "time", "level", "trend")
CONTROLLED_CORE = ("(Intercept)", "time", "tsp", "tsp_time", "level", "trend", "tsp_level", "tsp_trend")
TREND_CODINGS = ("since_intervention", "literal")


def parse_activation(text: str, rule: str = "last") -> tuple[int, int]:
    """Parse an activation date such as ``6/2002``, ``6&7/2002`` or ``10–12/2002``.

    Multi-month entries resolve to their last (default) or first month.
    """
    m = re.fullmatch(r"\s*(\d{1,2})\s*(?:([&\-–])\s*(\d{1,2}))?\s*/\s*(\d{4})\s*", text)
    if not m:
        raise InputError(f"cannot parse activation date {text!r}")
    first, _, second, year = m.groups()
    months = [int(first)] + ([int(second)] if second else [])
    if rule not in ("last", "first"):
        raise InputError(f"activation rule must be 'first' or 'last', got {rule!r}")
    month = months[-1] if rule == "last" else months[0]
    if not 1 <= month <= 12:
        raise InputError(f"invalid month in activation date {text!r}")
    return int(year), month


@dataclass(frozen=True)
class InterventionSchedule:
    """Cumulative activated units per month of the study window."""

    cumulative: np.ndarray
    total_units: int

    def __post_init__(self):
        cum = np.asarray(self.cumulative, dtype=float)
        object.__setattr__(self, "cumulative", cum)
        if self.total_units < 1:
            raise InputError("total_units must be >= 1")
        if np.any(np.diff(cum) < 0):
            t = int(np.flatnonzero(np.diff(cum) < 0)[0]) + 2
            raise InputError(f"cumulative activations decrease at month {t}")
        if np.any(cum < 0):
            raise InputError("cumulative activations must be >= 0")

    @classmethod
    def from_activation_months(
        cls, months: Iterable[tuple[int, int]], window: StudyWindow
    ) -> "InterventionSchedule":
        """One unit per entry, activated from its calendar month onward."""
        months = list(months)
        cum = np.zeros(window.n_months)
        for y, m in months:
            i = window.index(y, m)
            if i is None:
                if (y, m) < window.start:
                    i = 0
                else:
                    continue
            cum[i:] += 1
        return cls(cum, len(months))

    @classmethod
    def from_csv(cls, source, window: StudyWindow) -> "InterventionSchedule":
        """Read ``month,cumulative_activated,total_units`` rows.

        Months between rows carry the previous value forward; months before
        the first row are zero.
        """
        opened = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
        fh = open(source, newline="") if opened else source
        try:
            reader = csv.DictReader(fh)
            need = ("month", "cumulative_activated", "total_units")
            missing = [c for c in need if c not in (reader.fieldnames or ())]
            if missing:
                raise InputError(f"schedule CSV missing column(s): {', '.join(missing)}")
            cum = np.full(window.n_months, np.nan)
            totals = set()
            for row, r in enumerate(reader, start=1):
                try:
                    y, m = (int(v) for v in r["month"].strip().split("-")[:2])
                    value = float(r["cumulative_activated"])
                    totals.add(int(float(r["total_units"])))
                except ValueError:
                    raise InputError(f"schedule row {row}: cannot parse {dict(r)}") from None
                i = window.index(y, m)
                if i is not None:
                    cum[i] = value
        finally:
            if opened:
                fh.close()
        if len(totals) != 1:
            raise InputError(f"schedule total_units must be a single value, got {sorted(totals)}")
        last = 0.0
        for i in range(cum.size):
            if np.isnan(cum[i]):
                cum[i] = last
            last = cum[i]
        return cls(cum, totals.pop())

    def to_csv(self, path, window: StudyWindow) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["month", "cumulative_activated", "total_units"])
            for (y, m), c in zip(window.calendar(), self.cumulative):
                w.writerow([f"{y:04d}-{m:02d}", f"{c:g}", self.total_units])


def build_level(schedule: InterventionSchedule, window: StudyWindow) -> np.ndarray:
    """Share of units active in each month, in [0, 1]."""
    if schedule.cumulative.size != window.n_months:
        raise InputError(
            f"schedule covers {schedule.cumulative.size} months, window has {window.n_months}"
        )
    return np.clip(schedule.cumulative / schedule.total_units, 0.0, 1.0)


def build_trend(level, intervention_month: int, coding: str = "since_intervention") -> np.ndarray:
    """Post-intervention trend variable.

    ``since_intervention``: ``level_t * (t - intervention_month + 1)`` from the
    intervention month on, else 0. ``literal``: ``level_t * t``.
    """
    level = np.asarray(level, dtype=float)
    t = np.arange(1, level.size + 1, dtype=float)
    if coding == "since_intervention":
        return np.where(t >= intervention_month, level * (t - intervention_month + 1), 0.0)
    if coding == "literal":
        return level * t
    raise InputError(f"trend_coding must be one of {TREND_CODINGS}, got {coding!r}")


@dataclass(frozen=True)
class ItsaVariables:
    time: np.ndarray
    level: np.ndarray
    trend: np.ndarray
    month_of_year: np.ndarray
    intervention_month: int
    trend_coding: str = "since_intervention"

    @property
    def n(self) -> int:
        return self.time.size

    def month_dummies(self) -> np.ndarray:
        """n x 11 one-hot month indicators, December as reference."""
        return (self.month_of_year[:, None] == np.arange(1, 12)[None, :]).astype(float)


def build_variables(
    window: StudyWindow, level, trend_coding: str = "since_intervention"
) -> ItsaVariables:
    level = np.asarray(level, dtype=float)
    if level.size != window.n_months:
        raise InputError(f"level has {level.size} months, window has {window.n_months}")
    if np.any((level < 0) | (level > 1)):
        raise InputError("level must lie in [0, 1]")
    return ItsaVariables(
        time=np.arange(1, window.n_months + 1, dtype=float),
        level=level,
        trend=build_trend(level, window.intervention_month, trend_coding),
        month_of_year=window.month_of_year(),
        intervention_month=window.intervention_month,
        trend_coding=trend_coding,
    )


@dataclass(frozen=True)
class SegmentedDesign:
    """Design matrix plus outcome and the variables it was built from.

    For controlled designs the first ``n`` rows are the treated group and
    the next ``n`` the control group.
    """

    matrix: DesignMatrix
    y: np.ndarray
    kind: str
    variables: ItsaVariables

    @property
    def names(self) -> tuple[str, ...]:
        return self.matrix.names

    @property
    def months(self) -> list[str]:
        return [c for c in self.names if c in MONTH_NAMES]

    @property
    def n_groups(self) -> int:
        return 2 if self.kind == "controlled" else 1

    def drop(self, names: Sequence[str]) -> "SegmentedDesign":
        core = set(CONTROLLED_CORE)
        if core & set(names):
            raise InputError(f"core variables cannot be dropped: {sorted(core & set(names))}")
        return SegmentedDesign(self.matrix.drop(names), self.y, self.kind, self.variables)

    def with_months(self, months: Sequence[str]) -> "SegmentedDesign":
        return self.drop([m for m in self.months if m not in set(months)])


def build_single_design(rates, variables: ItsaVariables) -> SegmentedDesign:
    """Columns ``(Intercept), time, level, trend, M_1..M_11``."""
    y = np.asarray(rates, dtype=float)
    if y.shape != (variables.n,):
        raise InputError(f"outcome has {y.size} months, variables have {variables.n}")
    v = variables
    X = np.column_stack([np.ones(v.n), v.time, v.level, v.trend, v.month_dummies()])
    return SegmentedDesign(DesignMatrix(X, SINGLE_CORE + MONTH_NAMES), y, "single", v)


def build_controlled_design(rates_treated, rates_control, variables: ItsaVariables) -> SegmentedDesign:
    """Stacked treated/control design with ``tsp`` interactions."""
    yt = np.asarray(rates_treated, dtype=float)
    yc = np.asarray(rates_control, dtype=float)
    if yt.shape != (variables.n,) or yc.shape != (variables.n,):
        raise InputError(
            f"treated ({yt.size}) and control ({yc.size}) series must both span {variables.n} months"
        )
    v = variables
    rows = []
    for tsp in (1.0, 0.0):
        g = np.full(v.n, tsp)
        rows.append(np.column_stack([
            np.ones(v.n), v.time, g, g * v.time, v.level, v.trend, g * v.level, g * v.trend,
            v.month_dummies(),
        ]))
    X = np.vstack(rows)
    return SegmentedDesign(
        DesignMatrix(X, CONTROLLED_CORE + MONTH_NAMES), np.concatenate([yt, yc]), "controlled", v
    )


def fit_design(design: SegmentedDesign, p: int) -> ArFitResult:
    """Fit a segmented design with AR(p) errors.

    Controlled designs share one AR process across groups but never
    difference across the boundary between the stacked series.
    """
    segments = (design.variables.n,) * 2 if design.kind == "controlled" else None
    return fit_ar(design.matrix, design.y, p, segments=segments)


@dataclass
class ArOrderSelection:
    p: int
    trail: list[dict]
    flagged: bool = False


def _whitened_blocks(fit: ArFitResult) -> list[np.ndarray]:
    if fit.segments is None:
        return [fit.whitened_resid]
    sizes = [s - fit.p for s in fit.segments]
    edges = np.cumsum([0, *sizes])
    return [fit.whitened_resid[edges[i] : edges[i + 1]] for i in range(len(sizes))]


def select_ar_order(
    design: SegmentedDesign,
    p_max: int = 12,
    dw_band: tuple[float, float] = (1.6, 2.4),
    pacf_lags: str = "next",
    pacf_z: float = 2.0,
) -> ArOrderSelection:
    """Choose the AR order from Durbin-Watson and PACF checks on whitened residuals.

    Starting at ``p = 0``, the model is accepted when the Durbin-Watson
    statistic lies inside ``dw_band`` and no checked PACF value lies outside
    ``pacf_z / sqrt(n)``. Otherwise ``p`` moves to the larger of ``p + 1``
    and the smallest offending lag.

    ``pacf_lags="next"`` checks lags ``1..p+1``; ``"all"`` checks every lag
    up to ``p_max``. With ``"all"`` roughly half of white-noise series show
    at least one spurious spike among 12 lags, so it over-selects.

    Each trail entry records the statistics seen at one candidate order. The
    accepted order is also compared against ``p - 1`` by likelihood ratio.
    """
    if p_max < 0:
        raise InputError("p_max must be >= 0")
    if pacf_lags not in ("next", "all"):
        raise InputError("pacf_lags must be 'next' or 'all'")
    lo, hi = dw_band
    trail: list[dict] = []
    fits: dict[int, ArFitResult] = {}
    p = 0
    while p <= p_max:
        fit = fits[p] = fit_design(design, p)
        blocks = _whitened_blocks(fit)
        dw = float(np.mean([durbin_watson(b) for b in blocks]))
        n_w = sum(b.size for b in blocks)
        max_lag = min(p_max, min(b.size for b in blocks) - 1)
        pac = np.mean([pacf(b, max_lag)[1:] for b in blocks], axis=0) if max_lag > 0 else np.empty(0)
        bound = pacf_z / np.sqrt(n_w / len(blocks))
        checked = range(1, (p + 1 if pacf_lags == "next" else max_lag) + 1)
        outside = [k for k in checked if k <= pac.size and abs(pac[k - 1]) > bound]
        dw_ok = lo <= dw <= hi
        entry = {
            "p": p,
            "dw": dw,
            "dw_ok": dw_ok,
            "pacf": pac.tolist(),
            "pacf_band": bound,
            "pacf_outside": outside,
        }
        trail.append(entry)
        if dw_ok and not outside:
            if p:
                res = anova_compare(fits.get(p - 1) or fit_design(design, p - 1), fit)
                entry["anova_vs_previous"] = {"statistic": res.statistic, "dof": res.dof, "pvalue": res.pvalue}
            entry["accepted"] = True
            return ArOrderSelection(p, trail)
        p = max(p + 1, min(outside)) if outside else p + 1
    best = min(trail, key=lambda e: abs(e["dw"] - 2.0))
    best["accepted"] = True
    return ArOrderSelection(best["p"], trail, flagged=True)


@dataclass
class ItsaModelSpec:
    """A fitted segmented model with its pruning and AR-order trails."""

    design: SegmentedDesign
    p: int
    fit: ArFitResult
    alpha: float
    pruning_trail: list[dict] = field(default_factory=list)
    ar_trail: list[dict] = field(default_factory=list)
    ar_flagged: bool = False

    @property
    def retained_months(self) -> list[str]:
        return self.design.months

    def table(self, alpha: float = 0.05) -> list[dict]:
        ci = self.fit.conf_int(alpha)
        return [
            {
                "variable": name,
                "coefficient": float(c),
                "std_error": float(se),
                "ci_low": float(lo),
                "ci_high": float(hi),
                "p_value": float(pv),
            }
            for name, c, se, (lo, hi), pv in zip(
                self.fit.names, self.fit.coef, self.fit.bse, ci, self.fit.pvalues
            )
        ]


def prune_seasonality(design: SegmentedDesign, p: int, alpha: float = 0.05) -> ItsaModelSpec:
    """Backward elimination of month dummies.

    Refits after dropping the single dummy with the largest p-value above
    ``alpha`` until every retained dummy has p-value <= ``alpha``. Core
    variables are never dropped.
    """
    if not 0 < alpha <= 1:
        raise InputError("alpha must lie in (0, 1]")
    trail = []
    current = design
    while True:
        fit = fit_design(current, p)
        pv = dict(zip(fit.names, fit.pvalues))
        candidates = [(pv[m], m) for m in current.months if pv[m] > alpha]
        if not candidates:
            return ItsaModelSpec(current, p, fit, alpha, trail)
        worst_p, worst = max(candidates, key=lambda c: (c[0], -MONTH_NAMES.index(c[1])))
        trail.append({"dropped": worst, "p_value": float(worst_p)})
        current = current.drop([worst])


def fit_itsa(
    design: SegmentedDesign,
    alpha: float = 0.05,
    p_max: int = 12,
    dw_band: tuple[float, float] = (1.6, 2.4),
    pacf_lags: str = "next",
    p: int | None = None,
) -> ItsaModelSpec:
    """Select the AR order on the full design, then prune seasonality at that order.

    Pass ``p`` to skip order selection.
    """
    if p is None:
        sel = select_ar_order(design, p_max, dw_band, pacf_lags)
        p, trail, flagged = sel.p, sel.trail, sel.flagged
    else:
        trail, flagged = [{"p": p, "fixed": True}], False
    spec = prune_seasonality(design, p, alpha)
    spec.ar_trail = trail
    spec.ar_flagged = flagged
    return spec


def spec_to_dict(spec: ItsaModelSpec) -> dict:
    """JSON-ready record of a fitted model, enough to rebuild it with :func:`spec_from_dict`."""
    f = spec.fit
    return {
        "kind": spec.design.kind,
        "p": spec.p,
        "ar_params": f.ar_params.tolist(),
        "retained_months": spec.retained_months,
        "variables": spec.table(spec.alpha),
        "covariance": f.cov.tolist(),
        "sigma2": f.sigma2,
        "loglik": f.loglik,
        "dof": f.dof,
        "n_iter": f.n_iter,
        "converged": f.converged,
        "alpha": spec.alpha,
        "ar_flagged": spec.ar_flagged,
        "ar_trail": spec.ar_trail,
        "pruning_trail": spec.pruning_trail,
        "y": f.y.tolist(),
        "residuals": f.resid.tolist(),
        "whitened_residuals": f.whitened_resid.tolist(),
    }


def spec_from_dict(d: dict, variables: ItsaVariables) -> ItsaModelSpec:
    """Rebuild a fitted model from :func:`spec_to_dict` output and its variables."""
    try:
        y = np.asarray(d["y"], dtype=float)
        n = variables.n
        if d["kind"] == "single":
            design = build_single_design(y, variables)
        elif d["kind"] == "controlled":
            if y.size != 2 * n:
                raise InputError(f"controlled model needs {2 * n} outcomes, got {y.size}")
            design = build_controlled_design(y[:n], y[n:], variables)
        else:
            raise InputError(f"unknown model kind {d['kind']!r}")
        design = design.with_months(d["retained_months"])
        names = tuple(row["variable"] for row in d["variables"])
        if names != design.names:
            raise InputError(f"stored variables {names} do not match rebuilt design {design.names}")
        coef = np.array([row["coefficient"] for row in d["variables"]], dtype=float)
        fit = ArFitResult(
            names=names,
            coef=coef,
            cov=np.asarray(d["covariance"], dtype=float),
            ar_params=np.asarray(d["ar_params"], dtype=float),
            sigma2=float(d["sigma2"]),
            loglik=float(d["loglik"]),
            dof=int(d["dof"]),
            resid=np.asarray(d["residuals"], dtype=float),
            whitened_resid=np.asarray(d["whitened_residuals"], dtype=float),
            fitted=design.matrix.values @ coef,
            y=y,
            n_iter=int(d.get("n_iter", 0)),
            converged=bool(d.get("converged", True)),
            segments=(n, n) if design.kind == "controlled" else None,
        )
        return ItsaModelSpec(
            design, int(d["p"]), fit, float(d.get("alpha", 0.05)),
            list(d.get("pruning_trail", [])), list(d.get("ar_trail", [])), bool(d.get("ar_flagged", False)),
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed model record: {exc}") from None
