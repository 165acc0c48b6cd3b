"""Counterfactual prediction and yearly effect evaluation (delta, gamma, CRF, CMF)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import InputError
from .itsa import MONTH_NAMES, ItsaModelSpec
from .panel import StudyWindow

INTERVENTION_TERMS = {
    "single": ("level", "trend"),
    "controlled": ("tsp_level", "tsp_trend"),
}


@dataclass(frozen=True)
class CounterfactualPair:
    """Expected treated-group outcome with (``lam``) and without (``pi``) the intervention.

    The ``*_noseason`` variants drop the month-dummy contributions and are
    meant for plotting. ``groups`` holds per-group paths (observed, fitted,
    counterfactual) for plot export.
    """

    lam: np.ndarray
    pi: np.ndarray
    lam_noseason: np.ndarray
    pi_noseason: np.ndarray
    groups: Mapping[str, Mapping[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lam.shape == self.pi.shape == self.lam_noseason.shape == self.pi_noseason.shape):
            raise InputError("counterfactual series must have identical lengths")

    @property
    def delta(self) -> np.ndarray:
        return self.lam - self.pi


def _zeroed(X: np.ndarray, names: Sequence[str], drop: Sequence[str]) -> np.ndarray:
    X = X.copy()
    for name in drop:
        if name in names:
            X[:, names.index(name)] = 0.0
    return X


def predict_counterfactual(spec: ItsaModelSpec, mode: str | None = None) -> CounterfactualPair:
    """Expected paths for the treated group from a fitted model.

    ``lam`` uses the full fitted mean. For a single-group model ``pi`` sets
    level and trend to zero (pre-intervention trend continues). For a
    controlled model ``pi`` zeroes only ``tsp_level`` and ``tsp_trend``, so
    the treated group inherits the control group's post-intervention changes.
    """
    if spec is None or getattr(spec, "fit", None) is None:
        raise InputError("model has not been fitted")
    design = spec.design
    mode = mode or design.kind
    if mode != design.kind:
        raise InputError(f"mode {mode!r} does not match a {design.kind} design")
    names = list(design.names)
    X = design.matrix.values
    beta = spec.fit.coef
    n = design.variables.n
    seasonal = [m for m in MONTH_NAMES if m in names]

    def paths(rows: slice, drop: Sequence[str]):
        Xg = X[rows]
        Xcf = _zeroed(Xg, names, drop)
        return (
            Xg @ beta,
            Xcf @ beta,
            _zeroed(Xg, names, seasonal) @ beta,
            _zeroed(Xcf, names, seasonal) @ beta,
        )

    treated = slice(0, n)
    lam, pi, lam_ns, pi_ns = paths(treated, INTERVENTION_TERMS[mode])
    groups = {
        "treated": {"observed": design.y[treated], "fitted": lam_ns, "counterfactual": pi_ns},
    }
    if mode == "controlled":
        control = slice(n, 2 * n)
        c_lam, _, c_lam_ns, c_pi_ns = paths(control, ("level", "trend"))
        groups["control"] = {"observed": design.y[control], "fitted": c_lam_ns, "counterfactual": c_pi_ns}
    return CounterfactualPair(lam, pi, lam_ns, pi_ns, groups)


@dataclass
class EffectTable:
    """Yearly and overall effects; ``gamma`` values are fractions, not percent."""

    years: list[int]
    lam: list[float]
    pi: list[float]
    delta: list[float]
    gamma: list[float]
    flagged: list[int] = field(default_factory=list)

    @property
    def overall_delta(self) -> float:
        return float(sum(self.delta))

    @property
    def overall_pi(self) -> float:
        return float(sum(self.pi))

    @property
    def overall_gamma(self) -> float:
        return self.overall_delta / self.overall_pi if self.overall_pi > 0 else float("nan")

    @property
    def crf(self) -> float:
        """Crash reduction factor: minus the unweighted mean of yearly gamma."""
        used = [g for y, g in zip(self.years, self.gamma) if y not in self.flagged]
        if not used:
            return float("nan")
        return -float(np.mean(used))

    @property
    def cmf(self) -> float:
        return 1.0 - self.crf

    @classmethod
    def from_gammas(cls, gammas_percent: Sequence[float], years: Sequence[int] | None = None,
                    deltas: Sequence[float] | None = None) -> "EffectTable":
        """Table from printed yearly gamma values (percent), e.g. to check CRF arithmetic."""
        gam = [g / 100.0 for g in gammas_percent]
        years = list(years) if years is not None else list(range(len(gam)))
        deltas = list(deltas) if deltas is not None else [float("nan")] * len(gam)
        nan = [float("nan")] * len(gam)
        return cls(years, nan, nan, deltas, gam)


def evaluate_effects(
    pair: CounterfactualPair, window: StudyWindow, eval_years: Sequence[int] | None = None
) -> EffectTable:
    """Aggregate monthly ``lam`` and ``pi`` by calendar year and compute effects.

    ``eval_years`` defaults to every full calendar year after the one
    containing the intervention month. Years whose counterfactual total is
    not positive are kept in the table but flagged and left out of the CRF.
    """
    if pair.lam.size != window.n_months:
        raise InputError(f"series has {pair.lam.size} months, window has {window.n_months}")
    years_of = window.year_of()
    first_post_year = int(years_of[window.intervention_month - 1])
    if eval_years is None:
        eval_years = [y for y in window.years if y > first_post_year]
    eval_years = list(eval_years)
    if not eval_years:
        raise InputError("no evaluation years")
    bad = [y for y in eval_years if y not in window.years or y < first_post_year]
    if bad:
        raise InputError(f"evaluation years {bad} are outside the post-intervention window")
    table = EffectTable([], [], [], [], [])
    for y in eval_years:
        mask = years_of == y
        lam = float(pair.lam[mask].sum())
        pi = float(pair.pi[mask].sum())
        table.years.append(int(y))
        table.lam.append(lam)
        table.pi.append(pi)
        table.delta.append(lam - pi)
        if pi > 0:
            table.gamma.append((lam - pi) / pi)
        else:
            table.gamma.append(float("nan"))
            table.flagged.append(int(y))
    return table


def write_effects_csv(tables: Mapping[str, EffectTable], path) -> None:
    """Wide CSV with one ``delta``/``gamma_pct`` column pair per category.

    Rows: one per evaluation year, then ``Overall``, ``CRF`` and ``CMF``.
    """
    cats = list(tables)
    if not cats:
        raise InputError("no effect tables to write")
    years = tables[cats[0]].years
    header = ["year"]
    for c in cats:
        header += [f"{c}_delta", f"{c}_gamma_pct"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, y in enumerate(years):
            row = [y]
            for c in cats:
                t = tables[c]
                flag = "*" if t.years[i] in t.flagged else ""
                row += [_num(t.delta[i]), _num(100.0 * t.gamma[i]) + flag]
            w.writerow(row)
        w.writerow(["Overall"] + sum(([_num(tables[c].overall_delta), _num(100.0 * tables[c].overall_gamma)] for c in cats), []))
        w.writerow(["CRF"] + sum(([_num(tables[c].crf), ""] for c in cats), []))
        w.writerow(["CMF"] + sum(([_num(tables[c].cmf), ""] for c in cats), []))


def _num(x: float) -> str:
    return "" if x is None or np.isnan(x) else f"{x:.6f}"


def write_plot_csv(pairs: Mapping[str, CounterfactualPair], window: StudyWindow, path) -> None:
    """Long-format plot data: ``category,group,series,t,month,value``.

    Fitted and counterfactual series exclude seasonality.
    """
    labels = [window.month_label(t) for t in range(1, window.n_months + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "group", "series", "t", "month", "value"])
        for cat, pair in pairs.items():
            for group, series in pair.groups.items():
                for name in ("observed", "fitted", "counterfactual"):
                    for t, (lab, v) in enumerate(zip(labels, series[name]), start=1):
                        w.writerow([cat, group, name, t, lab, f"{v:.6f}"])
