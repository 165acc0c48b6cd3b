"""Residual diagnostics: Durbin-Watson, ACF, PACF and normal q-q data."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import DiagnosticsError


def durbin_watson(resid) -> float:
    """Durbin-Watson statistic ``sum (e_t - e_{t-1})^2 / sum e_t^2``."""
    e = np.asarray(resid, dtype=float)
    if e.size < 2:
        raise DiagnosticsError("Durbin-Watson needs at least 2 residuals")
    denom = float(e @ e)
    if denom == 0.0:
        raise DiagnosticsError("Durbin-Watson undefined for all-zero residuals")
    return float(np.sum(np.diff(e) ** 2) / denom)


def acf(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (lag-0 denominator)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 0 <= max_lag < n:
        raise DiagnosticsError(f"max_lag must be in [0, {n - 1}]")
    d = x - x.mean()
    c0 = float(d @ d)
    if c0 <= 1e-300 or np.ptp(x) == 0:
        raise DiagnosticsError("autocorrelation undefined for a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[: n - k] @ d[k:]) / c0
    return out


def durbin_levinson(r: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``r[0..L]``.

    Returns an array of length ``L + 1`` with entry 0 set to 1.
    """
    L = r.size - 1
    pac = np.empty(L + 1)
    pac[0] = 1.0
    if L == 0:
        return pac
    phi = np.array([r[1]])
    pac[1] = r[1]
    v = 1.0 - r[1] ** 2
    for k in range(2, L + 1):
        a = (r[k] - phi @ r[k - 1 : 0 : -1]) / v
        phi = np.append(phi - a * phi[::-1], a)
        v *= 1.0 - a * a
        pac[k] = a
    return pac


def pacf(x, max_lag: int) -> np.ndarray:
    """Sample partial autocorrelations; entry ``k`` is the lag-``k`` value.

    Entry 0 is 1 by convention so that ``pacf(x, L)[1] == acf(x, L)[1]``.
    """
    return durbin_levinson(acf(x, max_lag))


def qq_points(resid, plotting_position: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Normal q-q pairs ``(theoretical, sample)`` for standardized residuals.

    Theoretical quantiles are taken at ``(i - a) / n`` with ``a = 0.5``.
    """
    e = np.asarray(resid, dtype=float)
    n = e.size
    if n < 3:
        raise DiagnosticsError("q-q data needs at least 3 residuals")
    sd = e.std(ddof=1)
    if not sd > 0:
        raise DiagnosticsError("q-q data undefined for zero-variance residuals")
    probs = (np.arange(1, n + 1) - plotting_position) / n
    theo = stats.norm.ppf(probs)
    sample = np.sort((e - e.mean()) / sd)
    return theo, sample


def band(n: int) -> float:
    return 2.0 / np.sqrt(n)


@dataclass
class DiagnosticsReport:
    n: int
    dw: float
    acf: np.ndarray
    pacf: np.ndarray
    qq_theoretical: np.ndarray
    qq_sample: np.ndarray

    @property
    def band(self) -> float:
        return band(self.n)

    def rows(self, label: str = ""):
        """CSV rows ``label, block, x, y, band``."""
        b = f"{self.band:.10g}"
        yield [label, "dw", "", f"{self.dw:.10g}", ""]
        for k, v in enumerate(self.acf):
            yield [label, "acf", k, f"{v:.10g}", b]
        for k, v in enumerate(self.pacf[1:], start=1):
            yield [label, "pacf", k, f"{v:.10g}", b]
        for t, s in zip(self.qq_theoretical, self.qq_sample):
            yield [label, "qq", f"{t:.10g}", f"{s:.10g}", ""]


CSV_HEADER = ["category", "block", "x", "y", "band"]


def diagnose(resid, max_lag: int = 24) -> DiagnosticsReport:
    e = np.asarray(resid, dtype=float)
    max_lag = min(max_lag, e.size - 1)
    a = acf(e, max_lag)
    theo, sample = qq_points(e)
    return DiagnosticsReport(e.size, durbin_watson(e), a, durbin_levinson(a), theo, sample)


def write_reports(reports: dict[str, DiagnosticsReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for label, rep in reports.items():
            w.writerows(rep.rows(label))
