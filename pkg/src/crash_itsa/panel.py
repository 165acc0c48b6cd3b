"""Monthly crash panels for treated and control street sections.

Crash records are binned by calendar month over a fixed study window and
split into five categories. Exposure is the (match-weighted) sum of
lanes x length, and rates are expressed per 100 lane-miles.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping

import numpy as np

from .exceptions import ConfigError, InputError, RecordError

logger = logging.getLogger(__name__)

CATEGORIES = ("all", "PDO", "FI", "pedestrian", "bike")
SEVERITIES = ("PDO", "FI")
GROUPS = ("treated", "control")

CRASH_COLUMNS = ("date", "section_id", "severity", "pedestrian", "bike")
SECTION_COLUMNS = (
    "section_id", "group", "lanes", "length_mi", "oneway", "median_ratio", "aadt",
    "bus_routes", "major_freq", "secondary_freq", "signal_density", "match_weight",
)

_GROUP_ALIASES = {
    "treated": "treated",
    "control": "control",
    "candidate_control": "control",
}


def _parse_month(value) -> tuple[int, int]:
    if isinstance(value, str):
        try:
            year, month = value.strip().split("-")[:2]
            return int(year), int(month)
        except ValueError:
            raise ConfigError(f"cannot parse calendar month {value!r}; expected YYYY-MM") from None
    year, month = value
    return int(year), int(month)


@dataclass(frozen=True)
class StudyWindow:
    """Inclusive range of calendar months with a 1-based intervention month.

    >>> w = StudyWindow((1995, 1), (2010, 12), 90)
    >>> w.n_months, w.month_label(90)
    (192, '2002-06')
    """

    start: tuple[int, int]
    end: tuple[int, int]
    intervention_month: int

    def __post_init__(self):
        object.__setattr__(self, "start", _parse_month(self.start))
        object.__setattr__(self, "end", _parse_month(self.end))
        for y, m in (self.start, self.end):
            if not 1 <= m <= 12:
                raise ConfigError(f"invalid month {m} in study window")
        if self.n_months < 1:
            raise ConfigError(f"empty study window {self.start} .. {self.end}")
        if not 1 <= self.intervention_month <= self.n_months:
            raise ConfigError(
                f"intervention month {self.intervention_month} outside 1..{self.n_months}"
            )

    @property
    def n_months(self) -> int:
        (y0, m0), (y1, m1) = self.start, self.end
        return (y1 - y0) * 12 + (m1 - m0) + 1

    def index(self, year: int, month: int) -> int | None:
        """0-based position of a calendar month, or None when outside."""
        i = (year - self.start[0]) * 12 + (month - self.start[1])
        return i if 0 <= i < self.n_months else None

    def calendar(self) -> list[tuple[int, int]]:
        y, m = self.start
        out = []
        for _ in range(self.n_months):
            out.append((y, m))
            m += 1
            if m > 12:
                y, m = y + 1, 1
        return out

    def month_label(self, t: int) -> str:
        """Label of the 1-based month ``t``."""
        y, m = self.calendar()[t - 1]
        return f"{y:04d}-{m:02d}"

    @property
    def years(self) -> list[int]:
        return list(range(self.start[0], self.end[0] + 1))

    def year_of(self) -> np.ndarray:
        return np.array([y for y, _ in self.calendar()])

    def month_of_year(self) -> np.ndarray:
        return np.array([m for _, m in self.calendar()])

    def pre_intervention_years(self) -> list[int]:
        """Calendar years lying entirely before the intervention month."""
        years = self.year_of()
        return [y for y in self.years if np.flatnonzero(years == y)[-1] < self.intervention_month - 1]

    def to_dict(self) -> dict:
        return {
            "start": f"{self.start[0]:04d}-{self.start[1]:02d}",
            "end": f"{self.end[0]:04d}-{self.end[1]:02d}",
            "intervention_month": self.intervention_month,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StudyWindow":
        unknown = set(d) - {"start", "end", "intervention_month"}
        if unknown:
            raise ConfigError(f"unknown window keys: {sorted(unknown)}")
        return cls(d["start"], d["end"], int(d["intervention_month"]))


@dataclass(frozen=True)
class CrashRecord:
    date: dt.date
    section_id: str
    severity: str
    pedestrian_involved: bool = False
    bike_involved: bool = False

    def __post_init__(self):
        if self.severity not in SEVERITIES:
            raise InputError(f"severity must be one of {SEVERITIES}, got {self.severity!r}")


@dataclass(frozen=True)
class SectionRecord:
    """A street section with exposure attributes and matching multiplicity.

    ``covariates`` carries the remaining columns of the sections file
    (AADT, bus service, signal density, ...) for propensity modelling.
    """

    section_id: str
    group: str
    lanes: float
    length: float
    match_weight: int = 1
    covariates: Mapping[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.group not in _GROUP_ALIASES:
            raise InputError(f"section {self.section_id}: unknown group {self.group!r}")
        if self.lanes < 1:
            raise InputError(f"section {self.section_id}: lanes must be >= 1")
        if not self.length > 0:
            raise InputError(f"section {self.section_id}: length must be > 0")
        if int(self.match_weight) != self.match_weight or self.match_weight < 1:
            raise InputError(f"section {self.section_id}: match_weight must be a positive integer")

    @property
    def panel_group(self) -> str:
        return _GROUP_ALIASES[self.group]


def _canonical_group(group: str) -> str:
    try:
        return _GROUP_ALIASES[group]
    except KeyError:
        raise InputError(f"unknown group {group!r}") from None


@dataclass(frozen=True)
class MonthlyPanel:
    """Monthly crash counts per group and category.

    ``counts[group][category]`` is a read-only float array of length
    ``window.n_months``; control counts already include match weights.
    """

    window: StudyWindow
    counts: Mapping[str, Mapping[str, np.ndarray]]
    lane_miles: Mapping[str, float]
    scale: float = 100.0
    dropped: int = 0

    def series(self, group: str, category: str) -> np.ndarray:
        return self.counts[_canonical_group(group)][category]

    @property
    def groups(self) -> list[str]:
        return [g for g in GROUPS if g in self.counts]


def lane_miles(sections: Iterable[SectionRecord], group: str) -> float:
    """Weighted exposure: sum of match_weight * lanes * length for a group."""
    group = _canonical_group(group)
    members = [s for s in sections if s.panel_group == group]
    if not members:
        raise InputError(f"no sections in group {group!r}")
    return float(sum(s.match_weight * s.lanes * s.length for s in members))


def _empty_counts(n: int) -> dict[str, np.ndarray]:
    return {c: np.zeros(n) for c in CATEGORIES}


def panel_from_records(
    records: Iterable[CrashRecord],
    sections: Iterable[SectionRecord],
    window: StudyWindow,
    scale: float = 100.0,
    exclude: Collection[str] = (),
) -> MonthlyPanel:
    """Aggregate crash records into a :class:`MonthlyPanel`.

    Records dated outside the window are dropped and counted. Records on a
    section listed in ``exclude`` are skipped silently; any other unknown
    section raises :class:`RecordError`.
    """
    sections = list(sections)
    by_id = {s.section_id: s for s in sections}
    if len(by_id) != len(sections):
        raise InputError("duplicate section_id in sections")
    n = window.n_months
    groups = sorted({s.panel_group for s in sections}, key=GROUPS.index)
    counts = {g: _empty_counts(n) for g in groups}
    dropped = 0
    for row, rec in enumerate(records, start=1):
        sec = by_id.get(rec.section_id)
        if sec is None:
            if rec.section_id in exclude:
                continue
            raise RecordError(f"unknown section_id {rec.section_id!r}", row)
        i = window.index(rec.date.year, rec.date.month)
        if i is None:
            dropped += 1
            continue
        w = sec.match_weight
        c = counts[sec.panel_group]
        c["all"][i] += w
        c[rec.severity][i] += w
        if rec.pedestrian_involved:
            c["pedestrian"][i] += w
        if rec.bike_involved:
            c["bike"][i] += w
    if dropped:
        logger.info("dropped %d crash records outside the study window", dropped)
    for g in counts.values():
        for arr in g.values():
            arr.setflags(write=False)
    exposure = {g: lane_miles(sections, g) for g in groups}
    return MonthlyPanel(window, counts, exposure, scale, dropped)


def _parse_flag(value: str, name: str, row: int) -> bool:
    v = value.strip()
    if v in ("0", ""):
        return False
    if v == "1":
        return True
    raise RecordError(f"{name} flag must be 0 or 1, got {value!r}", row)


def read_crashes(source) -> list[CrashRecord]:
    """Parse a crash CSV (path or open text file)."""
    with _open_text(source) as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, CRASH_COLUMNS, "crash")
        out = []
        for row, r in enumerate(reader, start=1):
            try:
                date = dt.date.fromisoformat(r["date"].strip())
            except (ValueError, AttributeError):
                raise RecordError(f"unparseable date {r['date']!r}", row) from None
            sev = r["severity"].strip()
            if sev not in SEVERITIES:
                raise RecordError(f"severity must be PDO or FI, got {sev!r}", row)
            out.append(
                CrashRecord(
                    date,
                    r["section_id"].strip(),
                    sev,
                    _parse_flag(r["pedestrian"], "pedestrian", row),
                    _parse_flag(r["bike"], "bike", row),
                )
            )
    return out


def ingest_crashes(
    crash_csv,
    sections: Iterable[SectionRecord],
    window: StudyWindow,
    scale: float = 100.0,
    exclude: Collection[str] = (),
) -> MonthlyPanel:
    """Read a crash CSV and build the monthly panel for ``sections``."""
    return panel_from_records(read_crashes(crash_csv), sections, window, scale, exclude)


def read_sections(source) -> list[SectionRecord]:
    """Parse a sections CSV. ``match_weight`` defaults to 1 when blank."""
    with _open_text(source) as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ("section_id", "group", "lanes", "length_mi"), "sections")
        out = []
        for row, r in enumerate(reader, start=1):
            try:
                covs = {}
                for k in SECTION_COLUMNS[4:11]:
                    if k in r and r[k] not in (None, ""):
                        covs[k] = float(r[k])
                weight = r.get("match_weight") or "1"
                out.append(
                    SectionRecord(
                        r["section_id"].strip(),
                        r["group"].strip(),
                        float(r["lanes"]),
                        float(r["length_mi"]),
                        int(float(weight)),
                        covs,
                    )
                )
            except InputError as exc:
                raise RecordError(str(exc), row) from None
            except ValueError as exc:
                raise RecordError(f"bad numeric value ({exc})", row) from None
    return out


def write_sections(sections: Iterable[SectionRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SECTION_COLUMNS)
        for s in sections:
            cov = [_fmt(s.covariates.get(k, "")) for k in SECTION_COLUMNS[4:11]]
            w.writerow([s.section_id, s.group, _fmt(s.lanes), _fmt(s.length), *cov, s.match_weight])


def write_crashes(records: Iterable[CrashRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CRASH_COLUMNS)
        for r in records:
            w.writerow([r.date.isoformat(), r.section_id, r.severity,
                        int(r.pedestrian_involved), int(r.bike_involved)])


def to_rate_series(panel: MonthlyPanel, group: str, category: str) -> np.ndarray:
    """Monthly crashes per ``panel.scale`` lane-miles."""
    group = _canonical_group(group)
    exposure = panel.lane_miles.get(group, 0.0)
    if not exposure > 0:
        raise InputError(f"group {group!r} has no lane-mile exposure")
    return panel.scale * np.asarray(panel.counts[group][category], dtype=float) / exposure


def annual_totals(series, window: StudyWindow) -> dict[int, float]:
    """Sum a monthly series by calendar year, in window order."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or series.size == 0:
        raise InputError("annual_totals needs a non-empty 1-D series")
    if series.size != window.n_months:
        raise InputError(f"series has {series.size} months, window has {window.n_months}")
    years = window.year_of()
    return {int(y): float(series[years == y].sum()) for y in window.years}


def _fmt(x) -> str:
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return str(x)


def _require_columns(fieldnames, required, what):
    have = set(fieldnames or ())
    missing = [c for c in required if c not in have]
    if missing:
        raise InputError(f"{what} CSV missing column(s): {', '.join(missing)}")


class _open_text:
    def __init__(self, source):
        self.source = source
        self.fh = None

    def __enter__(self):
        if isinstance(self.source, (str, os.PathLike)):
            self.fh = open(self.source, newline="")
            return self.fh
        if isinstance(self.source, io.TextIOBase) or hasattr(self.source, "read"):
            return self.source
        raise InputError(f"cannot read from {self.source!r}")

    def __exit__(self, *exc):
        if self.fh is not None:
            self.fh.close()
