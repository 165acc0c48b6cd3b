"""Section inventory of the signal-priority corridors and their matched controls, 1995-2010.

Bus routes, access frequencies and signal density were not published, so the
records carry only lanes, length, one-way flag, median share and AADT.
"""

from __future__ import annotations

from .itsa import InterventionSchedule, parse_activation
from .panel import SectionRecord, StudyWindow

# id, name, limits, lanes, one-way, median %, length (mi), AADT, activation
TREATED = (
    ("T01", "NE Sandy Blvd", "NE 96th Ave - NE 47th Ave", 4, 0, 0, 2.75, 19967, "6/2002"),
    ("T02", "NE Sandy Blvd", "NE 39th Ave - NE 16th Ave", 4, 0, 0, 1.40, 22411, "6/2002"),
    ("T03", "E Burnside St", "NE 9th Ave - MLK Jr. Blvd", 3, 1, 0, 0.24, 28866, "6&7/2002"),
    ("T04", "NE & SE 82nd Ave", "SE Flavel St - NE Killingsworth St", 4, 0, 0, 6.36, 28302, "10-12/2002"),
    ("T05", "NE Alberta St", "NE 15th Ave - NE MLK Jr. Blvd", 2, 0, 0, 0.51, 9613, "11/2002"),
    ("T06", "SE Powell Blvd", "SE 162nd Ave - SE 104th Ave", 2, 0, 0, 2.93, 22009, "12/2002"),
    ("T07", "SE Powell Blvd", "SE 92nd Ave - SE 52nd Ave", 4, 0, 50, 1.96, 29359, "8&12/2002"),
    ("T08", "SE Powell Blvd", "SE 50th Ave - SE Milwaukie Ave", 4, 0, 0, 2.13, 43621, "10/2002"),
    ("T09", "NE Broadway St", "NE 24th Ave - NE 7th Ave", 3, 1, 0, 0.78, 17192, "6&7/2002"),
    ("T10", "NE Weidler St", "NE 7th Ave - NE 21st Ave", 3, 1, 0, 0.61, 16753, "7/2002"),
    ("T11", "SE Hawthorne Blvd", "SE 27th Ave - SE 40th Ave", 4, 0, 0, 0.81, 17969, "8/2002"),
    ("T12", "SE Hawthorne Blvd", "SE 41st Ave - SE 50th Ave", 2, 0, 0, 0.42, 13384, "8/2002"),
    ("T13", "SE Foster Rd", "SE 52nd Ave - SE 82nd Ave", 4, 0, 0, 1.72, 21782, "10/2002"),
)

# id, name, limits, lanes, one-way, median %, length (mi), AADT, times matched
CONTROL = (
    ("C01", "N Albina Ave", "NE Lombard - N Prescott", 2, 0, 0, 1.51, 5255, 12),
    ("C02", "NE Columbia Blvd", "NE 33rd Ave - NE 47th Ave", 4, 0, 0, 0.53, 28158, 1),
    ("C03", "NE Lombard St", "N Williams Ave - NE MLK Jr. Blvd", 2, 0, 1, 0.26, 21771, 1),
    ("C04", "SE 17th Ave", "SE Tenino St - SE Ochoco St", 2, 0, 0, 0.35, 16299, 12),
    ("C05", "SE Division St", "SE 11th Ave - SE 17th Ave", 2, 0, 0, 0.30, 12503, 12),
    ("C06", "SE Division St", "SE 61st Ave - SE 70th Ave", 2, 0, 0, 0.42, 18025, 1),
    ("C07", "SE Division St", "SE 96th Ave - SE 111th Ave", 4, 0, 0, 0.68, 43174, 12),
    ("C08", "SE Division St", "SE 137th Ave - SE 142nd Ave", 4, 0, 0, 0.27, 41805, 12),
    ("C09", "SE Division St", "SE 148th Ave - SE 162nd Ave", 4, 0, 0, 0.49, 33660, 1),
    ("C10", "SE Foster Rd", "SE 128th Ave - SE 136th Ave", 3, 0, 0, 0.30, 21171, 1),
)

WINDOW = StudyWindow("1995-01", "2010-12", 90)


def _record(row, group: str, weight: float) -> SectionRecord:
    sid, _, _, lanes, oneway, median_pct, length, aadt, _ = row
    cov = {"aadt": float(aadt), "oneway": float(oneway), "median_ratio": median_pct / 100.0}
    return SectionRecord(sid, group, lanes, length, weight, cov)


def treated_sections() -> list[SectionRecord]:
    return [_record(r, "treated", 1.0) for r in TREATED]


def control_sections() -> list[SectionRecord]:
    """Matched controls weighted by how often each was matched."""
    return [_record(r, "control", float(r[-1])) for r in CONTROL]


def activation_schedule(rule: str = "last", window: StudyWindow = WINDOW) -> InterventionSchedule:
    """One unit per treated section, switched on at its parsed activation month."""
    return InterventionSchedule.from_activation_months(
        [parse_activation(r[-1], rule) for r in TREATED], window
    )
