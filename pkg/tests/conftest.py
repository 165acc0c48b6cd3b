import csv
import io
import sys

import numpy as np
import pytest

from crash_itsa.panel import SECTION_COLUMNS, StudyWindow


@pytest.fixture
def window():
    return StudyWindow("1995-01", "2010-12", 90)


def sections_csv(rows):
    """CSV text for sections given dicts with any subset of the columns."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SECTION_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def candidate_sections(n_treated=13, n_control=12, seed=0):
    """Sections with full covariates; treated units lean to high AADT and bus service."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_treated + n_control):
        treated = i < n_treated
        rows.append({
            "section_id": f"{'T' if treated else 'C'}{i:02d}",
            "group": "treated" if treated else "candidate_control",
            "lanes": int(rng.integers(2, 5)),
            "length_mi": round(float(rng.uniform(0.2, 3.0)), 2),
            "oneway": int(rng.random() < 0.2),
            "median_ratio": round(float(rng.uniform(0, 0.5)), 2),
            "aadt": int(rng.uniform(15000, 35000) if treated else rng.uniform(5000, 40000)),
            "bus_routes": int(rng.integers(1, 4) if treated else rng.integers(0, 3)),
            "major_freq": round(float(rng.uniform(1, 6)), 2),
            "secondary_freq": round(float(rng.uniform(2, 12)), 2),
            "signal_density": round(float(rng.uniform(2, 8)), 2),
            "match_weight": 1,
        })
    return rows


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.VERDICTS:
            terminalreporter.write_line(line)
