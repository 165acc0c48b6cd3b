import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from crash_itsa.cli import main

from conftest import candidate_sections, sections_csv

SCENARIO = {
    "kind": "controlled",
    "beta": [120, -0.1, 20, 0.05, -5, -0.05, -8, -0.1],
    "phi": [0.3],
    "sigma": 6,
    "seed": 3,
    "month_effects": {"M_6": 10},
    "activation_months": [90, 91, 95, 96],
}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    (d / "scenario.json").write_text(json.dumps(SCENARIO))
    assert main(["simulate", str(d / "scenario.json"), "--out", str(d / "out")]) == 0
    return d / "out"


@pytest.fixture(scope="module")
def fitted(sim, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = main(["fit", str(sim / "crashes.csv"), str(sim / "sections.csv"), str(sim / "schedule.csv"),
                 "--mode", "controlled", "--out", str(out)])
    assert code == 0
    return out


def test_match_inventory_shaped(tmp_path):
    (tmp_path / "s.csv").write_text(sections_csv(candidate_sections(13, 12, seed=0)))
    assert main(["match", str(tmp_path / "s.csv"), "--out", str(tmp_path)]) == 0
    counts = read_csv(tmp_path / "times_matched.csv")
    assert sum(int(r["times_matched"]) for r in counts) == 65
    matched = read_csv(tmp_path / "matched_sections.csv")
    weights = {r["section_id"]: int(r["match_weight"]) for r in matched if r["group"] == "control"}
    assert weights == {r["control_id"]: int(r["times_matched"]) for r in counts}
    assert len(read_csv(tmp_path / "matches.csv")) == 65
    assert len(read_csv(tmp_path / "scores.csv")) == 25


def test_match_single_candidate_k1(tmp_path):
    rows = candidate_sections(6, 1, seed=0)
    for r in rows:  # identical covariates -> intercept-only model, no separation
        r.update(aadt=20000, oneway=0, lanes=2, median_ratio=0, bus_routes=1, major_freq=2, secondary_freq=4, signal_density=5)
    (tmp_path / "s.csv").write_text(sections_csv(rows))
    (tmp_path / "c.json").write_text(json.dumps({"k": 1}))
    assert main(["match", str(tmp_path / "s.csv"), "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "times_matched.csv") == [{"control_id": "C06", "times_matched": "6"}]


def test_match_missing_covariate_column(tmp_path, capsys):
    rows = candidate_sections(5, 6)
    text = sections_csv(rows).replace(",bus_routes", "").splitlines()
    # drop the bus_routes column from every data row as well
    header = sections_csv(rows).splitlines()[0].split(",")
    j = header.index("bus_routes")
    body = [",".join(v for i, v in enumerate(line.split(",")) if i != j) for line in sections_csv(rows).splitlines()[1:]]
    (tmp_path / "s.csv").write_text("\n".join([text[0]] + body) + "\n")
    assert main(["match", str(tmp_path / "s.csv"), "--out", str(tmp_path)]) == 2
    assert "bus_routes" in capsys.readouterr().err


def test_match_with_balance(tmp_path):
    rows = candidate_sections(13, 12, seed=0)
    (tmp_path / "s.csv").write_text(sections_csv(rows))
    r = np.random.default_rng(0)
    lines = ["date,section_id,severity,pedestrian,bike"]
    for row in rows:
        for y in range(1995, 2011):
            for _ in range(int(r.poisson(20))):
                lines.append(f"{y}-{int(r.integers(1, 13)):02d}-10,{row['section_id']},{'PDO' if r.random() < 0.55 else 'FI'},"
                             f"{int(r.random() < 0.1)},{int(r.random() < 0.1)}")
    (tmp_path / "c.csv").write_text("\n".join(lines) + "\n")
    assert main(["match", str(tmp_path / "s.csv"), "--crashes", str(tmp_path / "c.csv"), "--out", str(tmp_path)]) == 0
    bal = read_csv(tmp_path / "balance.csv")
    assert [b["category"] for b in bal] == ["all", "PDO", "FI", "pedestrian", "bike"]
    for b in bal:
        assert float(b["ci_low"]) <= float(b["mean_odds_ratio"]) <= float(b["ci_high"])
        assert int(b["n_pairs"]) + len([s for s in b["skipped_pairs"].split(";") if s]) == 6


def test_simulate_outputs(sim):
    names = {p.name for p in sim.iterdir()}
    assert {"rates.csv", "crashes.csv", "sections.csv", "schedule.csv", "scenario.json"} <= names
    assert len(read_csv(sim / "rates.csv")) == 192
    assert json.loads((sim / "scenario.json").read_text())["seed"] == 3


def test_simulate_recovery_and_seed_override(tmp_path):
    (tmp_path / "sc.json").write_text(json.dumps({"beta": [170.9, -0.25, -0.44, -0.11], "phi": [0.36], "sigma": 10}))
    assert main(["simulate", str(tmp_path / "sc.json"), "--out", str(tmp_path), "--seed", "9", "--replications", "20"]) == 0
    rec = json.loads((tmp_path / "recovery.json").read_text())
    assert rec["replications"] == 20 and rec["seed"] == 9 and rec["rng"] == "numpy.PCG64"


def test_fit_model_json_contents(fitted):
    model = json.loads((fitted / "model.json").read_text())
    assert model["mode"] == "controlled"
    assert set(model["categories"]) == {"all", "PDO", "FI", "pedestrian", "bike"}
    for cat, d in model["categories"].items():
        assert d["status"] == "ok"
        assert len(d["ar_params"]) == d["p"]
        assert isinstance(d["retained_months"], list)
        assert d["ar_trail"] and "variables" in d
    allc = {r["variable"]: r for r in model["categories"]["all"]["variables"]}
    # simulated rates are rounded to whole crashes per 100 lane-miles; truth still inside the CIs
    for name, truth in (("tsp_level", -8), ("level", -5), ("tsp", 20)):
        assert allc[name]["ci_low"] <= truth <= allc[name]["ci_high"]
    assert "M_6" in model["categories"]["all"]["retained_months"]
    rows = read_csv(fitted / "coefficients.csv")
    assert any(r["variable"] == "phi_1" for r in rows)


def test_fit_controlled_without_controls(sim, tmp_path, capsys):
    secs = (sim / "sections.csv").read_text().splitlines()
    (tmp_path / "s.csv").write_text("\n".join(l for l in secs if "SIM_C" not in l) + "\n")
    crashes = (sim / "crashes.csv").read_text().splitlines()
    (tmp_path / "c.csv").write_text("\n".join(l for l in crashes if "SIM_C" not in l) + "\n")
    code = main(["fit", str(tmp_path / "c.csv"), str(tmp_path / "s.csv"), str(sim / "schedule.csv"),
                 "--mode", "controlled", "--out", str(tmp_path)])
    assert code == 2
    assert "control" in capsys.readouterr().err
    code = main(["fit", str(tmp_path / "c.csv"), str(tmp_path / "s.csv"), str(sim / "schedule.csv"),
                 "--mode", "single", "--out", str(tmp_path)])
    assert code in (0, 1)


def test_fit_partial_failure_exit_1(sim, tmp_path):
    # strip the pedestrian and bike flags: those series are all zero and cannot be modelled
    lines = (sim / "crashes.csv").read_text().splitlines()
    out = [lines[0]] + [",".join(l.split(",")[:3] + ["0", "0"]) for l in lines[1:]]
    (tmp_path / "c.csv").write_text("\n".join(out) + "\n")
    code = main(["fit", str(tmp_path / "c.csv"), str(sim / "sections.csv"), str(sim / "schedule.csv"),
                 "--mode", "controlled", "--out", str(tmp_path)])
    assert code == 1
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["categories"]["all"]["status"] == "ok"
    assert model["categories"]["bike"]["status"] == "failed" and model["categories"]["bike"]["error"]
    # evaluate still runs on the fitted categories and reports the partial model
    assert main(["evaluate", str(tmp_path / "model.json"), "--out", str(tmp_path)]) == 1
    assert "bike_delta" not in (tmp_path / "effects.csv").read_text()


def test_evaluate_outputs(fitted, tmp_path):
    assert main(["evaluate", str(fitted / "model.json"), "--out", str(tmp_path)]) == 0
    eff = list(csv.reader(open(tmp_path / "effects.csv")))
    assert eff[0][:3] == ["year", "all_delta", "all_gamma_pct"]
    assert [r[0] for r in eff[1:9]] == [str(y) for y in range(2003, 2011)]
    assert [r[0] for r in eff[-3:]] == ["Overall", "CRF", "CMF"]
    plot = read_csv(tmp_path / "plot_data.csv")
    per = {}
    for r in plot:
        per.setdefault((r["category"], r["group"]), []).append(r["series"])
    for key, series in per.items():
        assert len(series) == 3 * 192
        assert set(series) == {"observed", "fitted", "counterfactual"}


def test_evaluate_null_effect_gives_zero_delta(fitted, tmp_path):
    model = json.loads((fitted / "model.json").read_text())
    for d in model["categories"].values():
        for r in d["variables"]:
            if r["variable"] in ("tsp_level", "tsp_trend"):
                r["coefficient"] = 0.0
    (tmp_path / "m.json").write_text(json.dumps(model))
    assert main(["evaluate", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 0
    eff = read_csv(tmp_path / "effects.csv")
    for row in eff[:8]:
        for k, v in row.items():
            if k.endswith("_delta"):
                assert float(v) == 0.0


def test_evaluate_rejects_unfitted(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"format": "crash-itsa-model/1", "categories": {"all": {"status": "failed"}}}))
    assert main(["evaluate", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 2
    (tmp_path / "x.json").write_text("{}")
    assert main(["evaluate", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2
    assert main(["diagnose", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_diagnose_outputs(fitted, tmp_path):
    assert main(["diagnose", str(fitted / "model.json"), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "diagnostics.csv")
    labels = {r["category"] for r in rows}
    assert "all/treated" in labels and "bike/control" in labels
    acf0 = [r for r in rows if r["block"] == "acf" and r["x"] == "0"]
    assert all(float(r["y"]) == 1.0 for r in acf0)
    dw = [float(r["y"]) for r in rows if r["block"] == "dw" and r["category"] == "all/treated"]
    assert 1.7 <= dw[0] <= 2.3


def test_diagnose_constant_residuals_exit_2(fitted, tmp_path, capsys):
    model = json.loads((fitted / "model.json").read_text())
    d = model["categories"]["all"]
    d["whitened_residuals"] = [1.0] * len(d["whitened_residuals"])
    (tmp_path / "m.json").write_text(json.dumps(model))
    assert main(["diagnose", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 2
    assert "constant" in capsys.readouterr().err


def test_bad_config_exit_2(sim, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"alpha": 0.05, "bogus": 1}))
    code = main(["fit", str(sim / "crashes.csv"), str(sim / "sections.csv"), str(sim / "schedule.csv"),
                 "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)])
    assert code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "crash_itsa", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("match", "fit", "evaluate", "diagnose", "simulate"):
        assert cmd in res.stdout
