import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crash_itsa.effects import (
    CounterfactualPair,
    EffectTable,
    evaluate_effects,
    predict_counterfactual,
    write_effects_csv,
    write_plot_csv,
)
from crash_itsa.exceptions import InputError
from crash_itsa.itsa import ItsaModelSpec, build_controlled_design, build_single_design, build_variables, fit_design
from crash_itsa.regress import fit_ar
from crash_itsa.simgen import ScenarioSpec, generate, recovery_study

from published import PUBLISHED_EFFECTS, YEARS

def fitted_spec(window, beta, kind="single", months=(), sigma=0.0, p=0):
    spec = ScenarioSpec(beta=beta, kind=kind, sigma=sigma, phi=[0.3] * p, seed=1)
    data = generate(spec)
    v = build_variables(window, data.level)
    if kind == "single":
        d = build_single_design(data.treated + np.random.default_rng(0).normal(size=192), v)
    else:
        d = build_controlled_design(data.treated, data.control, v)
    d = d.with_months(months)
    return ItsaModelSpec(d, p, fit_design(d, p), 0.05)


def test_all_crash_example():
    t = EffectTable.from_gammas(PUBLISHED_EFFECTS["all"]["gamma"], years=YEARS)
    assert t.crf == pytest.approx(0.045875, abs=1e-6)
    assert round(t.cmf, 2) == 0.95
    assert t.crf + t.cmf == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("cat", list(PUBLISHED_EFFECTS))
def test_published_cmf_rows(cat):
    t = EffectTable.from_gammas(PUBLISHED_EFFECTS[cat]["gamma"], YEARS, PUBLISHED_EFFECTS[cat]["delta"])
    assert round(t.cmf, 2) == pytest.approx(PUBLISHED_EFFECTS[cat]["cmf"], abs=0.005)
    assert t.overall_delta == sum(PUBLISHED_EFFECTS[cat]["delta"])


def test_bike_example():
    t = EffectTable.from_gammas(PUBLISHED_EFFECTS["bike"]["gamma"])
    assert t.crf == pytest.approx(-1.951375, abs=1e-6)
    assert t.cmf == pytest.approx(2.951375)


def test_equal_paths_give_zero_effects(window):
    lam = np.linspace(50, 60, 192)
    t = evaluate_effects(CounterfactualPair(lam, lam.copy(), lam, lam), window)
    assert t.years == list(range(2003, 2011))
    assert t.delta == [0.0] * 8 and t.gamma == [0.0] * 8
    assert t.crf == 0 and t.cmf == 1


def test_zero_intervention_coefficients_give_zero_delta(window):
    model = fitted_spec(window, [100, 0.1, 0.0, 0.0])
    # force the fitted intervention coefficients to zero
    b = model.fit.coef.copy()
    b[2:4] = 0
    model.fit.coef = b
    pair = predict_counterfactual(model)
    assert not pair.delta.any()


def test_single_group_level_shift(window):
    spec = ScenarioSpec(beta=[100, 0.1, -10, 0], sigma=0.0)
    data = generate(spec)
    v = build_variables(window, data.level)
    d = build_single_design(data.treated, v).with_months([])
    fit = fit_design(d, 0)
    pair = predict_counterfactual(ItsaModelSpec(d, 0, fit, 0.05))
    np.testing.assert_allclose(pair.delta[89:], -10, atol=1e-8)
    np.testing.assert_allclose(pair.delta[:89], 0, atol=1e-8)
    np.testing.assert_array_equal(pair.lam[:89], pair.pi[:89])


def test_controlled_delta_is_closed_form(window):
    beta = [120, -0.1, 20, 0.05, -5, -0.05, 9.31, 0.02]
    spec = ScenarioSpec(beta=beta, kind="controlled", sigma=5.0, phi=[0.3], seed=9, month_effects={"M_9": -8})
    data = generate(spec)
    v = build_variables(window, data.level)
    d = build_controlled_design(data.treated, data.control, v).with_months(["M_9"])
    model = ItsaModelSpec(d, 1, fit_design(d, 1), 0.05)
    pair = predict_counterfactual(model, "controlled")
    b = model.fit.params()
    np.testing.assert_allclose(pair.delta, b["tsp_level"] * v.level + b["tsp_trend"] * v.trend, atol=1e-8)
    # treated counterfactual keeps the control group's own post-intervention changes
    expect_pi = (b["(Intercept)"] + b["tsp"] + (b["time"] + b["tsp_time"]) * v.time
                 + b["level"] * v.level + b["trend"] * v.trend + b["M_9"] * (v.month_of_year == 9))
    np.testing.assert_allclose(pair.pi, expect_pi, atol=1e-8)
    assert set(pair.groups) == {"treated", "control"}
    with pytest.raises(InputError):
        predict_counterfactual(model, "single")


def test_noseason_variant_drops_months(window):
    model = fitted_spec(window, [100, 0.1, -5, -0.1], months=["M_1", "M_7"])
    pair = predict_counterfactual(model)
    b = model.fit.params()
    m = model.design.variables.month_of_year
    season = b["M_1"] * (m == 1) + b["M_7"] * (m == 7)
    np.testing.assert_allclose(pair.lam - pair.lam_noseason, season, atol=1e-10)
    np.testing.assert_allclose(pair.pi - pair.pi_noseason, season, atol=1e-10)


def test_unfitted_and_bad_years(window):
    with pytest.raises(InputError):
        predict_counterfactual(None)
    lam = np.ones(192)
    pair = CounterfactualPair(lam, lam, lam, lam)
    with pytest.raises(InputError):
        evaluate_effects(pair, window, eval_years=[2000])
    with pytest.raises(InputError):
        evaluate_effects(pair, window, eval_years=[])
    with pytest.raises(InputError):
        CounterfactualPair(lam, lam[:5], lam, lam)


def test_nonpositive_counterfactual_years_flagged(window):
    lam = np.full(192, 2.0)
    pi = np.where(window.year_of() == 2005, -1.0, 1.0)
    t = evaluate_effects(CounterfactualPair(lam, pi, lam, pi), window)
    assert t.flagged == [2005]
    assert math.isnan(t.gamma[t.years.index(2005)])
    assert t.crf == pytest.approx(-1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50))
def test_effect_properties(seed, c):
    from crash_itsa.panel import StudyWindow
    window = StudyWindow("1995-01", "2010-12", 90)
    r = np.random.default_rng(seed)
    pi = r.uniform(10, 100, 192)
    lam = pi * r.uniform(0.5, 1.5, 192)
    t = evaluate_effects(CounterfactualPair(lam, pi, lam, pi), window)
    t2 = evaluate_effects(CounterfactualPair(c * lam, c * pi, lam, pi), window)
    np.testing.assert_allclose(t2.gamma, t.gamma, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(t2.delta, np.array(t.delta) * c, rtol=1e-9)
    assert t2.crf == pytest.approx(t.crf, rel=1e-9, abs=1e-12)
    assert t.overall_delta == pytest.approx(sum(t.delta), abs=1e-9)
    assert t.overall_gamma == pytest.approx(t.overall_delta / sum(t.pi))
    assert t.cmf + t.crf == pytest.approx(1.0, abs=1e-15)
    lo = evaluate_effects(CounterfactualPair(pi * 0.9, pi, pi, pi), window)
    assert all(d < 0 for d in lo.delta) and lo.crf > 0 and lo.cmf < 1


def test_effects_csv_layout(tmp_path):
    tables = {c: EffectTable.from_gammas(v["gamma"], YEARS, v["delta"]) for c, v in PUBLISHED_EFFECTS.items()}
    write_effects_csv(tables, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("year,all_delta,all_gamma_pct,PDO_delta")
    assert [l.split(",")[0] for l in lines[-3:]] == ["Overall", "CRF", "CMF"]
    cmf = lines[-1].split(",")
    for i, v in enumerate(PUBLISHED_EFFECTS.values()):
        assert round(float(cmf[1 + 2 * i]), 2) == pytest.approx(v["cmf"], abs=0.005)


def test_plot_csv_rows(tmp_path, window):
    model = fitted_spec(window, [120, -0.1, 20, 0.05, -5, -0.05, -8, -0.1], kind="controlled")
    pair = predict_counterfactual(model)
    write_plot_csv({"all": pair}, window, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "category,group,series,t,month,value"
    assert len(lines) - 1 == 2 * 3 * 192
    assert lines[1].startswith("all,treated,observed,1,1995-01,")


def test_controlled_null_effect_mean_delta_near_zero():
    spec = ScenarioSpec(beta=[120, -0.1, 20, 0.05, -5, -0.05, 0.0, 0.0], kind="controlled",
                        sigma=8.0, phi=[0.3], seed=4000)
    s = recovery_study(spec, 200)
    assert s.failures == 0 and s.true_overall_delta == 0
    assert abs(s.mean_overall_delta) <= 2 * s.mc_se_overall_delta
