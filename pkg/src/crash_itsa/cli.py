"""Command-line pipeline: match, fit, evaluate, diagnose, simulate.

Exit codes: 0 success, 1 partial model failure, 2 input or configuration error.
All artifacts are written with fixed formatting so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import diagnose, write_reports
from .effects import evaluate_effects, predict_counterfactual, write_effects_csv, write_plot_csv
from .exceptions import CrashItsaError, DiagnosticsError, InputError
from .itsa import (
    InterventionSchedule,
    build_controlled_design,
    build_level,
    build_single_design,
    build_variables,
    fit_itsa,
    spec_from_dict,
    spec_to_dict,
)
from .panel import SectionRecord, StudyWindow, ingest_crashes, read_sections, to_rate_series, write_crashes, write_sections
from .psm import BalanceReport, SectionProfile, fit_propensity, knn_match, odds_ratio_balance, score
from .simgen import RNG_ALGORITHM, ScenarioSpec, generate, recovery_study, synthetic_sections, to_crash_records

logger = logging.getLogger("crash_itsa")

MODEL_FORMAT = "crash-itsa-model/1"
EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# match ---------------------------------------------------------------------

def cmd_match(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sections = read_sections(args.sections)
    treated = [s for s in sections if s.panel_group == "treated"]
    pool = [s for s in sections if s.panel_group == "control"]
    if not treated or not pool:
        raise InputError("sections file needs both treated and candidate control sections")
    profiles = {s.section_id: SectionProfile.from_section(s) for s in sections}
    model = fit_propensity([profiles[s.section_id] for s in sections],
                           [s.panel_group == "treated" for s in sections], cfg.link_sign)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scores = {s.section_id: score(model, profiles[s.section_id]) for s in sections}
    for w in caught:
        logger.warning("%s", w.message)
    result = knn_match({s.section_id: scores[s.section_id] for s in treated},
                       {s.section_id: scores[s.section_id] for s in pool}, cfg.k)

    result.to_csv(out / "matches.csv", out / "times_matched.csv")
    with open(out / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["section_id", "group", "linear_predictor", "score"])
        for s in sections:
            eta = model.linear_predictor(profiles[s.section_id])
            w.writerow([s.section_id, s.panel_group, f"{eta:.10g}", f"{scores[s.section_id]:.10g}"])
    _write_json(out / "propensity.json", {
        "intercept": model.intercept, "coefficients": dict(model.coefs), "link_sign": model.link_sign,
        "loglik": model.loglik, "dropped_constant": list(model.dropped), "offset": "ln(length_mi)",
    })
    matched = list(treated) + [
        SectionRecord(s.section_id, "control", s.lanes, s.length, result.times_matched[s.section_id], s.covariates)
        for s in pool if s.section_id in result.times_matched
    ]
    write_sections(matched, out / "matched_sections.csv")

    if args.crashes:
        unmatched = {s.section_id for s in pool} - set(result.times_matched)
        panel = ingest_crashes(args.crashes, matched, cfg.study_window, cfg.scale, exclude=unmatched)
        rows = {}
        for cat in cfg.categories:
            try:
                rows.update(odds_ratio_balance(panel, categories=[cat]).rows)
            except InputError as exc:
                logger.warning("balance %s: %s", cat, exc)
        if rows:
            BalanceReport(rows, cfg.study_window.pre_intervention_years()).to_csv(out / "balance.csv")
    logger.info("matched %d treated sections to %d distinct controls (multiplicity %d)",
                len(treated), len(result.times_matched), sum(result.times_matched.values()))
    return EXIT_OK


# fit -----------------------------------------------------------------------

def _variables(cfg: RunConfig, window: StudyWindow, level):
    return build_variables(window, level, cfg.trend_coding)


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    mode = args.mode
    window = cfg.study_window
    sections = read_sections(args.sections)
    schedule = InterventionSchedule.from_csv(args.schedule, window)
    level = build_level(schedule, window)
    variables = _variables(cfg, window, level)
    panel = ingest_crashes(args.crashes, sections, window, cfg.scale)
    if "treated" not in panel.groups:
        raise InputError("sections file has no treated sections")
    if mode == "controlled" and "control" not in panel.groups:
        raise InputError("controlled mode needs control sections in the sections file")

    categories, failed = {}, []
    for cat in cfg.categories:
        try:
            yt = to_rate_series(panel, "treated", cat)
            if mode == "single":
                design = build_single_design(yt, variables)
            else:
                design = build_controlled_design(yt, to_rate_series(panel, "control", cat), variables)
            spec = fit_itsa(design, cfg.alpha, cfg.p_max, tuple(cfg.dw_band), cfg.pacf_lags)
            categories[cat] = {"status": "ok", **spec_to_dict(spec)}
            if not spec.fit.converged:
                logger.warning("%s: AR iteration limit reached", cat)
        except CrashItsaError as exc:
            failed.append(cat)
            categories[cat] = {"status": "failed", "error": str(exc)}
            logger.error("%s: %s", cat, exc)

    _write_json(out / "model.json", {
        "format": MODEL_FORMAT,
        "mode": mode,
        "config": cfg.to_dict(),
        "window": window.to_dict(),
        "lane_miles": dict(panel.lane_miles),
        "dropped_records": panel.dropped,
        "level": level.tolist(),
        "categories": categories,
    })
    with open(out / "coefficients.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "variable", "coefficient", "std_error", "ci_low", "ci_high", "p_value"])
        for cat, d in categories.items():
            if d["status"] != "ok":
                continue
            for r in d["variables"]:
                w.writerow([cat, r["variable"]] + [f"{r[k]:.10g}" for k in
                           ("coefficient", "std_error", "ci_low", "ci_high", "p_value")])
            for i, phi in enumerate(d["ar_params"], start=1):
                w.writerow([cat, f"phi_{i}", f"{phi:.10g}", "", "", "", ""])
    return EXIT_PARTIAL if failed else EXIT_OK


# evaluate / diagnose -------------------------------------------------------

def _load_model(path):
    try:
        model = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from None
    if not isinstance(model, dict) or model.get("format") != MODEL_FORMAT or "categories" not in model:
        raise InputError(f"{path} is not a fitted model file")
    fitted = {c: d for c, d in model["categories"].items() if d.get("status") == "ok"}
    if not fitted:
        raise InputError(f"{path} contains no fitted categories")
    window = StudyWindow.from_dict(model["window"])
    fit_cfg = RunConfig.from_dict(model["config"])
    variables = _variables(fit_cfg, window, model["level"])
    specs = {c: spec_from_dict(d, variables) for c, d in fitted.items()}
    partial = len(fitted) < len(model["categories"])
    return model, window, specs, partial


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model, window, specs, partial = _load_model(args.model)
    cfg = _load_config(args) if args.config else RunConfig.from_dict(model["config"])
    pairs = {c: predict_counterfactual(s, model["mode"]) for c, s in specs.items()}
    tables = {c: evaluate_effects(p, window, cfg.eval_years) for c, p in pairs.items()}
    write_effects_csv(tables, out / "effects.csv")
    write_plot_csv(pairs, window, out / "plot_data.csv")
    for c, t in tables.items():
        if t.flagged:
            logger.warning("%s: years %s have non-positive counterfactual totals", c, t.flagged)
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_diagnose(args) -> int:
    out = _out_dir(args)
    model, _, specs, partial = _load_model(args.model)
    cfg = _load_config(args) if args.config else RunConfig.from_dict(model["config"])
    reports = {}
    for cat, spec in specs.items():
        f = spec.fit
        if spec.design.kind == "controlled":
            m = spec.design.variables.n - f.p
            blocks = {f"{cat}/treated": f.whitened_resid[:m], f"{cat}/control": f.whitened_resid[m:]}
        else:
            blocks = {cat: f.whitened_resid}
        for label, e in blocks.items():
            reports[label] = diagnose(e, cfg.max_lag)
    write_reports(reports, out / "diagnostics.csv")
    return EXIT_PARTIAL if partial else EXIT_OK


# simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    try:
        scenario = ScenarioSpec.from_json(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise InputError(f"cannot read scenario {args.scenario}: {exc}") from None
    if args.seed is not None:
        scenario.seed = args.seed
    data = generate(scenario)
    window = scenario.window

    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["t", "month", "level", "treated", "treated_mean"]
        if data.control is not None:
            cols += ["control", "control_mean"]
        w.writerow(cols)
        for i in range(window.n_months):
            row = [i + 1, window.month_label(i + 1), f"{data.level[i]:.10g}",
                   f"{data.treated[i]:.10g}", f"{data.mean_treated[i]:.10g}"]
            if data.control is not None:
                row += [f"{data.control[i]:.10g}", f"{data.mean_control[i]:.10g}"]
            w.writerow(row)

    rng = np.random.Generator(np.random.PCG64([scenario.seed, 1]))
    records = to_crash_records(data.treated, window, "SIM_T", rng)
    if data.control is not None:
        records += to_crash_records(data.control, window, "SIM_C", rng)
    write_crashes(records, out / "crashes.csv")
    write_sections(synthetic_sections(scenario.kind), out / "sections.csv")
    scenario.schedule().to_csv(out / "schedule.csv", window)
    (out / "scenario.json").write_text(scenario.to_json() + "\n")

    reps = args.replications if args.replications is not None else cfg.replications
    if reps > 0:
        summary = recovery_study(scenario, reps, alpha=cfg.alpha)
        _write_json(out / "recovery.json", {"rng": RNG_ALGORITHM, "seed": scenario.seed, **summary.to_dict()})
        if summary.failures:
            logger.warning("%d of %d replications failed to fit", summary.failures, reps)
    return EXIT_OK


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crash-itsa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration JSON (defaults apply when omitted)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        return p

    p = common(sub.add_parser("match", help="propensity-score matching of control sections"))
    p.add_argument("sections", help="sections CSV with treated and candidate_control rows")
    p.add_argument("--crashes", help="crash CSV; adds a pre-period odds-ratio balance report")
    p.set_defaults(func=cmd_match)

    p = common(sub.add_parser("fit", help="fit ITSA models for every crash category"))
    p.add_argument("crashes", help="crash CSV")
    p.add_argument("sections", help="sections CSV (matched_sections.csv from 'match')")
    p.add_argument("schedule", help="schedule CSV: month,cumulative_activated,total_units")
    p.add_argument("--mode", choices=("single", "controlled"), default="single")
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("evaluate", help="yearly effects, CRF/CMF and plot data"))
    p.add_argument("model", help="model.json from 'fit'")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("diagnose", help="residual diagnostics for a fitted model"))
    p.add_argument("model", help="model.json from 'fit'")
    p.set_defaults(func=cmd_diagnose)

    p = common(sub.add_parser("simulate", help="synthetic data and optional recovery study"))
    p.add_argument("scenario", help="scenario JSON")
    p.add_argument("--replications", type=int, help="override the configured replication count")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (InputError, DiagnosticsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CrashItsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
