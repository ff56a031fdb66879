"""Configuration-driven experiment runner and fixture generator.

Experiments are named in the config file (INI-style flat key-value with
sections); every key is validated against the experiment's schema before
any computation.  Each experiment emits CSV/JSON reports plus one
PASS/FAIL line per acceptance clause.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
import time

import numpy as np

from loopfield.groups import GroupSpec, parse_group
from loopfield.action import (ActionParams, char_coefficient, build_char_table,
                              CharCoeffTable, gaussian_lemma_check, lemma_j1_check,
                              partition_function, QuadratureError, TailBudgetError,
                              standard_label)
from loopfield.loops import (random_loop, plaquette_loop, loop_to_text,
                             make_loop_from_moves, split_positive, merge_positive,
                             merge_negative, twist_negative)
from loopfield.driver import (U1Backend, make_figure_eight,
                              make_rectangle)
from loopfield.equations import (EquationSpec, assemble, evaluate_exact_u1,
                                 evaluate_mc, convergence_simple,
                                 convergence_crossing, convergence_merger,
                                 crossing_im_sweep, degenerate_checks,
                                 unified_equation_reports,
                                 finite_difference_alternating)
from loopfield.sampler import (MCSchedule, LatticeBox, init_config,
                               sweep_heatbath_u1, sweep_metropolis,
                               estimate_wilson, gauge_transform,
                               WilsonObservable, run_chain, make_estimate,
                               plaquette_product)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    pass


_COMMON_KEYS = {
    "experiment": {"name"},
    "output": {"path", "formats"},
    "tolerances": {"residual", "final_gap", "outer_cancel", "identity",
                   "slope_lo", "slope_hi", "n_sigma"},
    "overrides": {"deform-minus", "deform-plus", "split-pos", "split-neg",
                  "twist-neg", "twist-pos", "expand-pos", "expand-neg",
                  "merge-pos", "merge-neg", "base"},
}

_EXPERIMENT_KEYS = {
    "verify-discrete": {"grid": {"epsilons"},
                        "geometry": {"t2", "t4"},
                        "random": {"count", "seed", "halfsteps"}},
    "converge-simple": {"grid": {"epsilons"}, "geometry": {"t"},
                        "groups": {"list"}},
    "converge-crossing": {"grid": {"epsilons"},
                          "geometry": {"t2", "t4", "family"},
                          "combos": {"b", "a", "b2", "a2"},
                          "triples": {"max_triples"}},
    "converge-merger": {"grid": {"epsilons"}, "geometry": {"side", "overlap"}},
    "converge-unified": {"grid": {"epsilons"}, "geometry": {"t2", "t4"},
                         "groups": {"list"},
                         "mc": {"sweeps", "burn_in", "thin", "chains", "seed"}},
    "gauss-lemma": {"grid": {"epsilons", "epsilons_j1"}},
    "degenerate": {"grid": {"epsilon"}},
    "sample-diagnostics": {"grid": {"epsilons"},
                           "mc": {"sweeps", "burn_in", "thin", "chains", "seed"},
                           "geometry": {"t"}},
}


def load_config(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if "experiment" not in parser or "name" not in parser["experiment"]:
        raise ConfigError("config needs [experiment] name = ...")
    name = parser["experiment"]["name"].strip()
    if name not in _EXPERIMENT_KEYS:
        raise ConfigError(f"unknown experiment {name!r}")
    allowed = dict(_COMMON_KEYS)
    allowed.update(_EXPERIMENT_KEYS[name])
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in allowed[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    cfg = {s: dict(parser[s]) for s in parser.sections()}
    _validate_values(name, cfg)
    return name, cfg


def _validate_values(name, cfg):
    for section, key in (("grid", "epsilons"), ("grid", "epsilons_j1")):
        if section in cfg and key in cfg[section]:
            _parse_floats(cfg[section][key])
    if "mc" in cfg:
        for key, val in cfg["mc"].items():
            if int(val) <= 0:
                raise ConfigError(f"mc {key} must be positive")
    if "overrides" in cfg:
        for key, val in cfg["overrides"].items():
            float(val)


def _parse_floats(text):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError(f"float list must be positive: {text!r}")
    return vals


def _get(cfg, section, key, default=None, cast=float):
    if section in cfg and key in cfg[section]:
        return cast(cfg[section][key])
    return default


def _schedule_from(cfg, defaults: MCSchedule) -> MCSchedule:
    mc = cfg.get("mc", {})
    return MCSchedule(
        sweeps=int(mc.get("sweeps", defaults.sweeps)),
        burn_in=int(mc.get("burn_in", defaults.burn_in)),
        thin=int(mc.get("thin", defaults.thin)),
        chains=int(mc.get("chains", defaults.chains)),
        seed=int(mc.get("seed", defaults.seed)),
    )


class Clause:
    def __init__(self, name, passed, detail=""):
        self.name = name
        self.passed = bool(passed)
        self.detail = detail

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}" + (f"  ({self.detail})" if self.detail else "")


CSV_COLUMNS = ["experiment", "group", "epsilon", "triple_id", "term", "value",
               "sigma", "residual", "residual_sigma", "target", "gap", "rate"]


def _rows_with_rates(rows):
    """Attach log2 of successive gap ratios within each (group, term, triple)."""
    prev = {}
    for r in rows:
        key = (r.get("group"), r.get("term"), r.get("triple_id"))
        gap = r.get("gap")
        if gap is not None and prev.get(key) not in (None, 0.0) and gap > 0:
            r["rate"] = math.log2(prev[key] / gap)
        elif "rate" not in r or r.get("rate") is None:
            r["rate"] = ""
        prev[key] = gap
    return rows


def write_reports(path_base, rows, clauses, extra=None):
    os.makedirs(os.path.dirname(path_base) or ".", exist_ok=True)
    with open(path_base + ".csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: r.get(k, "") for k in CSV_COLUMNS})
    payload = {"rows": rows, "clauses": [{"name": c.name, "passed": c.passed,
                                          "detail": c.detail} for c in clauses]}
    if extra:
        payload.update(extra)
    with open(path_base + ".json", "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=str)


# ---------------------------------------------------------------------------
# experiments


def run_verify_discrete(cfg):
    tol = _get(cfg, "tolerances", "residual", 1e-9)
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.25 0.125"))
    t2 = _get(cfg, "geometry", "t2", 0.5)
    t4 = _get(cfg, "geometry", "t4", 0.5)
    count = int(_get(cfg, "random", "count", 50, cast=int))
    seed = int(_get(cfg, "random", "seed", 2024, cast=int))
    halfsteps = int(_get(cfg, "random", "halfsteps", 4, cast=int))
    overrides = {k: float(v) for k, v in cfg.get("overrides", {}).items()}
    group = GroupSpec("U", 1)

    rows, clauses = [], []
    worst_fig8 = 0.0
    for eps in epsilons:
        geo = make_figure_eight(t2, t4, eps)
        backend = U1Backend(eps)
        for label, site in [("e", geo.annotation.e_first[0]),
                            ("e_", geo.annotation.e_second[0]),
                            ("e1", geo.annotation.e1[0]),
                            ("e3", geo.annotation.e3[0])]:
            spec = EquationSpec(group, eps, geo.subject, site, overrides)
            rep = evaluate_exact_u1(*assemble(spec), backend)
            worst_fig8 = max(worst_fig8, abs(rep.residual))
            rows.append({"experiment": "verify-discrete", "group": "U(1)",
                         "epsilon": eps, "term": f"figure-eight@{label}",
                         "residual": rep.residual, "residual_sigma": 0.0})
    clauses.append(Clause("figure-eight residual < %.0e" % tol,
                          worst_fig8 < tol, f"max |R| = {worst_fig8:.2e}"))

    rng = np.random.default_rng(seed)
    worst_rand = 0.0
    eps = epsilons[0]
    backend = U1Backend(eps)
    for i in range(count):
        loop = random_loop(rng, halfsteps, halfsteps)
        loc = int(rng.integers(len(loop.word)))
        spec = EquationSpec(group, eps, loop, (0, loc), overrides)
        rep = evaluate_exact_u1(*assemble(spec), backend)
        worst_rand = max(worst_rand, abs(rep.residual))
        rows.append({"experiment": "verify-discrete", "group": "U(1)",
                     "epsilon": eps, "term": f"random-{i}",
                     "residual": rep.residual, "residual_sigma": 0.0})
    clauses.append(Clause(f"{count} randomized loops residual < %.0e" % tol,
                          worst_rand < tol, f"max |R| = {worst_rand:.2e}"))
    return rows, clauses, {}


def run_converge_simple(cfg):
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.25 0.125 0.0625"))
    t = _get(cfg, "geometry", "t", 1.0)
    final_tol = _get(cfg, "tolerances", "final_gap", 1e-2)
    outer_tol = _get(cfg, "tolerances", "outer_cancel", 1e-12)
    groups = [parse_group(g) for g in
              cfg.get("groups", {}).get("list", "U1 U2").split()]
    rows, clauses = [], []
    for spec in groups:
        rep = convergence_simple(spec, t, epsilons)
        gaps = [r["gap"] for r in rep["rows"]]
        outs = [r["outer_cancel"] for r in rep["rows"]]
        for r in rep["rows"]:
            rows.append({"experiment": "converge-simple", "group": str(spec),
                         "epsilon": r["epsilon"], "value": r["D"],
                         "target": r["target"], "gap": r["gap"],
                         "term": "deformation-combination"})
        _rows_with_rates([r for r in rows if r["group"] == str(spec)])
        clauses.append(Clause(f"{spec}: gap strictly decreasing",
                              all(a > b for a, b in zip(gaps, gaps[1:])),
                              " -> ".join(f"{g:.2e}" for g in gaps)))
        clauses.append(Clause(f"{spec}: final gap < {final_tol:g}",
                              gaps[-1] < final_tol, f"{gaps[-1]:.2e}"))
        clauses.append(Clause(f"{spec}: exact outer cancellation",
                              max(outs) < outer_tol, f"max {max(outs):.2e}"))
    return rows, clauses, {}


def run_converge_crossing(cfg):
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.25 0.125 0.0625"))
    t2 = _get(cfg, "geometry", "t2", 0.5)
    t4 = _get(cfg, "geometry", "t4", 0.5)
    final_tol = _get(cfg, "tolerances", "final_gap", 1e-2)
    res_tol = _get(cfg, "tolerances", "residual", 1e-9)
    max_triples = _get(cfg, "triples", "max_triples", None,
                       cast=lambda v: int(v))
    combos = _combo_pairs(cfg)
    rep = convergence_crossing(epsilons, t2, t4, extra_combos=combos,
                               max_triples=max_triples)
    rows, clauses = [], []
    for r in rep["rows"]:
        for i, v in enumerate(r["triples"]):
            rows.append({"experiment": "converge-crossing", "group": "U(1)",
                         "epsilon": r["epsilon"], "triple_id": i,
                         "value": v, "target": r["target"],
                         "gap": abs(v - r["target"]), "term": "triple-combination"})
        for i, v in enumerate(r["combo_values"]):
            rows.append({"experiment": "converge-crossing", "group": "U(1)",
                         "epsilon": r["epsilon"], "triple_id": f"combo-{i}",
                         "value": v, "target": r["target"],
                         "gap": abs(v - r["target"]), "term": "ab-combination"})
    gaps = [r["gap"] for r in rep["rows"]]
    clauses.append(Clause("gap strictly decreasing",
                          all(a > b for a, b in zip(gaps, gaps[1:])),
                          " -> ".join(f"{g:.2e}" for g in gaps)))
    clauses.append(Clause(f"final gap < {final_tol:g}", gaps[-1] < final_tol,
                          f"{gaps[-1]:.2e}"))
    spread = max(r["triple_spread"] for r in rep["rows"])
    clauses.append(Clause("identical limit across compatible triples",
                          rep["rows"][-1]["triple_spread"] < final_tol,
                          f"max spread {spread:.2e}"))
    gap_combo = rep["rows"][-1]["gap_combos"]
    clauses.append(Clause("general (a,b) combinations share the limit",
                          gap_combo < final_tol, f"{gap_combo:.2e}"))
    exact = max(r["exactness"] for r in rep["rows"])
    clauses.append(Clause(f"combination equals splitting term < {res_tol:g}",
                          exact < res_tol, f"{exact:.2e}"))

    # correction-term sweeps on the doubly wound configuration
    im = crossing_im_sweep(epsilons, family="coil", t4=t4)
    for r in im["rows"]:
        rows.append({"experiment": "converge-crossing", "group": "U(1)",
                     "epsilon": r["epsilon"], "term": "im-limit-at-e",
                     "gap": r["gap_e"], "value": r["identity_loop1"]})
    id_tol = _get(cfg, "tolerances", "identity", 1e-6)
    worst_id = max(max(r["identity_loop1"], r["identity_g2"], r["identity_g3"])
                   for r in im["rows"])
    clauses.append(Clause(f"correction-term identities < {id_tol:g}",
                          worst_id < id_tol, f"max {worst_id:.2e}"))
    for key in ("gap_e", "gap_e1", "gap_e3"):
        seq = [r[key] for r in im["rows"]]
        clauses.append(Clause(f"deformation limit sweep {key} decreasing",
                              all(a > b for a, b in zip(seq, seq[1:])),
                              " -> ".join(f"{g:.2e}" for g in seq)))
    return rows, clauses, {}


def _combo_pairs(cfg):
    combos = []
    section = cfg.get("combos", {})
    for bkey, akey in (("b", "a"), ("b2", "a2")):
        if bkey in section and akey in section:
            b = tuple(_parse_signed(section[bkey]))
            a = tuple(_parse_signed(section[akey]))
            combos.append((b, a))
    if not combos:
        combos = [((0.7, 0.3), (0.2, 0.2, 0.1, 0.3, 0.2)),
                  ((1.5, -0.5), (0.4, 0.1, 0.2, 0.1, 0.2))]
    return tuple(combos)


def _parse_signed(text):
    return [float(v) for v in text.replace(",", " ").split()]


def run_converge_merger(cfg):
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.25 0.125 0.0625"))
    side = _get(cfg, "geometry", "side", 1.5)
    overlap = _get(cfg, "geometry", "overlap", 0.75)
    final_tol = _get(cfg, "tolerances", "final_gap", 1e-2)
    res_tol = _get(cfg, "tolerances", "residual", 1e-9)
    rep = convergence_merger(epsilons, side, overlap)
    rows, clauses = [], []
    for r in rep["rows"]:
        rows.append({"experiment": "converge-merger", "group": "U(1)",
                     "epsilon": r["epsilon"], "value": r["combination"],
                     "target": r["target"], "gap": r["gap"],
                     "term": "merger-combination"})
    _rows_with_rates(rows)
    gaps = [r["gap"] for r in rep["rows"]]
    clauses.append(Clause("gap strictly decreasing",
                          all(a > b for a, b in zip(gaps, gaps[1:])),
                          " -> ".join(f"{g:.2e}" for g in gaps)))
    clauses.append(Clause(f"final gap < {final_tol:g}", gaps[-1] < final_tol,
                          f"{gaps[-1]:.2e}"))
    worst = max(r["exactness"] for r in rep["rows"])
    clauses.append(Clause(f"combination equals merger term < {res_tol:g}",
                          worst < res_tol, f"{worst:.2e}"))
    gap_gen = rep["rows"][-1]["gap_general"]
    clauses.append(Clause("general combination shares the limit",
                          gap_gen < final_tol, f"{gap_gen:.2e}"))
    return rows, clauses, {}


def run_gauss_lemma(cfg):
    epsilons = _parse_floats(cfg.get("grid", {}).get(
        "epsilons", "0.4 0.28 0.2 0.14 0.1"))
    eps_j1 = _parse_floats(cfg.get("grid", {}).get("epsilons_j1", "0.4 0.2 0.1"))
    lo = _get(cfg, "tolerances", "slope_lo", 3.5)
    hi = _get(cfg, "tolerances", "slope_hi", 4.5)
    spec = GroupSpec("U", 2)
    rows, clauses = [], []

    tests = {
        "retrace": (lambda t1, t2: 2.0 - np.cos(t1) - np.cos(t2),
                    lambda q: float(np.trace(np.eye(2) - q).real)),
        "trace-square": (lambda t1, t2: 1.0 - np.abs(np.exp(1j*t1) + np.exp(1j*t2))**2 / 4.0,
                         lambda q: float(1.0 - abs(np.trace(q))**2 / 4.0)),
    }
    for name, (f_ang, f_mat) in tests.items():
        rep = gaussian_lemma_check(spec, f_ang, f_mat, epsilons)
        for r in rep["rows"]:
            rows.append({"experiment": "gauss-lemma", "group": "U(2)",
                         "epsilon": r["epsilon"], "term": name,
                         "value": r["integral"], "target": r["target"],
                         "gap": r["residual"]})
        clauses.append(Clause(
            f"{name}: residual slope in [{lo}, {hi}]",
            lo <= rep["slope"] <= hi, f"slope {rep['slope']:.3f}"))

    repj = lemma_j1_check(0.7, 1.3, 1.0, eps_j1)
    gaps = [r["gap"] for r in repj["rows"]]
    for r in repj["rows"]:
        rows.append({"experiment": "gauss-lemma", "group": "U(1)",
                     "epsilon": r["epsilon"], "term": "lemma-J1",
                     "gap": r["gap"]})
    clauses.append(Clause("lemma-J1 gap decreasing",
                          all(a > b for a, b in zip(gaps, gaps[1:])),
                          " -> ".join(f"{g:.2e}" for g in gaps)))
    return rows, clauses, {}


def run_degenerate(cfg):
    eps = _get(cfg, "grid", "epsilon", 0.25)
    tol = _get(cfg, "tolerances", "identity", 1e-8)
    out = degenerate_checks(eps)
    rows, clauses = [], []
    for kind, entry in out.items():
        rows.append({"experiment": "degenerate", "group": "U(1)", "epsilon": eps,
                     "term": kind, "gap": entry["identity_gap"],
                     "value": entry["E_W"]})
        clauses.append(Clause(f"{kind}: displayed identity < {tol:g}",
                              entry["identity_gap"] < tol,
                              f"{entry['identity_gap']:.2e}"))
        clauses.append(Clause(f"{kind}: reduces to the alternating form",
                              entry["reduces_to_alternating"] < tol,
                              f"{entry['reduces_to_alternating']:.2e}"))
        clauses.append(Clause(f"{kind}: face-splitting surgery invariance",
                              entry["surgery_gap"] < 1e-12,
                              f"{entry['surgery_gap']:.2e}"))
        if kind == "coil":
            clauses.append(Clause("coil: unbounded-wedge derivative is zero",
                                  entry["unbounded_derivative"] == 0.0,
                                  f"wedges {entry['unbounded_wedges']}"))
    return rows, clauses, {}


def run_converge_unified(cfg):
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.5"))
    t2 = _get(cfg, "geometry", "t2", 1.0)
    t4 = _get(cfg, "geometry", "t4", 1.0)
    n_sigma = _get(cfg, "tolerances", "n_sigma", 3.0)
    groups = [parse_group(g) for g in
              cfg.get("groups", {}).get("list", "SU2 SO3").split()]
    schedule = _schedule_from(cfg, MCSchedule(sweeps=3000, burn_in=400,
                                              thin=3, chains=12, seed=20260301))
    rows, clauses = [], []
    for spec in groups:
        for eps in epsilons:
            out = unified_equation_reports(spec, eps, schedule, t2=t2, t4=t4)
            for key, rep in out["reports"].items():
                z = rep.residual / max(rep.residual_sigma, 1e-300)
                rows.append({"experiment": "converge-unified", "group": str(spec),
                             "epsilon": eps, "term": key,
                             "residual": rep.residual,
                             "residual_sigma": rep.residual_sigma})
                clauses.append(Clause(
                    f"{spec} eps={eps:g} {key} residual within {n_sigma:g} sigma",
                    abs(z) <= n_sigma, f"z = {z:.2f}"))
            comb = out["combination"]
            zc = comb.mean / max(comb.sigma, 1e-300)
            clauses.append(Clause(
                f"{spec} eps={eps:g} combination residual within {n_sigma:g} sigma",
                abs(zc) <= n_sigma, f"z = {zc:.2f}"))
            gap = out["wlg_gap"]
            zg = gap.mean / max(gap.sigma, 1e-300)
            clauses.append(Clause(
                f"{spec} eps={eps:g} deformation combo vs limit RHS within {n_sigma:g} sigma",
                abs(zg) <= n_sigma, f"z = {zg:.2f}"))
            rows.append({"experiment": "converge-unified", "group": str(spec),
                         "epsilon": eps, "term": "combination",
                         "residual": comb.mean, "residual_sigma": comb.sigma})
            rows.append({"experiment": "converge-unified", "group": str(spec),
                         "epsilon": eps, "term": "wlg-gap",
                         "residual": gap.mean, "residual_sigma": gap.sigma})
            # coefficient audits
            tw_expected = -(2.0 - spec.beta_g) / (spec.beta_g * spec.n)
            clauses.append(Clause(
                f"{spec} twist coefficient audit",
                abs(out["coefficients"]["twist"] - tw_expected) < 1e-15,
                f"{out['coefficients']['twist']:+.6f}"))
            clauses.append(Clause(
                f"{spec} gamma-term audit",
                abs(out["coefficients"]["gamma_term"]
                    + spec.gamma_g / spec.n**2) < 1e-15,
                f"{out['coefficients']['gamma_term']:+.6f}"))
            if out["expansion_pair"] is not None:
                ep = out["expansion_pair"]
                rows.append({"experiment": "converge-unified", "group": str(spec),
                             "epsilon": eps, "term": "expansion-pair",
                             "residual": ep.mean, "residual_sigma": ep.sigma})
            if spec.family == "SU":
                fd = finite_difference_alternating(spec, eps, schedule,
                                                   t2=t2, t4=t4,
                                                   step_plaquettes=2)
                rhs = (out["estimates"]["split"].mean
                       - (2 - spec.beta_g) / (spec.beta_g * spec.n)
                       * out["estimates"]["twist"].mean
                       - spec.gamma_g / spec.n**2 * out["estimates"]["W"].mean)
                rows.append({"experiment": "converge-unified", "group": str(spec),
                             "epsilon": eps, "term": "fd-alternating-sum",
                             "value": fd["value"], "sigma": fd["sigma"],
                             "target": rhs, "gap": abs(fd["value"] - rhs)})
    return rows, clauses, {}


def run_sample_diagnostics(cfg):
    from scipy import stats
    epsilons = _parse_floats(cfg.get("grid", {}).get("epsilons", "0.5 1.0"))
    n_sigma = _get(cfg, "tolerances", "n_sigma", 3.0)
    t_rect = _get(cfg, "geometry", "t", 0.5)
    schedule = _schedule_from(cfg, MCSchedule(sweeps=5000, burn_in=400,
                                              thin=2, chains=16, seed=777))
    rows, clauses = [], []
    plaq = plaquette_loop((0, 0))

    # single-plaquette identity for the three sampled groups
    for fam in (GroupSpec("U", 1), GroupSpec("SU", 2), GroupSpec("SO", 3)):
        for eps in epsilons:
            params = ActionParams(fam, eps)
            a_std = char_coefficient(standard_label(fam), params)
            ests, samples, meta = estimate_wilson(params, [plaq], schedule, margin=1)
            est = ests[0]
            z = (est.mean - a_std) / max(est.sigma, 1e-300)
            rows.append({"experiment": "sample-diagnostics", "group": str(fam),
                         "epsilon": eps, "term": "plaquette",
                         "value": est.mean, "sigma": est.sigma,
                         "target": a_std, "gap": abs(est.mean - a_std)})
            clauses.append(Clause(
                f"{fam} eps={eps:g} <W_p> = a_std within {n_sigma:g} sigma",
                abs(z) <= n_sigma, f"z = {z:.2f}"))

    # master equation residual for an SU(2) rectangle
    eps = epsilons[0]
    su2 = GroupSpec("SU", 2)
    loop, _ = make_rectangle(t_rect, eps)
    site = (0, 0)
    espec = EquationSpec(su2, eps, loop, site)
    terms, meta = assemble(espec)
    rep = evaluate_mc(terms, meta, ActionParams(su2, eps), schedule)
    z = rep.residual / max(rep.residual_sigma, 1e-300)
    rows.append({"experiment": "sample-diagnostics", "group": "SU(2)",
                 "epsilon": eps, "term": "rectangle-equation",
                 "residual": rep.residual, "residual_sigma": rep.residual_sigma})
    clauses.append(Clause(
        f"SU(2) rectangle master equation within {n_sigma:g} sigma",
        abs(z) <= n_sigma, f"z = {z:.2f}"))

    # SO(3) figure-eight equation at the crossing bond
    so3 = GroupSpec("SO", 3)
    geo = make_figure_eight(1.0, 1.0, eps)
    espec = EquationSpec(so3, eps, geo.subject, geo.annotation.e_first[0])
    terms, meta = assemble(espec)
    rep = evaluate_mc(terms, meta, ActionParams(so3, eps), schedule)
    z = rep.residual / max(rep.residual_sigma, 1e-300)
    rows.append({"experiment": "sample-diagnostics", "group": "SO(3)",
                 "epsilon": eps, "term": "figure-eight-equation",
                 "residual": rep.residual, "residual_sigma": rep.residual_sigma})
    clauses.append(Clause(
        f"SO(3) figure-eight master equation within {n_sigma:g} sigma",
        abs(z) <= n_sigma, f"z = {z:.2f}"))

    clauses.extend(_gauge_bit_identity_clauses(eps))
    clauses.extend(_chain_statistics_clauses(eps, schedule))
    clauses.extend(_volume_doubling_clauses(eps, schedule, n_sigma))
    return rows, clauses, {}


def _gauge_bit_identity_clauses(eps):
    """Gauge transforms with exact (fourth-root-of-unity) diagonal gauges
    leave Wilson loops bit-identical; generic gauges leave them equal to
    1e-12."""
    clauses = []
    rng = np.random.default_rng(5)
    for fam in (GroupSpec("U", 1), GroupSpec("SU", 2)):
        params = ActionParams(fam, 0.7)
        box = LatticeBox(4, 4)
        cfg_ = init_config(box, params, "hot", rng, chains=2)
        loop = make_loop_from_moves((1, 1), "RRUULLDD")
        obs = WilsonObservable(loop, box, (0, 0))
        before = obs.measure(cfg_)
        roots = np.array([1.0, 1.0j, -1.0, -1.0j])
        if fam == GroupSpec("U", 1):
            # dyadic link angles and gauge make the angle arithmetic exact
            for arr in cfg_.links:
                arr[:] = rng.integers(-256, 256, arr.shape) / 128.0
            before = obs.measure(cfg_)
            g_exact = rng.integers(-8, 8, (5, 5)) / 4.0
        else:
            # center gauge g_v in {+I, -I}: sign flips stay bitwise exact
            # through fused-multiply-add matmul kernels, unlike +-i phases
            signs = roots[2 * rng.integers(0, 2, (5, 5))].real
            g_exact = np.zeros((5, 5, 2, 2), dtype=complex)
            g_exact[..., 0, 0] = signs
            g_exact[..., 1, 1] = signs
        after = obs.measure(gauge_transform(cfg_, g_exact))
        bit = np.array_equal(before.view(np.float64), after.view(np.float64))
        clauses.append(Clause(f"{fam} gauge bit-identity (exact diagonal gauge)",
                              bit, ""))
        # generic gauge: equality to 1e-12
        if fam == GroupSpec("U", 1):
            g_any = rng.uniform(-np.pi, np.pi, (5, 5))
        else:
            from loopfield.groups import haar_sample
            g_any = np.stack([haar_sample(fam, rng) for _ in range(25)]
                             ).reshape(5, 5, 2, 2)
        after2 = obs.measure(gauge_transform(cfg_, g_any))
        clauses.append(Clause(f"{fam} gauge invariance to 1e-12 (generic gauge)",
                              bool(np.max(np.abs(after2 - before)) < 1e-12),
                              f"max dev {np.max(np.abs(after2 - before)):.1e}"))
    return clauses


def _chain_statistics_clauses(eps, schedule):
    """Detailed balance and equilibrium distribution checks on one plaquette."""
    from scipy import stats
    clauses = []
    params = ActionParams(GroupSpec("U", 1), eps)
    box = LatticeBox(1, 1)
    rng = np.random.default_rng(schedule.seed + 1)
    cfg_ = init_config(box, params, "hot", rng, chains=4)
    n_steps = max(4000, schedule.sweeps)
    angles = np.empty((n_steps, cfg_.n_chains))
    for i in range(n_steps):
        sweep_metropolis(cfg_, rng, 0.8)
        angles[i] = np.mod(plaquette_product(cfg_)[:, 0, 0] + np.pi,
                           2 * np.pi) - np.pi
    flat = angles[200:].reshape(-1)

    # chi^2 of the marginal against the quadrature density
    nbins = 24
    edges = np.linspace(-np.pi, np.pi, nbins + 1)
    z = partition_function(params)
    centers = 0.5 * (edges[1:] + edges[:-1])
    from loopfield.action import unnormalized_weight
    dens = unnormalized_weight(params, (centers,)) / z
    probs = dens * (2 * np.pi / nbins)
    probs = probs / probs.sum()
    counts, _ = np.histogram(flat, bins=edges)
    expected = probs * counts.sum()
    mask = expected > 8
    chi2 = float(np.sum((counts[mask] - expected[mask]) ** 2 / expected[mask]))
    dof = int(mask.sum() - 1)
    p_chi = float(stats.chi2.sf(chi2, dof))
    clauses.append(Clause("plaquette histogram matches density (chi2 at 1%)",
                          p_chi > 0.01, f"p = {p_chi:.3f}"))

    # detailed-balance asymmetry on the binned transition counts
    nb = 10
    edges_b = np.linspace(-np.pi, np.pi, nb + 1)
    a_idx = np.digitize(angles[200:-1].reshape(-1), edges_b) - 1
    b_idx = np.digitize(angles[201:].reshape(-1), edges_b) - 1
    counts2 = np.zeros((nb, nb))
    np.add.at(counts2, (a_idx.clip(0, nb - 1), b_idx.clip(0, nb - 1)), 1.0)
    stat = 0.0
    dof2 = 0
    for i in range(nb):
        for j in range(i + 1, nb):
            tot = counts2[i, j] + counts2[j, i]
            if tot >= 16:
                stat += (counts2[i, j] - counts2[j, i]) ** 2 / tot
                dof2 += 1
    p_db = float(stats.chi2.sf(stat, max(dof2, 1)))
    clauses.append(Clause("detailed-balance transition asymmetry (chi2 at 1%)",
                          p_db > 0.01, f"p = {p_db:.3f}"))

    # Haar sampling: U(1) angles of haar_sample draws are uniform (KS at 1%)
    from loopfield.groups import haar_sample
    rng2 = np.random.default_rng(schedule.seed + 2)
    haar_angles = np.array([np.angle(haar_sample(GroupSpec("U", 1), rng2)[0, 0])
                            for _ in range(10_000)])
    p_ks = float(stats.kstest((haar_angles + np.pi) / (2 * np.pi),
                              "uniform").pvalue)
    clauses.append(Clause("U(1) Haar angle uniform (KS at 1%)",
                          p_ks > 0.01, f"p = {p_ks:.3f}"))
    return clauses


def _volume_doubling_clauses(eps, schedule, n_sigma):
    """Finite-volume proxy: a fixed small loop on margins m and 2m agrees."""
    clauses = []
    params = ActionParams(GroupSpec("SU", 2), eps)
    loop, _ = make_rectangle(0.25, eps)
    vals = []
    for margin in (3, 6):
        ests, _, _ = estimate_wilson(params, [loop],
                                     MCSchedule(sweeps=schedule.sweeps,
                                                burn_in=schedule.burn_in,
                                                thin=schedule.thin,
                                                chains=schedule.chains,
                                                seed=schedule.seed + margin),
                                     margin=margin)
        vals.append(ests[0])
    diff = abs(vals[0].mean - vals[1].mean)
    sig = math.hypot(vals[0].sigma, vals[1].sigma)
    clauses.append(Clause(
        f"box-size doubling agreement within {n_sigma:g} sigma",
        diff <= n_sigma * sig, f"diff {diff:.4f} vs sigma {sig:.4f}"))
    return clauses


EXPERIMENTS = {
    "verify-discrete": run_verify_discrete,
    "converge-simple": run_converge_simple,
    "converge-crossing": run_converge_crossing,
    "converge-merger": run_converge_merger,
    "converge-unified": run_converge_unified,
    "gauss-lemma": run_gauss_lemma,
    "degenerate": run_degenerate,
    "sample-diagnostics": run_sample_diagnostics,
}


def run_experiment(config_path: str, out_dir: str | None = None) -> int:
    try:
        name, cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    out_base = cfg.get("output", {}).get("path")
    if out_base is None:
        stem = os.path.splitext(os.path.basename(config_path))[0]
        out_base = os.path.join(out_dir or "reports", stem)
    elif out_dir is not None:
        out_base = os.path.join(out_dir, out_base)
    t0 = time.time()
    try:
        rows, clauses, extra = EXPERIMENTS[name](cfg)
    except (QuadratureError, TailBudgetError) as exc:
        print(f"numerical certification failure: {exc}")
        return EXIT_NUMERICAL
    extra = dict(extra)
    extra["runtime_seconds"] = time.time() - t0
    write_reports(out_base, _rows_with_rates(rows), clauses, extra)
    for c in clauses:
        print(c.line())
    n_fail = sum(not c.passed for c in clauses)
    print(f"{name}: {len(clauses) - n_fail}/{len(clauses)} clauses passed "
          f"in {extra['runtime_seconds']:.1f}s -> {out_base}.csv")
    return EXIT_OK if n_fail == 0 else EXIT_FAIL


# ---------------------------------------------------------------------------
# fixtures


def emit_fixtures(kind: str, out_dir: str = "fixtures") -> list:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if kind in ("loop-ops", "all"):
        path = os.path.join(out_dir, "loop_ops.txt")
        with open(path, "w") as fh:
            fh.write("# loop operation golden pairs: op | input(s) | output(s)\n")
            for line in _loop_op_fixture_lines():
                fh.write(line + "\n")
        written.append(path)
    if kind in ("graphs", "all"):
        geo = make_figure_eight(0.5, 0.5, 0.25)
        path = os.path.join(out_dir, "figure_eight_graph.json")
        with open(path, "w") as fh:
            fh.write(geo.graph().dump() + "\n")
        written.append(path)
    if kind in ("char-tables", "all"):
        params = ActionParams(GroupSpec("U", 1), 0.5)
        table = build_char_table(params, max_casimir=64.0)
        path = os.path.join(out_dir, "char_table_u1_eps0.5.txt")
        table.save_text(path)
        written.append(path)
    if not written:
        raise ConfigError(f"unknown fixture kind {kind!r}")
    return written


def _loop_op_fixture_lines():
    lines = []
    # positive splitting of the canonical figure-eight at the crossing bond
    geo = make_figure_eight(0.5, 0.5, 0.5)
    loop = geo.subject
    comp, loc = geo.annotation.e_first[0]
    e = loop.word[loc]
    y = [i for i, b in enumerate(loop.word) if b == e and i != loc][0]
    pair = split_positive(loop, e, loc, y)
    lines.append("split-pos | %s @ (%d,%d) | %s ; %s" % (
        loop_to_text(loop), loc, y, loop_to_text(pair.loops[0]),
        loop_to_text(pair.loops[1])))
    # mergers of two plaquettes along a shared bond
    p1 = plaquette_loop((0, 0))
    p2 = plaquette_loop((0, 0))
    e = p1.word[0]
    merged = merge_positive(p1, p2, e, 0, 0)
    lines.append("merge-pos | %s + %s @ bond %s | %s" % (
        loop_to_text(p1), loop_to_text(p2), e, loop_to_text(merged)))
    # negative twisting of the figure-eight at the crossing bond
    tw = twist_negative(loop, loop.word[loc], loc, y)
    lines.append("twist-neg | %s @ (%d,%d) | %s" % (
        loop_to_text(loop), loc, y, loop_to_text(tw)))
    return lines


def selftest(out_dir: str = "reports") -> int:
    """Exact-backend subset: verify-discrete + degenerate at coarse settings."""
    import tempfile
    worst = EXIT_OK
    with tempfile.TemporaryDirectory() as tmp:
        for name, body in (
            ("verify", "[experiment]\nname = verify-discrete\n"
                       "[grid]\nepsilons = 0.25\n[random]\ncount = 10\n"),
            ("degenerate", "[experiment]\nname = degenerate\n"),
        ):
            path = os.path.join(tmp, name + ".cfg")
            with open(path, "w") as fh:
                fh.write(body)
            code = run_experiment(path, out_dir=out_dir)
            worst = max(worst, code)
    return worst
