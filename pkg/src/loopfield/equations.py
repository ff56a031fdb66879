"""Master loop equations: term assembly, evaluation, convergence sweeps.

An equation at a fixed bond site is assembled into a residual form

    R = (1/2 eps^2) (sum D- - sum D+)            deformations
        - c0 * W                                 c0 = 1 - (2-b)/(bN) - k g/N^2
        - sum S+ + sum S-                        splittings
        + tw * (sum T- + sum T+)                 tw = (2-b)/(bN)
        - (g/2 eps^2) (sum E+ - sum E-)          expansions
        - (1/N^2) sum M+ + (1/N^2) sum M-        mergers (strings)

which vanishes identically on the lattice.  Here b, g are the group
constants (b = 1 for SO, else 2; g = 1 for SU else 0) and k counts 1 plus
the other occurrences of the bond or its inverse.  For U(N) this reduces
to the plain single-location equation (tw = 0, g = 0, c0 = 1).

Backends: exact per-face products for U(1); shared-randomness Monte Carlo
for the other groups (all terms estimated on one sample stream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from loopfield.groups import GroupSpec, casimir_standard
from loopfield.action import (ActionParams, char_coefficient, standard_label,
                              integrate_class_function, unnormalized_weight,
                              partition_function)
from loopfield.loops import (Loop, LoopString, as_string, bond_inverse,
                             string_deformation_sets, string_split, string_merge,
                             string_twist, expansion_sets, compatible_triples)
from loopfield.driver import (U1Backend, area_derivative,
                              correction_term_im, continuum_product,
                              CrossingGeometry, make_figure_eight, make_coil,
                              make_limacon, make_crossing_squares)
from loopfield.sampler import (MCSchedule, run_chain, make_estimate, Estimate)


class EquationError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    tag: str
    coefficient: float
    subject: object  # Loop or LoopString


@dataclass
class EquationSpec:
    group: GroupSpec
    epsilon: float
    subject: object
    site: tuple  # (component, location)
    overrides: dict = field(default_factory=dict)

    @property
    def coefficients(self):
        beta, gamma, n = self.group.beta_g, self.group.gamma_g, self.group.n
        return {
            "deformation": 1.0 / (2.0 * self.epsilon**2),
            "twist": (2.0 - beta) / (beta * n),
            "expansion": gamma / (2.0 * self.epsilon**2),
            "merger": 1.0 / n**2,
            "gamma_unit": gamma / n**2,
        }


@dataclass
class EquationReport:
    terms: list
    values: list          # per-term Estimate (exact backend: sigma = 0)
    residual: float
    residual_sigma: float
    metadata: dict

    def as_rows(self):
        rows = []
        for t, v in zip(self.terms, self.values):
            rows.append({"tag": t.tag, "coefficient": t.coefficient,
                         "value": v.mean, "sigma": v.sigma})
        return rows


def assemble(spec: EquationSpec):
    """Term list of the master loop equation at the fixed bond site."""
    s = as_string(spec.subject)
    comp, loc = spec.site
    loop = s.loops[comp]
    if loop.is_trivial or not (0 <= loc < len(loop.word)):
        raise EquationError("site outside the subject")
    e = loop.word[loc]
    einv = bond_inverse(e)
    c = spec.coefficients
    ov = dict(spec.overrides)

    def coef(tag, base):
        return base * ov.get(tag, 1.0)

    terms = []
    d_minus, d_plus = string_deformation_sets(s, comp, e, loc)
    for s2, _ in d_minus:
        terms.append(Term("deform-minus", coef("deform-minus", c["deformation"]), s2))
    for s2, _ in d_plus:
        terms.append(Term("deform-plus", coef("deform-plus", -c["deformation"]), s2))

    k_coincidence = 1
    # same-component co-occurrences: splittings and twistings
    for y, b in enumerate(loop.word):
        if y == loc:
            continue
        if b == e:
            k_coincidence += 1
            terms.append(Term("split-pos", coef("split-pos", -1.0),
                              string_split(s, comp, e, loc, y, positive=True)))
            if c["twist"] != 0.0:
                terms.append(Term("twist-neg", coef("twist-neg", c["twist"]),
                                  string_twist(s, comp, e, loc, y, positive=False)))
        elif b == einv:
            k_coincidence += 1
            terms.append(Term("split-neg", coef("split-neg", 1.0),
                              string_split(s, comp, e, loc, y, positive=False)))
            if c["twist"] != 0.0:
                terms.append(Term("twist-pos", coef("twist-pos", c["twist"]),
                                  string_twist(s, comp, e, loc, y, positive=True)))
    # cross-component occurrences: mergers
    for comp2, other in enumerate(s.loops):
        if comp2 == comp or other.is_trivial:
            continue
        for y, b in enumerate(other.word):
            if b == e:
                k_coincidence += 1
                terms.append(Term("merge-pos", coef("merge-pos", -c["merger"]),
                                  string_merge(s, comp, comp2, e, loc, y, positive=True)))
            elif b == einv:
                k_coincidence += 1
                terms.append(Term("merge-neg", coef("merge-neg", c["merger"]),
                                  string_merge(s, comp, comp2, e, loc, y, positive=False)))
    # expansions (SU only)
    if c["expansion"] != 0.0:
        e_plus, e_minus = expansion_sets(loop, e, loc)
        for p in e_plus:
            terms.append(Term("expand-pos", coef("expand-pos", -c["expansion"]),
                              _splice_expansion(s, comp, p)))
        for p in e_minus:
            terms.append(Term("expand-neg", coef("expand-neg", c["expansion"]),
                              _splice_expansion(s, comp, p)))

    beta, gamma, n = spec.group.beta_g, spec.group.gamma_g, spec.group.n
    const = 1.0 - (2.0 - beta) / (beta * n) - k_coincidence * gamma / n**2
    terms.append(Term("base", coef("base", -const), s))
    meta = {"bond": e, "site": spec.site, "k_coincidence": k_coincidence,
            "const": const}
    return terms, meta


def _splice_expansion(s: LoopString, comp: int, pair: LoopString) -> LoopString:
    """Expansion replaces component comp by the pair (l, plaquette)."""
    return s.replace(comp, pair)


# ---------------------------------------------------------------------------
# evaluation backends


def evaluate_exact_u1(terms, meta, backend: U1Backend) -> EquationReport:
    values = []
    residual = 0.0
    for t in terms:
        v = backend.expectation(t.subject)
        values.append(Estimate(v, 0.0, 0.0, 0, 0.0))
        residual += t.coefficient * v
    return EquationReport(list(terms), values, residual, 0.0,
                          {"backend": "exact-u1", **meta,
                           "epsilon": backend.epsilon})


def evaluate_mc(terms, meta, params: ActionParams, schedule: MCSchedule,
                margin: int = 4) -> EquationReport:
    """Shared-randomness Monte-Carlo evaluation of a term list."""
    subjects = []
    index = {}
    for t in terms:
        key = _subject_key(t.subject)
        if key not in index:
            index[key] = len(subjects)
            subjects.append(t.subject)
    samples, run_meta = run_chain(params, subjects, schedule, margin=margin)
    values = []
    resid_series = np.zeros(samples.shape[0::2], dtype=float)  # (n_meas, n_chains)
    for t in terms:
        w = samples[:, index[_subject_key(t.subject)], :]
        values.append(make_estimate(w))
        resid_series = resid_series + t.coefficient * w.real
    resid = make_estimate(resid_series)
    return EquationReport(list(terms), values, resid.mean, resid.sigma,
                          {"backend": "mc", **meta, "epsilon": params.epsilon,
                           "schedule": schedule, **run_meta})


def _subject_key(subject):
    s = as_string(subject)
    return tuple(sorted(l.word for l in s.loops))


# ---------------------------------------------------------------------------
# deformation combinations at crossing sites


def deformation_value(subject, site, backend: U1Backend) -> float:
    """(1/2 eps^2)(sum E W over D- minus over D+) at the site, exact U(1)."""
    s = as_string(subject)
    comp, loc = site
    e = s.loops[comp].word[loc]
    d_minus, d_plus = string_deformation_sets(s, comp, e, loc)
    tot = 0.0
    for s2, _ in d_minus:
        tot += backend.expectation(s2)
    for s2, _ in d_plus:
        tot -= backend.expectation(s2)
    return tot / (2.0 * backend.epsilon**2)


def alternating_area_derivative(geometry: CrossingGeometry, graph=None,
                                faces=None, wedges=None) -> float:
    """(d1 - d2 + d3 - d4) E W from the geometry's own continuum data."""
    g = graph if graph is not None else geometry.graph()
    faces = faces if faces is not None else geometry.lattice_faces(g)
    wedges = wedges if wedges is not None else geometry.wedge_face_indices(g)
    total = 0.0
    for m, sign in ((1, 1.0), (2, -1.0), (3, 1.0), (4, -1.0)):
        if wedges[m] is not None:
            total += sign * area_derivative(faces, wedges[m], "analytic")
    return total


def crossing_deformation_data(geometry: CrossingGeometry, backend: U1Backend):
    """D values at the canonical six sites plus exact equation residuals."""
    ann = geometry.annotation
    sites = {"e": ann.e_first[0], "e_": ann.e_second[0],
             "e1": ann.e1[0], "e2": ann.e2[0], "e3": ann.e3[0], "e4": ann.e4[0]}
    dvals = {k: deformation_value(geometry.subject, site, backend)
             for k, site in sites.items()}
    return sites, dvals


def combination_value(geometry: CrossingGeometry, backend: U1Backend,
                      b=(1.0, 0.0), a=(0.0, 0.5, 0.0, 0.5, 0.0),
                      dvals=None) -> float:
    """b1 D_e + b2 D_e_ - a0 E W - sum_i a_i D_{e_i}; the master combination.

    With the defaults this is the plain combination D_e - (D_e1 + D_e3)/2.
    Requires sum(b) = 1 and sum(a) = 1.
    """
    if abs(sum(b) - 1.0) > 1e-12 or abs(sum(a) - 1.0) > 1e-12:
        raise EquationError("combination coefficients must each sum to 1")
    if dvals is None:
        _, dvals = crossing_deformation_data(geometry, backend)
    ew = backend.expectation(geometry.subject)
    return (b[0] * dvals["e"] + b[1] * dvals["e_"] - a[0] * ew
            - a[1] * dvals["e1"] - a[2] * dvals["e2"]
            - a[3] * dvals["e3"] - a[4] * dvals["e4"])


def triple_combination_value(geometry: CrossingGeometry, backend: U1Backend,
                             triple) -> float:
    """D at the triple's crossing bond minus half the two side-bond D's."""
    de = deformation_value(geometry.subject, triple.site_e, backend)
    da = deformation_value(geometry.subject, triple.site_a, backend)
    db = deformation_value(geometry.subject, triple.site_b, backend)
    return de - 0.5 * da - 0.5 * db


# ---------------------------------------------------------------------------
# sweeps


def trace_power_integral(spec: GroupSpec, params: ActionParams, power: int,
                         tol: float = 1e-11) -> float:
    """(1/N) int Tr(Q^power) S^eps(Q) dQ by torus quadrature."""

    def tr_power(*angles):
        if spec == GroupSpec("U", 1):
            return np.exp(1j * power * angles[0])
        if spec == GroupSpec("SU", 2):
            return 2.0 * np.cos(power * angles[0])
        if spec == GroupSpec("SO", 3):
            return 1.0 + 2.0 * np.cos(power * angles[0])
        if spec == GroupSpec("U", 2):
            return np.exp(1j * power * angles[0]) + np.exp(1j * power * angles[1])
        raise NotImplementedError

    z = partition_function(params, tol=tol)
    val = integrate_class_function(
        spec, lambda *a: tr_power(*a) * unnormalized_weight(params, a), tol=tol) / z
    return float(np.real(val)) / spec.n


def convergence_simple(spec: GroupSpec, t: float, eps_list, tol: float = 1e-11):
    """Deformation combination of a simple loop against -2 dE/dt.

    All four deformed expectations reduce to single-variable quadratures:
    inner- = a^{T-1}, outer- = a^{T+1}, inner+ = a^{T-1} q2,
    outer+ = a^T q1 with q_m = (1/N) int Tr(Q^m) S^eps dQ.
    """
    c_std = casimir_standard(spec)
    target = -c_std * math.exp(0.5 * c_std * t)
    rows = []
    for eps in eps_list:
        params = ActionParams(spec, eps)
        bigt = int(round(t / eps**2))
        a = char_coefficient(standard_label(spec), params, tol=tol)
        q1 = trace_power_integral(spec, params, 1, tol=tol)
        q2 = trace_power_integral(spec, params, 2, tol=tol)
        e_in_minus = a ** (bigt - 1)
        e_out_minus = a ** (bigt + 1)
        e_in_plus = a ** (bigt - 1) * q2
        e_out_plus = a ** bigt * q1
        d_val = (e_in_minus + e_out_minus - e_in_plus - e_out_plus) / (2 * eps**2)
        rows.append({
            "epsilon": eps, "T": bigt, "a_std": a,
            "D": d_val, "target": target, "gap": abs(d_val - target),
            "outer_cancel": abs(e_out_minus - e_out_plus),
            "E_discrete": a**bigt,
        })
    return {"group": str(spec), "t": t, "target": target, "rows": rows}


def convergence_crossing(eps_list, t2: float = 0.5, t4: float = 0.5,
                         family: str = "figure-eight",
                         extra_combos=((( .7, .3), (0.2, 0.2, 0.1, 0.3, 0.2)),),
                         max_triples: int | None = None,
                         family_kwargs=None):
    """The crossing-convergence sweep: per-triple combinations and the
    general (a, b) combinations, against the alternating area derivative."""
    rows = []
    for eps in eps_list:
        kwargs = dict(family_kwargs or {})
        if family == "figure-eight":
            geometry = make_figure_eight(t2, t4, eps)
        elif family == "coil":
            geometry = make_coil(t4, eps, **kwargs)
        elif family == "limacon":
            geometry = make_limacon(t4, t2, eps, **kwargs)
        else:
            raise EquationError(f"unsupported family {family!r}")
        backend = U1Backend(eps)
        graph = geometry.graph()
        faces = geometry.lattice_faces(graph)
        wedges = geometry.wedge_face_indices(graph)
        target = alternating_area_derivative(geometry, graph, faces, wedges)
        ew = backend.expectation(geometry.subject)
        sites, dvals = crossing_deformation_data(geometry, backend)

        triples = compatible_triples(geometry.annotation)
        if max_triples is not None:
            triples = triples[:max_triples]
        dcache = {}

        def dval(site):
            if site not in dcache:
                dcache[site] = deformation_value(geometry.subject, site, backend)
            return dcache[site]

        triple_values = []
        for tr in triples:
            val = dval(tr.site_e) - 0.5 * dval(tr.site_a) - 0.5 * dval(tr.site_b)
            triple_values.append(val)
        combos = []
        for bcoef, acoef in extra_combos:
            combos.append(combination_value(geometry, backend, bcoef, acoef, dvals))
        # exactness: the triple combination equals the splitting term value
        split_val = _splitting_value(geometry, backend)
        rows.append({
            "epsilon": eps,
            "target": target,
            "E_W": ew,
            "triples": triple_values,
            "combo_values": combos,
            "gap": max(abs(v - target) for v in triple_values),
            "gap_combos": max((abs(v - target) for v in combos), default=0.0),
            "triple_spread": max(triple_values) - min(triple_values),
            "exactness": max(abs(v - split_val) for v in triple_values),
        })
    return {"family": family, "rows": rows}


def _splitting_value(geometry: CrossingGeometry, backend: U1Backend) -> float:
    """E W of the positive splitting at the crossing (the two sub-loops)."""
    comp, loc = geometry.annotation.e_first[0]
    s = as_string(geometry.subject)
    loop = s.loops[comp]
    e = loop.word[loc]
    others = [ (c2, y) for c2, l2 in enumerate(s.loops) for y, b in enumerate(l2.word)
               if b == e and (c2, y) != (comp, loc) ]
    if not others:
        raise EquationError("no second crossing-bond occurrence found")
    c2, y = others[0]
    if c2 == comp:
        split = string_split(s, comp, e, loc, y, positive=True)
        return backend.expectation(split)
    # cross-component occurrence: the merger term (coefficient 1/N^2 = 1 here)
    merged = string_merge(s, comp, c2, e, loc, y, positive=True)
    return backend.expectation(merged)


def crossing_im_sweep(eps_list, family: str = "coil", t4: float = 0.5,
                      t2: float = 0.5, family_kwargs=None):
    """Per-equation deformation limits with correction terms (I_m validators).

    Checks, per epsilon, the three deformation sums against their limits
      D_e   -> 2 (d1-d2+d3-d4) E W + I1 + I3
      D_e1  -> 2 (d1-d4) E W + 2 I1
      D_e3  -> 2 (d3-d2) E W + 2 I3
    and the continuum identities these limits satisfy.
    """
    rows = []
    for eps in eps_list:
        kwargs = dict(family_kwargs or {})
        if family == "coil":
            geometry = make_coil(t4, eps, **kwargs)
        elif family == "figure-eight":
            geometry = make_figure_eight(t2, t4, eps)
        elif family == "limacon":
            geometry = make_limacon(t4, t2, eps, **kwargs)
        else:
            raise EquationError(f"unsupported family {family!r}")
        backend = U1Backend(eps)
        graph = geometry.graph()
        faces = geometry.lattice_faces(graph)
        wedges = geometry.wedge_face_indices(graph)
        ew = continuum_product(faces)
        ims = {m: correction_term_im(faces, m, wedges[m]) for m in (1, 2, 3, 4)}
        d_m = {m: (area_derivative(faces, wedges[m], "analytic")
                   if wedges[m] is not None else 0.0) for m in (1, 2, 3, 4)}
        alt = d_m[1] - d_m[2] + d_m[3] - d_m[4]
        limit_e = 2.0 * alt + ims[1] + ims[3]
        limit_e1 = 2.0 * (d_m[1] - d_m[4]) + 2.0 * ims[1]
        limit_e3 = 2.0 * (d_m[3] - d_m[2]) + 2.0 * ims[3]
        sites, dvals = crossing_deformation_data(geometry, backend)
        split_cont = ew  # E W_{l1} W_{l2} = E W_l for U(1)
        rows.append({
            "epsilon": eps,
            "gap_e": abs(dvals["e"] - limit_e),
            "gap_e1": abs(dvals["e1"] - limit_e1),
            "gap_e3": abs(dvals["e3"] - limit_e3),
            "identity_loop1": abs(limit_e - split_cont - ew),
            "identity_g2": abs(limit_e1 - ew),
            "identity_g3": abs(limit_e3 - ew),
            "I": ims,
        })
    return {"family": family, "rows": rows}


def convergence_merger(eps_list, side: float = 1.5, overlap: float = 0.75):
    """Merger-theorem sweep on two crossing squares (exact U(1), N = 1).

    The defaults keep the realized geometry fixed across the sweep; smaller
    squares would clamp against the crossing-edge margins at eps = 1/4.
    """
    rows = []
    for eps in eps_list:
        geometry = make_crossing_squares(side, overlap, eps)
        backend = U1Backend(eps)
        graph = geometry.graph()
        faces = geometry.lattice_faces(graph)
        wedges = geometry.wedge_face_indices(graph)
        target = alternating_area_derivative(geometry, graph, faces, wedges)
        sites, dvals = crossing_deformation_data(geometry, backend)
        comb = dvals["e"] - 0.5 * dvals["e1"] - 0.5 * dvals["e3"]
        comb2 = combination_value(geometry, backend,
                                  b=(0.4, 0.6), a=(0.1, 0.25, 0.2, 0.25, 0.2),
                                  dvals=dvals)
        merger_val = _splitting_value(geometry, backend)
        rows.append({
            "epsilon": eps,
            "target": target,
            "combination": comb,
            "combination_general": comb2,
            "gap": abs(comb - target),
            "gap_general": abs(comb2 - target),
            "merger_term": merger_val,
            "exactness": abs(comb - merger_val),
        })
    return {"rows": rows}


def degenerate_checks(epsilon: float = 0.25, tol_quad: float = 1e-11):
    """The two degenerate-crossing identities in the exact abelian backend.

    three-face (limacon):    (2 d_s - d_2 - d_4) E W = E W_{l1} W_{l2}
    unbounded-face (coil):   (2 d_s - d_bounded) E W = E W_{l1} W_{l2},
                             with the unbounded wedge derivative = 0.
    Both reduce to the alternating-sum identity with d_1 = d_3 = d_s.
    """
    out = {}
    for kind in ("limacon", "coil"):
        if kind == "limacon":
            geometry = make_limacon(0.5, 0.5, epsilon)
        else:
            geometry = make_coil(0.5, epsilon)
        graph = geometry.graph()
        faces = geometry.lattice_faces(graph)
        wedges = geometry.wedge_face_indices(graph)
        ew = continuum_product(faces)
        split_cont = ew  # U(1): W factorizes over the two sub-loops
        assert wedges[1] is not None and wedges[1] == wedges[3], \
            "north/south wedges must share the s-face"
        d_s = area_derivative(faces, wedges[1], "analytic")
        d2 = (area_derivative(faces, wedges[2], "analytic")
              if wedges[2] is not None else 0.0)
        d4 = (area_derivative(faces, wedges[4], "analytic")
              if wedges[4] is not None else 0.0)
        lhs = 2.0 * d_s - d2 - d4
        alt = alternating_area_derivative(geometry, graph, faces, wedges)
        # p_s = p_{t1} * p_{t3}: splitting the s-face leaves the product fixed
        t_s, n_s = faces[wedges[1]]
        split_faces = list(faces)
        split_faces[wedges[1]] = (0.3 * t_s, n_s)
        split_faces.append((0.7 * t_s, n_s))
        surgery_gap = abs(continuum_product(split_faces) - ew)
        entry = {
            "identity_gap": abs(lhs - split_cont),
            "reduces_to_alternating": abs(lhs - alt),
            "surgery_gap": surgery_gap,
            "E_W": ew,
        }
        if kind == "coil":
            unbounded = [m for m in (2, 4) if wedges[m] is None]
            entry["unbounded_derivative"] = 0.0 if unbounded else float("nan")
            entry["unbounded_wedges"] = unbounded
        out[kind] = entry
    return out


# ---------------------------------------------------------------------------
# unified-group Monte Carlo verification


def unified_equation_reports(spec: GroupSpec, epsilon: float,
                             schedule: MCSchedule, t2: float = 0.5,
                             t4: float = 0.5, margin: int = 4):
    """The three unified equations at the crossing, plus their combination,
    all evaluated on one shared Monte-Carlo stream.

    Returns a dict with the per-equation reports, the combination residual,
    and the comparison of the deformation combination against the continuum
    right-hand side (splitting - twist - gamma terms).
    """
    geometry = make_figure_eight(t2, t4, epsilon)
    ann = geometry.annotation
    params = ActionParams(spec, epsilon)
    site_e, site_1, site_3 = ann.e_first[0], ann.e1[0], ann.e3[0]

    eq_specs = {
        "at_e": EquationSpec(spec, epsilon, geometry.subject, site_e),
        "at_e1": EquationSpec(spec, epsilon, geometry.subject, site_1),
        "at_e3": EquationSpec(spec, epsilon, geometry.subject, site_3),
    }
    assembled = {k: assemble(v) for k, v in eq_specs.items()}

    # the combination EE30 - EE31/2 - EE32/2 as a single weighted term list
    combo_terms = []
    for key, weight in (("at_e", 1.0), ("at_e1", -0.5), ("at_e3", -0.5)):
        for t in assembled[key][0]:
            combo_terms.append(Term(f"{key}:{t.tag}", weight * t.coefficient,
                                    t.subject))

    # extra observables for the continuum comparison
    s = as_string(geometry.subject)
    comp, loc = site_e
    e = s.loops[comp].word[loc]
    other = [(c2, y) for c2, l2 in enumerate(s.loops)
             for y, b in enumerate(l2.word) if b == e and (c2, y) != (comp, loc)]
    c2, y = other[0]
    split = string_split(s, comp, e, loc, y, positive=True)
    twist = string_twist(s, comp, e, loc, y, positive=False)

    subjects = []
    index = {}

    def register(subject):
        key = _subject_key(subject)
        if key not in index:
            index[key] = len(subjects)
            subjects.append(subject)
        return index[key]

    for t in combo_terms:
        register(t.subject)
    i_w = register(s)
    i_split = register(split)
    i_twist = register(twist)

    samples, run_meta = run_chain(params, subjects, schedule, margin=margin)

    def series(subject):
        return samples[:, index[_subject_key(subject)], :].real

    reports = {}
    for key, weight in (("at_e", 1.0), ("at_e1", 1.0), ("at_e3", 1.0)):
        terms, meta = assembled[key]
        resid_series = np.zeros(samples.shape[0::2])
        values = []
        for t in terms:
            w = series(t.subject)
            values.append(make_estimate(w))
            resid_series = resid_series + t.coefficient * w
        est = make_estimate(resid_series)
        reports[key] = EquationReport(terms, values, est.mean, est.sigma,
                                      {"backend": "mc", **meta,
                                       "epsilon": epsilon})

    combo_series = np.zeros(samples.shape[0::2])
    for t in combo_terms:
        combo_series = combo_series + t.coefficient * series(t.subject)
    combo = make_estimate(combo_series)

    # deformation-combination vs the continuum RHS of the limit equation
    tw = (2.0 - spec.beta_g) / (spec.beta_g * spec.n)
    gam = spec.gamma_g / spec.n**2
    dcomb_series = np.zeros(samples.shape[0::2])
    for t in combo_terms:
        if "deform" in t.tag:
            dcomb_series = dcomb_series + t.coefficient * series(t.subject)
    rhs_series = (series(split) - tw * series(twist) - gam * series(s))
    gap_series = dcomb_series - rhs_series
    gap = make_estimate(gap_series)

    # expansion pair contributions (SU only), reported
    exp_series = np.zeros(samples.shape[0::2])
    has_exp = False
    for t in combo_terms:
        if "expand" in t.tag:
            has_exp = True
            exp_series = exp_series + t.coefficient * series(t.subject)
    expansion = make_estimate(exp_series) if has_exp else None

    return {
        "geometry": geometry,
        "reports": reports,
        "combination": combo,
        "wlg_gap": gap,
        "expansion_pair": expansion,
        "estimates": {"W": make_estimate(series(s)),
                      "split": make_estimate(series(split)),
                      "twist": make_estimate(series(twist))},
        "coefficients": {"twist": -tw, "gamma_term": -gam},
        "run_meta": run_meta,
    }


def finite_difference_alternating(spec: GroupSpec, epsilon: float,
                                  schedule: MCSchedule, t2: float = 0.5,
                                  t4: float = 0.5, step_plaquettes: int = 1):
    """(d1-d2+d3-d4) E W by central differences of Monte-Carlo estimates.

    Rebuilds the figure-eight with each bounded lobe area shifted by
    +/- step_plaquettes * eps^2, matched seeds across geometries.
    """
    h = step_plaquettes * epsilon**2
    out = {}
    variance = 0.0
    for label, (d2s, d4s) in {"t2+": (h, 0), "t2-": (-h, 0),
                              "t4+": (0, h), "t4-": (0, -h)}.items():
        geometry = make_figure_eight(t2 + d2s, t4 + d4s, epsilon)
        params = ActionParams(spec, epsilon)
        samples, _ = run_chain(params, [geometry.subject], schedule)
        est = make_estimate(samples[:, 0, :])
        out[label] = est
        variance += (est.sigma / (2 * h)) ** 2
    # wedge signs: F2 (west, +1) and F4 (east, -1) are faces 2 and 4
    d2 = (out["t2+"].mean - out["t2-"].mean) / (2 * h)
    d4 = (out["t4+"].mean - out["t4-"].mean) / (2 * h)
    value = -d2 - d4  # d1 = d3 = 0 (unbounded wedges)
    return {"value": value, "sigma": math.sqrt(variance), "estimates": out}
