"""Self-check suite behind ``trailscan verify``.

``fast`` runs the enumeration and closed-form checks (well under a minute);
``full`` adds the Monte Carlo checks, which take several minutes.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import analysis, detectors, engine, families, priors
from .graph import LATTICE2D, LATTICE_HD, TREE, NodeField, build_graph, enumerate_paths, step_offsets

WAS_TABLE = {1025: 1.20, 2049: 1.15, 4097: 1.10, 8193: 1.06, 16385: 1.03, 32769: 0.99}


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0


# -- fast checks -------------------------------------------------------------


def check_was_normalizer():
    """lambda_m = 1/H_m exactly, the weights give null variance lambda_m, and the mu95 table."""
    bad = []
    for m in (1, 2, 7, 1025):
        exact = 1 / float(sum(Fraction(1, i) for i in range(1, m + 1)))
        lam = detectors.was_lambda(m)
        if abs(lam - exact) > 1e-12 * exact:
            bad.append(f"lambda_{m}={lam!r} vs {exact!r}")
    detectors.was_weights.cache_clear()
    w = detectors.was_weights(1025)
    if abs(float(np.sum(w * w)) - detectors.was_null_law(1025)[1]) > 1e-12:
        bad.append("sum of squared weights differs from the null variance")
    for m, ref in WAS_TABLE.items():
        v = detectors.was_mu95(m)
        if abs(v - ref) > 0.01:
            bad.append(f"mu95({m})={v:.4f} vs {ref}")
    return not bad, "; ".join(bad) or "lambda_m, weights and mu95 table agree"


def _random_fields(g, rng, n=20):
    return NodeField(g, rng.standard_normal((n, g.n_nodes)))


def check_dp_vs_bruteforce():
    rng = np.random.default_rng(7)
    worst = 0.0
    cases = [(LATTICE2D, m, 1) for m in range(2, 11)] + [(TREE, m, 1) for m in range(2, 11)]
    cases += [(LATTICE_HD, m, 2) for m in range(2, 6)]
    for kind, m, d in cases:
        g = build_graph(kind, m, d if kind == LATTICE_HD else None)
        f = _random_fields(g, rng)
        p = detectors.BayesParams(families.GAUSSIAN, 0.7)
        for a, b in ((detectors.bayes_lr_dp(f, p, "log"), detectors.bayes_lr_bruteforce(f, p)),
                     (detectors.bayes_lr_dp(f, p, "scaled"), detectors.bayes_lr_bruteforce(f, p)),
                     (detectors.glrt_max_dp(f), detectors.glrt_max_bruteforce(f))):
            rel = np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))
            worst = max(worst, float(rel))
    return worst <= 1e-9, f"max relative error {worst:.2e} over {len(cases)} graphs"


def _pair_counts(g):
    offs = step_offsets(g, enumerate_paths(g))
    counts = np.zeros(g.m + 1, dtype=np.int64)
    for a in offs:
        c = priors.crossings_from_offsets(g, a, offs)
        counts += np.bincount(c, minlength=g.m + 1)
    return counts / float(len(offs)) ** 2


def check_crossing_laws():
    worst = 0.0
    for n in range(1, 11):
        emp = _pair_counts(build_graph(LATTICE2D, n + 1))[1:]  # shift: returns exclude the origin
        law = priors.lattice_crossing_pmf(n).as_array(n)
        worst = max(worst, float(np.max(np.abs(emp[:n + 1] - law))))
    for m in range(1, 10):
        emp = _pair_counts(build_graph(TREE, m))
        law = priors.tree_crossing_pmf(m).as_array(m)
        worst = max(worst, float(np.max(np.abs(emp - law))))
    return worst <= 1e-12, f"max pmf error {worst:.1e} against path enumeration"


def check_bound_domination():
    for n in (10, 50, 200):
        law = priors.lattice_crossing_pmf(n)
        for k in range(1, n + 1):
            if priors.lattice_crossing_upper(k, n, 0.4) < law[k]:
                return False, f"bound below the pmf at n={n}, k={k}"
    return True, "upper bound dominates for n in {10, 50, 200}"


def check_martingale_exact():
    """E_0 L_m = 1 by summing over every binary field of small graphs."""
    worst = 0.0
    fam = families.BERNOULLI
    for kind, m in ((LATTICE2D, 4), (TREE, 4)):
        g = build_graph(kind, m)
        x = np.array(list(itertools.product((0.0, 1.0), repeat=g.n_nodes)))
        for theta in (0.3, 1.5):
            logl = detectors.bayes_lr_dp(NodeField(g, x), detectors.BayesParams(fam, theta))
            worst = max(worst, abs(float(np.mean(np.exp(logl))) - 1.0))
    return worst <= 1e-9, f"max |E_0 L - 1| = {worst:.1e}"


def check_variance_identities():
    errs = [abs(analysis.tree_var_lm(0.5, 10) - analysis.tree_var_lm_from_pmf(0.5, 10))]
    ok_val = abs(analysis.tree_var_lm(0.5, 10) - 0.7839563) < 1e-6
    for m in (3, 6, 9):
        g = build_graph(LATTICE2D, m)
        errs.append(abs(analysis.var_lm_enumerated(g, 0.6) - analysis.lattice_var_lm(0.6, m)))
        g = build_graph(TREE, m)
        errs.append(abs(analysis.var_lm_enumerated(g, 0.6) - analysis.tree_var_lm(0.6, m)))
    worst = max(errs)
    return worst <= 1e-12 and ok_val, f"max identity error {worst:.1e}; tree_var_lm(0.5,10)={analysis.tree_var_lm(0.5, 10):.5f}"


def check_theta_star():
    g = families.theta_star(families.GAUSSIAN).value
    e = families.theta_star(families.EXPONENTIAL)
    shift = families.mean_shift(families.EXPONENTIAL, e.value)
    b = families.theta_star(families.BERNOULLI)
    ok = (abs(g - math.sqrt(2 * math.log(2))) < 1e-6 and abs(e.value - 0.6268) < 0.005
          and abs(shift - 1.68) < 0.02 and b.unbounded)
    return ok, f"gaussian {g:.6f}, exponential {e.value:.4f} (shift {shift:.3f}), bernoulli {b}"


def check_tree_bound():
    v = analysis.tree_glrt_type1_bound(16)
    return abs(v - 0.04235) < 5e-6, f"bound(16) = {v:.5f}"


FAST = (
    ("was normalizer and mu95 table", check_was_normalizer),
    ("bayes/glrt dp equal brute force", check_dp_vs_bruteforce),
    ("crossing laws equal enumeration", check_crossing_laws),
    ("crossing upper bound dominates", check_bound_domination),
    ("likelihood ratio has null mean one (exact)", check_martingale_exact),
    ("variance identities", check_variance_identities),
    ("theta* per family", check_theta_star),
    ("tree glrt size bound value", check_tree_bound),
)


# -- Monte Carlo checks ------------------------------------------------------


def check_martingale_mc():
    g = build_graph(LATTICE2D, 200)
    stat = detectors.make_detector("bayes", g, families.GAUSSIAN, 0.2)
    vals = np.exp(engine.simulate(stat, g, families.GAUSSIAN, 10_000, 2024))
    mean, se = float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return abs(mean - 1) <= 5 * se, f"mean L = {mean:.4f} +/- {se:.4f}"


def check_tree_variance_mc():
    g = build_graph(TREE, 10)
    est = analysis.var_lm_from_crossings(priors.PriorSpec(), g, 0.5, 1_000_000, np.random.default_rng(3))
    exact = analysis.tree_var_lm(0.5, 10)
    return abs(est.value - exact) <= 3 * est.se, f"{est.value:.5f} +/- {est.se:.5f} vs {exact:.5f}"


def check_tree_glrt_size():
    g = build_graph(TREE, 16)
    vals = engine.simulate(detectors.make_detector("glrt", g), g, families.GAUSSIAN, 10_000, 99)
    p = float(np.mean(vals >= 16 * math.sqrt(2 * math.log(2))))
    se = engine.binomial_se(max(p, 1e-4), len(vals))
    bound = analysis.tree_glrt_type1_bound(16)
    return p <= bound + 3 * se, f"P0 = {p:.4f} vs bound {bound:.5f} (+3 SE {3 * se:.4f})"


def check_profile():
    m, k = 4096, 1024
    spec = priors.PriorSpec(priors.HM, priors.hm_sequence(m))
    est = priors.pred_profile_estimate(spec, 0, k, 50, 10_000, np.random.default_rng(5))
    bound = priors.pred_profile_bound(k, spec.a_seq).value
    return est.value <= bound + 3 * est.se, f"profile {est.value:.4f} +/- {est.se:.4f} vs bound {bound:.5f}"


def check_tail_fit():
    C, eta = priors.intersection_tail_fit(priors.PriorSpec(), build_graph(TREE, 20), 100_000,
                                          np.random.default_rng(11))
    return 0.48 <= eta <= 0.52 and 1.8 <= C <= 2.2, f"C = {C:.3f}, eta = {eta:.4f}"


def check_root_calibration():
    g = build_graph(LATTICE2D, 1)
    cal = engine.calibrate("root", g, families.GAUSSIAN, 0.05, 10_000, 17)
    return abs(cal.threshold - 1.645) < 0.05, f"threshold {cal.threshold:.4f}"


def check_fast_strip():
    est = engine.fast_strip_power(1025, 64, 0.84, 0.05, 5000, 1)
    return 0.93 <= est.power <= 0.97, f"power {est.power:.4f}"


FULL = FAST + (
    ("null mean of the likelihood ratio (MC)", check_martingale_mc),
    ("tree variance by crossing MC", check_tree_variance_mc),
    ("tree glrt size", check_tree_glrt_size),
    ("hm predictability profile at m=4096", check_profile),
    ("tree intersection tail fit", check_tail_fit),
    ("root calibration at the normal quantile", check_root_calibration),
    ("fast strip power at m=1025", check_fast_strip),
)


def run_checks(level: str = "fast", report: Callable[[CheckResult], None] | None = None) -> list:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    out = []
    for name, fn in (FAST if level == "fast" else FULL):
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:  # a crashing check is a failed check
            ok, detail = False, f"{type(e).__name__}: {e}"
        res = CheckResult(name, bool(ok), detail, time.perf_counter() - t0)
        out.append(res)
        if report:
            report(res)
    return out
