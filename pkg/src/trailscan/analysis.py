"""Closed-form and Monte Carlo checks on the likelihood ratio and the risks it controls.

Under the null, ``Var_0(L_m) = E exp(alpha(theta)^2 N) - 1`` where ``N`` is
the crossing count (origin included) of two independent prior paths.  The
Bayes risk is then at least ``1 - sqrt(Var_0(L_m)) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .detectors import make_detector
from .engine import PathSource, seed_derive, simulate
from .families import Family
from .graph import LayeredDag, enumerate_paths, step_offsets
from .priors import (PriorSpec, crossings_from_offsets, lattice_crossing_pmf,
                     sample_crossings, tree_crossing_pmf)

EXP_CAP = 700.0


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    se: float
    capped: bool = False  # some exp(alpha^2 N) exceeded exp(700); value is then a lower bound


def _mgf_minus_one(alpha_theta: float, counts: np.ndarray) -> VarianceEstimate:
    t = alpha_theta**2 * np.asarray(counts, dtype=np.float64)
    if t.max() > EXP_CAP:
        kept = np.minimum(t, EXP_CAP)
        return VarianceEstimate(math.exp(logsumexp(kept) - math.log(len(t))) - 1.0, math.inf, True)
    terms = np.expm1(t)
    se = float(np.std(terms, ddof=1) / math.sqrt(len(terms))) if len(terms) > 1 else 0.0
    return VarianceEstimate(float(np.mean(terms)), se)


def var_lm_from_crossings(prior: PriorSpec, g: LayeredDag, alpha_theta: float, n: int,
                          rng: np.random.Generator) -> VarianceEstimate:
    """Monte Carlo ``E exp(alpha^2 N) - 1`` over ``n`` independent prior path pairs."""
    if n < 1000:
        raise ValueError("n must be >= 10^3")
    if alpha_theta == 0:
        return VarianceEstimate(0.0, 0.0)
    return _mgf_minus_one(alpha_theta, sample_crossings(prior, g, n, rng))


def var_lm_enumerated(g: LayeredDag, alpha_theta: float) -> float:
    """Exact ``E exp(alpha^2 N) - 1`` under the uniform prior, by listing all path pairs."""
    offs = step_offsets(g, enumerate_paths(g, limit=2**12))
    n = len(offs)
    t = alpha_theta**2
    acc = []
    for k in range(n):
        c = crossings_from_offsets(g, offs[k], offs)
        acc.append(np.exp(t * c).sum())
    return math.fsum(acc) / (n * n) - 1.0


def lattice_var_lm(alpha_theta: float, m: int) -> float:
    """``E exp(alpha^2 N) - 1`` for uniform lattice paths of ``m`` vertices via the return law."""
    if m == 1:
        return math.expm1(alpha_theta**2)
    law = lattice_crossing_pmf(m - 1).as_array()
    k = np.arange(len(law))
    return float(np.sum(law * np.exp(alpha_theta**2 * (k + 1)))) - 1.0


def tree_var_lm(mu: float, m: int) -> float:
    """``(2 tau - 1)(1 - tau^m)/(1 - tau)`` with ``tau = exp(mu^2)/2``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    tau = math.exp(mu * mu) / 2.0
    if abs(1.0 - tau) < 1e-12:
        return float(m) * (2 * tau - 1)
    return (2 * tau - 1) * (1 - tau**m) / (1 - tau)


def tree_var_lm_from_pmf(mu: float, m: int) -> float:
    law = tree_crossing_pmf(m)
    return math.fsum(math.exp(mu * mu * k) * p for k, p in law.pmf.items()) - 1.0


def bayes_risk_lb(variance: float) -> float:
    """Lower bound ``max(0, 1 - sqrt(variance)/2)`` on the Bayes risk."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    return max(0.0, 1.0 - math.sqrt(variance) / 2.0)


@dataclass(frozen=True)
class RiskEstimate:
    risk: float
    se: float
    type1: float
    type2: float
    lower_bound: Optional[float] = None
    bound_ok: Optional[bool] = None


def bayes_risk_mc(graph: LayeredDag, family: Family, theta: float, prior: PriorSpec | None = None,
                  n: int = 1000, master_seed: int = 0, variance: Optional[float] = None,
                  threads: Optional[int] = None) -> RiskEstimate:
    """Risk of the Bayes test ``L_m >= 1``: ``P_0(L >= 1) + P_prior(L < 1)``.

    When ``variance`` (of ``L_m`` under the null) is given, ``bound_ok``
    reports whether the estimate respects the variance lower bound within
    three standard errors.
    """
    if n < 1000:
        raise ValueError("n must be >= 10^3")
    stat = make_detector("bayes", graph, family, theta)
    null = simulate(stat, graph, family, n, seed_derive(master_seed, 0), threads=threads)
    alt = simulate(stat, graph, family, n, seed_derive(master_seed, 1), theta=theta,
                   source=PathSource(prior=prior or PriorSpec()), threads=threads)
    t1 = float(np.mean(null >= 0.0))
    t2 = float(np.mean(alt < 0.0))
    se = math.sqrt(t1 * (1 - t1) / n + t2 * (1 - t2) / n)
    risk = t1 + t2
    if variance is None:
        return RiskEstimate(risk, se, t1, t2)
    lb = bayes_risk_lb(variance)
    return RiskEstimate(risk, se, t1, t2, lb, risk >= lb - 3 * se)


def tree_glrt_type1_bound(m: int) -> float:
    """Union bound on ``P_0(M_m >= m sqrt(2 log 2))`` for the binary tree."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 1.0 / (4.0 * math.sqrt(math.pi * m * math.log(2.0)))


def nondetectability_criterion(chi2: float, eta: float) -> bool:
    """True when ``chi2 < 1/eta - 1``: no asymptotically powerful test exists."""
    if chi2 < 0:
        raise ValueError("chi2 must be >= 0")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    return chi2 < 1.0 / eta - 1.0
