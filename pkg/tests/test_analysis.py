import itertools
import math

import mpmath as mp
import numpy as np
import pytest

from trailscan.analysis import (bayes_risk_lb, bayes_risk_mc, lattice_var_lm, nondetectability_criterion,
                                tree_glrt_type1_bound, tree_var_lm, tree_var_lm_from_pmf, var_lm_enumerated,
                                var_lm_from_crossings)
from trailscan.detectors import BayesParams, bayes_lr_dp
from trailscan.families import BERNOULLI, GAUSSIAN, alpha, chi_square
from trailscan.graph import LATTICE2D, TREE, NodeField, build_graph
from trailscan.priors import PriorSpec


@pytest.mark.parametrize("kind,m", [(LATTICE2D, 3), (LATTICE2D, 4), (TREE, 3), (TREE, 4)])
@pytest.mark.parametrize("theta", [0.4, 1.3])
def test_variance_identity_exact(kind, m, theta):
    # E_0 L^2 - 1 over every binary field equals the crossing-count expression
    g = build_graph(kind, m)
    x = np.array(list(itertools.product((0.0, 1.0), repeat=g.n_nodes)))
    L = np.exp(bayes_lr_dp(NodeField(g, x), BayesParams(BERNOULLI, theta)))
    direct = float(np.mean(L * L)) - 1.0
    assert direct == pytest.approx(var_lm_enumerated(g, alpha(BERNOULLI, theta)), rel=1e-10)


@pytest.mark.parametrize("m", [1, 2, 5, 9, 12])
def test_lattice_and_tree_laws_match_enumeration(m):
    for a in (0.3, 0.8):
        assert var_lm_enumerated(build_graph(LATTICE2D, m), a) == pytest.approx(lattice_var_lm(a, m), rel=1e-12)
        assert var_lm_enumerated(build_graph(TREE, m), a) == pytest.approx(tree_var_lm(a, m), rel=1e-12)


def test_tree_var_values():
    mp.mp.dps = 30
    tau = mp.e**mp.mpf("0.25") / 2
    oracle = (2 * tau - 1) * (1 - tau**10) / (1 - tau)
    assert tree_var_lm(0.5, 10) == pytest.approx(float(oracle), abs=1e-12)
    assert tree_var_lm(0.5, 10) == pytest.approx(tree_var_lm_from_pmf(0.5, 10), abs=1e-12)
    assert tree_var_lm(0.0, 7) == 0.0
    mu1 = math.sqrt(math.log(2))  # tau = 1
    assert tree_var_lm(mu1, 9) == pytest.approx(9.0)
    assert tree_var_lm(mu1 + 1e-9, 9) == pytest.approx(9.0, rel=1e-6)
    with pytest.raises(ValueError):
        tree_var_lm(0.5, 0)


def test_tree_variance_diverges_above_threshold():
    # bounded in m when tau < 1, growing geometrically when tau > 1
    assert tree_var_lm(0.5, 200) == pytest.approx(tree_var_lm(0.5, 400), rel=1e-12)
    assert tree_var_lm(1.0, 60) > 1e6


def test_var_from_crossings_mc():
    g = build_graph(TREE, 8)
    est = var_lm_from_crossings(PriorSpec(), g, 0.5, 200_000, np.random.default_rng(1))
    assert abs(est.value - tree_var_lm(0.5, 8)) < 4 * est.se
    assert not est.capped
    assert var_lm_from_crossings(PriorSpec(), g, 0.0, 1000, np.random.default_rng(1)).value == 0.0
    with pytest.raises(ValueError):
        var_lm_from_crossings(PriorSpec(), g, 0.5, 10, np.random.default_rng(1))


def test_var_from_crossings_capped():
    g = build_graph(TREE, 20)
    est = var_lm_from_crossings(PriorSpec(), g, 8.0, 1000, np.random.default_rng(2))
    assert est.capped and est.se == math.inf and est.value > 1e100


def test_risk_lower_bound():
    assert bayes_risk_lb(0.0) == 1.0
    assert bayes_risk_lb(1.0) == 0.5
    assert bayes_risk_lb(9.0) == 0.0
    with pytest.raises(ValueError):
        bayes_risk_lb(-1.0)


def test_bayes_risk_respects_bound():
    m, theta = 33, 0.35
    g = build_graph(LATTICE2D, m)
    var = lattice_var_lm(alpha(GAUSSIAN, theta), m)
    r = bayes_risk_mc(g, GAUSSIAN, theta, n=2000, master_seed=3, variance=var)
    assert r.bound_ok
    assert r.risk == pytest.approx(r.type1 + r.type2)
    assert 0 < r.se < 0.05
    strong = bayes_risk_mc(g, GAUSSIAN, 3.0, n=1000, master_seed=3)
    assert strong.risk < 0.05 and strong.lower_bound is None


def test_tree_glrt_bound():
    assert tree_glrt_type1_bound(16) == pytest.approx(0.04235, abs=5e-6)
    with pytest.raises(ValueError):
        tree_glrt_type1_bound(0)


def test_nondetectability_criterion():
    assert nondetectability_criterion(chi_square(GAUSSIAN, 0.5), 0.5)
    assert not nondetectability_criterion(chi_square(GAUSSIAN, 1.0), 0.5)
    assert not nondetectability_criterion(1.0, 0.5)  # boundary is excluded
    with pytest.raises(ValueError):
        nondetectability_criterion(0.1, 1.0)
    with pytest.raises(ValueError):
        nondetectability_criterion(-0.1, 0.5)
