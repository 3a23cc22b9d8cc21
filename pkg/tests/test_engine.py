import math

import numpy as np
import pytest

from trailscan.detectors import make_detector, normal_quantile, strip_size, was_lambda, was_mu95
from trailscan.engine import (binomial_se, bisect_power, calibrate, estimate_power, fast_strip_power,
                              increasing_path, mu95_search, path_source, power_curve, resolve_threads, seed_derive,
                              simulate, strip_visits, threshold_from_null, trial_rng, was_analytic_power)
from trailscan.errors import SearchError
from trailscan.families import EXPONENTIAL, GAUSSIAN
from trailscan.graph import LATTICE2D, TREE, LayeredDag, build_graph, path_indices


def test_seed_derive_reference_values():
    # SplitMix64 outputs for state 0 (first two draws of the reference generator)
    assert seed_derive(0, 0) == 0xE220A8397B1DCDAF
    assert seed_derive(0, 1) == 0x6E789E6AA1B965F4


def test_seed_derive_no_collisions():
    seeds = {seed_derive(12345, t) for t in range(10**6)}
    assert len(seeds) == 10**6


def test_trial_rng_independent_of_order():
    a = trial_rng(7, 3).standard_normal(5)
    trial_rng(7, 2).standard_normal(5)
    assert np.array_equal(a, trial_rng(7, 3).standard_normal(5))


def test_thread_count_does_not_change_results():
    g = build_graph(LATTICE2D, 40)
    stat = lambda x: np.asarray(x).sum(axis=-1)
    one = simulate(stat, g, GAUSSIAN, 700, 5, theta=0.5, threads=1)
    many = simulate(stat, g, GAUSSIAN, 700, 5, theta=0.5, threads=8)
    assert np.array_equal(one, many)
    a = estimate_power("glrt", 40.0, g, GAUSSIAN, 0.5, n=500, master_seed=3, threads=1)
    b = estimate_power("glrt", 40.0, g, GAUSSIAN, 0.5, n=500, master_seed=3, threads=8)
    assert a.exceedances == b.exceedances


def test_threads_env(monkeypatch):
    monkeypatch.setenv("TRAILSCAN_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("TRAILSCAN_THREADS")
    assert resolve_threads() >= 1


def test_threshold_rank_and_strict_exceedance():
    v = np.arange(1.0, 101.0)
    cal = threshold_from_null(v, 0.05)
    assert cal.threshold == 95.0 and cal.alpha_hat == 0.05
    med = threshold_from_null(np.arange(1.0, 1001.0), 0.5)
    assert med.threshold == 500.0
    ties = threshold_from_null(np.zeros(200), 0.05)
    assert ties.alpha_hat == 0.0


def test_root_calibration():
    cal = calibrate("root", build_graph(LATTICE2D, 1), GAUSSIAN, 0.05, 10_000, 17)
    assert abs(cal.threshold - 1.645) < 0.05
    assert abs(cal.alpha_hat - 0.05) < 1e-3


def test_calibration_median():
    cal = calibrate("root", build_graph(LATTICE2D, 3), GAUSSIAN, 0.5, 10_000, 2)
    assert abs(cal.threshold) < 3 * 1.2533 / math.sqrt(10_000)


def test_was_calibration_matches_normal_quantile():
    m = 129
    g = build_graph(LATTICE2D, m)
    cal = calibrate("was", g, GAUSSIAN, 0.05, 10_000, 4)
    z = normal_quantile(0.95) * math.sqrt(was_lambda(m))
    # quantile SE: sqrt(a(1-a)/n) / density
    se = math.sqrt(0.05 * 0.95 / 10_000) / (math.exp(-1.645**2 / 2) / math.sqrt(2 * math.pi)) * math.sqrt(was_lambda(m))
    assert abs(cal.threshold - z) < 4 * se


def test_calibration_argument_checks():
    g = build_graph(LATTICE2D, 3)
    with pytest.raises(ValueError):
        calibrate("root", g, GAUSSIAN, 0.05, 50)
    with pytest.raises(ValueError):
        calibrate("root", g, GAUSSIAN, 1.0, 1000)
    with pytest.raises(ValueError):
        estimate_power("root", 0.0, g, GAUSSIAN, 0.3, n=10)


def test_power_at_zero_signal_is_size():
    g = build_graph(LATTICE2D, 30)
    cal = calibrate("glrt", g, GAUSSIAN, 0.1, 5000, 1)
    est = estimate_power("glrt", cal.threshold, g, GAUSSIAN, 0.0, n=5000, master_seed=2)
    assert abs(est.power - cal.alpha_hat) < 4 * math.sqrt(2 * 0.1 * 0.9 / 5000)


def test_power_with_strong_signal():
    g = build_graph(LATTICE2D, 30)
    cal = calibrate("glrt", g, GAUSSIAN, 0.05, 1000, 1)
    assert estimate_power("glrt", cal.threshold, g, GAUSSIAN, 10.0, n=200, master_seed=2).power == 1.0


def test_power_estimate_fields():
    est = estimate_power("root", 0.0, build_graph(LATTICE2D, 2), GAUSSIAN, 0.0, n=400, master_seed=9)
    p, se = est
    assert se == pytest.approx(binomial_se(p, 400))
    assert est.exceedances == round(p * 400)


def test_was_monte_carlo_matches_analytic():
    m = 129
    g = build_graph(LATTICE2D, m)
    cal = calibrate("was", g, GAUSSIAN, 0.05, 10_000, 1)
    mu = 0.8  # on the rising part of the curve
    est = estimate_power("was", cal.threshold, g, GAUSSIAN, mu, n=4000, master_seed=6)
    exact = was_analytic_power(m, mu)
    assert abs(est.power - exact) < 4 * est.se + 0.01


def test_was_analytic_mu95_table():
    for m, ref in ((1025, 1.20), (2049, 1.15), (4097, 1.10), (8193, 1.06), (16385, 1.03), (32769, 0.99)):
        assert abs(was_analytic_power(m, was_mu95(m)) - 0.95) < 1e-9
        r = mu95_search("was_analytic", LayeredDag(LATTICE2D, m))
        assert abs(r.mu - ref) < 0.01


def test_fast_strip_null_is_alpha():
    est = fast_strip_power(1025, 64, 0.0, 0.05, 2000, 3)
    assert abs(est.power - 0.05) < 1e-9
    with pytest.raises(ValueError):
        fast_strip_power(65, 8, 0.3, family=EXPONENTIAL)


def test_strip_visits_bounds():
    R = strip_visits(200, 10, 3000, 1)
    assert R.min() >= 11 and R.max() <= 200
    assert np.all(strip_visits(50, 49, 10, 0) == 50)


def test_fast_strip_agrees_with_full_fields():
    m, B, mu = 129, 16, 0.5
    g = build_graph(LATTICE2D, m)
    thr = normal_quantile(0.95) * math.sqrt(strip_size(m, B))
    full = estimate_power(make_detector("strip", g, B=B), thr, g, GAUSSIAN, mu, n=4000, master_seed=8)
    fast = fast_strip_power(m, B, mu, 0.05, 20_000, 2)
    assert abs(full.power - fast.power) < 3 * math.hypot(full.se, fast.se)


def test_path_sources():
    g = build_graph(LATTICE2D, 6)
    inc = increasing_path(g)
    src = path_source(g, path="increasing")
    assert np.array_equal(src.indices(g, np.random.default_rng(0)), path_indices(g, inc))
    t = build_graph(TREE, 4)
    assert list(increasing_path(t).steps) == [1, 1, 1]
    rnd = path_source(g)
    a = rnd.indices(g, np.random.default_rng(1))
    assert len(a) == 6 and a[0] == 0


def test_planted_values_follow_theta():
    g = build_graph(LATTICE2D, 20)
    src = path_source(g, path="increasing")
    idx = path_indices(g, increasing_path(g))
    x = simulate(lambda f: np.asarray(f)[:, idx].mean(axis=1), g, GAUSSIAN, 2000, 3, theta=0.8, source=src)
    assert abs(x.mean() - 0.8) < 4 / math.sqrt(2000 * 20)


def test_power_curve_is_monotone_and_seeded():
    g = build_graph(LATTICE2D, 65)
    mus = [0.0, 0.4, 0.8, 1.2, 1.6]
    c = power_curve("was", g, GAUSSIAN, mus, n_calib=2000, n_power=1000, master_seed=4)
    p = [pt.power for pt in c.points]
    assert all(b >= a - 0.03 for a, b in zip(p, p[1:]))
    assert p[-1] > 0.95
    c2 = power_curve("was", g, GAUSSIAN, mus, n_calib=2000, n_power=1000, master_seed=4, threads=1)
    assert [pt.power for pt in c2.points] == p


def test_power_curve_shortcuts():
    g = LayeredDag(LATTICE2D, 1025)
    c = power_curve("was_analytic", g, GAUSSIAN, [0.0, 1.2])
    assert c.points[0].power == pytest.approx(0.05)
    assert c.points[1].power == pytest.approx(0.95, abs=0.01)
    s = power_curve("strip_fast", g, GAUSSIAN, [0.0, 0.84], n_power=3000, B=64)
    assert s.points[0].power == pytest.approx(0.05, abs=1e-9)
    assert 0.90 < s.points[1].power < 0.99


def test_bisect_finds_crossing():
    f = lambda mu, n, k: 1 - math.exp(-mu)  # crosses 0.95 at log 20
    r = bisect_power(f, 0.95, 0.0, 1.0, 0.001)
    assert abs(r.mu - math.log(20)) < 0.001
    assert r.lo <= math.log(20) <= r.hi and r.hi - r.lo <= 0.001


def test_bisect_uses_double_trials_at_the_end():
    seen = []
    bisect_power(lambda mu, n, k: (seen.append(n), min(mu, 1.0))[1], 0.95, 0.0, 2.0, 0.01, n=100)
    assert seen[-2:] == [200, 200] and seen[2] == 100


def test_bisect_errors():
    with pytest.raises(SearchError, match="20 doublings"):
        bisect_power(lambda mu, n, k: 0.0)
    with pytest.raises(SearchError):
        bisect_power(lambda mu, n, k: 1.0)


def test_mu95_monte_carlo_small():
    g = build_graph(LATTICE2D, 17)
    r = mu95_search("was", g, n=1000, tol=0.05, master_seed=1)
    assert abs(r.mu - was_mu95(17)) < 0.12
