"""Reproducible Monte Carlo: calibration, power estimation, power curves and mu_0.95 search.

Trial ``t`` of an experiment draws everything (null field, prior path,
planted values, in that order) from its own generator seeded by
``seed_derive(master_seed, t)``.  Results are therefore identical for any
thread count or chunking.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .detectors import (default_strip_width, make_detector, normal_quantile, strip_size,
                        strip_visit_count, was_lambda)
from .errors import SearchError
from .families import GAUSSIAN, Family
from .graph import (LATTICE2D, LATTICE_HD, TREE, LayeredDag, PathSteps, VertexSequence,
                    offsets_to_index, step_offsets, validate_steps)
from .priors import PriorSpec, sample_prior_offsets

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
FIELD_BUDGET = 2**23  # doubles held per batch of fields

ANALYTIC_DETECTORS = ("was_analytic", "strip_fast")


def seed_derive(master_seed: int, trial_index: int) -> int:
    """SplitMix64 finaliser applied to ``master + (index + 1) * golden_gamma``.

    For a fixed master seed the map is a bijection of the trial index modulo
    2**64, so distinct trials never share a seed.
    """
    z = (int(master_seed) + (int(trial_index) + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_derive(master_seed, trial_index)))


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get("TRAILSCAN_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


# -- where the anomalous path comes from -------------------------------------


@dataclass(frozen=True)
class PathSource:
    """Either a prior to sample a fresh path from each trial, or one fixed path."""
    prior: Optional[PriorSpec] = None
    fixed: object = None  # PathSteps or VertexSequence

    def indices(self, g: LayeredDag, rng: np.random.Generator) -> np.ndarray:
        if self.fixed is not None:
            return _fixed_indices(g, self.fixed)
        return offsets_to_index(g, sample_prior_offsets(self.prior, g, rng, 1)[0])

    def describe(self) -> str:
        if self.fixed is not None:
            return "fixed"
        return f"prior:{self.prior.kind}"


def _fixed_indices(g, p):
    if isinstance(p, VertexSequence):
        return offsets_to_index(g, p.offsets)
    return offsets_to_index(g, step_offsets(g, p))


def increasing_path(g: LayeredDag) -> PathSteps:
    """The path hugging the upper boundary: ``j = i`` on lattices, rightmost child on trees."""
    shape = (g.m - 1, g.d) if g.kind == LATTICE_HD else (g.m - 1,)
    return PathSteps(np.ones(shape, dtype=np.int64))


def path_source(g: LayeredDag, prior: PriorSpec | str | None = None, path=None) -> PathSource:
    if path is not None:
        if isinstance(path, str):
            if path != "increasing":
                raise ValueError(f"unknown named path {path!r}")
            return PathSource(fixed=increasing_path(g))
        if not isinstance(path, (PathSteps, VertexSequence)):
            path = PathSteps(validate_steps(g, path))
        return PathSource(fixed=path)
    if isinstance(prior, str):
        prior = PriorSpec(prior)
    return PathSource(prior=prior or PriorSpec())


# -- simulation core ---------------------------------------------------------


def _batch_size(g: LayeredDag) -> int:
    return max(1, min(64, FIELD_BUDGET // max(1, g.n_nodes)))


def _simulate_chunk(stat, g, family, theta, source, master_seed, lo, hi) -> np.ndarray:
    b = hi - lo
    x = np.empty((b, g.n_nodes))
    for r in range(b):
        rng = trial_rng(master_seed, lo + r)
        x[r] = family.sample(0.0, rng, g.n_nodes)
        if theta is not None:
            idx = source.indices(g, rng)
            x[r, idx] = family.sample(theta, rng, len(idx))
    return np.asarray(stat(x), dtype=np.float64).reshape(b)


def simulate(stat: Callable, g: LayeredDag, family: Family, n: int, master_seed: int,
             theta: Optional[float] = None, source: Optional[PathSource] = None,
             threads: Optional[int] = None) -> np.ndarray:
    """Statistic values for trials ``0 .. n-1``; null fields when ``theta`` is None."""
    if theta is not None:
        family.check_theta(theta)
        source = source or PathSource(prior=PriorSpec())
    bs = _batch_size(g)
    chunks = [(lo, min(n, lo + bs)) for lo in range(0, n, bs)]
    work = lambda c: _simulate_chunk(stat, g, family, theta, source, master_seed, *c)
    nt = resolve_threads(threads)
    if nt == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(nt) as ex:
            parts = list(ex.map(work, chunks))
    return np.concatenate(parts) if parts else np.empty(0)


def _stat_for(detector, g, family, theta):
    if callable(detector):
        return detector
    return make_detector(detector, g, family, theta)


# -- calibration and power ---------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    alpha_hat: float
    n_trials: int


@dataclass(frozen=True)
class PowerEstimate:
    power: float
    se: float
    n_trials: int
    exceedances: int = -1

    def __iter__(self):
        return iter((self.power, self.se))


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def threshold_from_null(values: np.ndarray, alpha: float) -> CalibrationResult:
    """Order statistic of rank ``ceil((1 - alpha) n)``; size counts strict exceedances."""
    v = np.sort(np.asarray(values))
    n = len(v)
    rank = max(1, math.ceil((1 - alpha) * n - 1e-9))
    thr = float(v[rank - 1])
    return CalibrationResult(thr, float(np.mean(v > thr)), n)


def calibrate(detector, graph: LayeredDag, family: Family = GAUSSIAN, alpha: float = 0.05,
              n: int = 10_000, master_seed: int = 0, theta: Optional[float] = None,
              threads: Optional[int] = None) -> CalibrationResult:
    """Threshold giving size ``alpha`` under the null, from ``n`` simulated fields.

    ``theta`` parameterises the Bayes detector and is ignored by the others.
    """
    if n < 100:
        raise ValueError("calibration needs n >= 100")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    stat = _stat_for(detector, graph, family, theta)
    return threshold_from_null(simulate(stat, graph, family, n, master_seed, threads=threads), alpha)


def estimate_power(detector, threshold: float, graph: LayeredDag, family: Family, theta: float,
                   source: PathSource | None = None, n: int = 1000, master_seed: int = 1,
                   threads: Optional[int] = None, stat_theta: Optional[float] = None) -> PowerEstimate:
    """Fraction of alternative trials whose statistic exceeds ``threshold``.

    Each trial plants a path from ``source`` (a fresh prior draw by default)
    with node law ``F_theta``.  ``stat_theta`` parameterises the Bayes
    statistic and defaults to ``theta``.
    """
    if n < 100:
        raise ValueError("power estimation needs n >= 100")
    family.check_theta(theta)
    stat = _stat_for(detector, graph, family, theta if stat_theta is None else stat_theta)
    vals = simulate(stat, graph, family, n, master_seed, theta=theta, source=source, threads=threads)
    k = int(np.sum(vals > threshold))
    p = k / n
    return PowerEstimate(p, binomial_se(p, n), n, k)


# -- analytic and fast shortcuts ---------------------------------------------


def was_analytic_power(m: int, mu: float, alpha: float = 0.05) -> float:
    """Power of the one-sided WAS test under Gaussian noise (path-independent)."""
    z = normal_quantile(1 - alpha)
    return float(ndtr(mu / math.sqrt(was_lambda(m)) - z))


def strip_visits(m: int, B: int, n_R: int, master_seed: int, prior: PriorSpec | None = None,
                 chunk: int = 4096) -> np.ndarray:
    """Strip visit counts of ``n_R`` prior paths on the ``m``-layer lattice."""
    from .graph import build_graph
    g = build_graph(LATTICE2D, m)
    prior = prior or PriorSpec()
    rng = trial_rng(master_seed, 0)
    out = np.empty(n_R, dtype=np.int64)
    for s in range(0, n_R, chunk):
        k = min(chunk, n_R - s)
        offs = sample_prior_offsets(prior, g, rng, k)
        j = 2 * offs - np.arange(m)
        out[s:s + k] = (np.abs(j) <= B).sum(axis=-1)
    return out


def fast_strip_power(m: int, B: int | None, mu: float, alpha: float = 0.05, n_R: int = 5000,
                     master_seed: int = 0, family: Family = GAUSSIAN,
                     visits: Optional[np.ndarray] = None) -> PowerEstimate:
    """Strip-test power without generating fields.

    Under the null the strip sum is ``N(0, n_strip)``; given the path's strip
    visit count ``R`` it is ``N(mu R, n_strip)`` under the alternative, so the
    power is the average over sampled ``R`` of a normal tail probability.
    """
    if family.name != "gaussian":
        raise ValueError("fast strip power is exact only for Gaussian nodes")
    B = default_strip_width(m) if B is None else B
    n_strip = strip_size(m, B)
    thr = normal_quantile(1 - alpha) * math.sqrt(n_strip)
    R = strip_visits(m, B, n_R, master_seed) if visits is None else visits
    probs = ndtr((mu * R - thr) / math.sqrt(n_strip))
    p = float(np.mean(probs))
    se = float(np.std(probs, ddof=1) / math.sqrt(len(probs))) if len(probs) > 1 else 0.0
    return PowerEstimate(p, se, len(probs))


# -- power curves ------------------------------------------------------------


@dataclass(frozen=True)
class PowerPoint:
    mu: float
    theta: float
    power: float
    se: float
    n_trials: int
    threshold: float
    alpha_hat: float


@dataclass
class PowerCurve:
    detector: str
    points: list = field(default_factory=list)
    threshold: float = math.nan
    alpha_hat: float = math.nan


def power_curve(detector: str, graph: LayeredDag, family: Family, mus, source: PathSource | None = None,
                alpha: float = 0.05, n_calib: int = 2000, n_power: int = 2000, master_seed: int = 0,
                threads: Optional[int] = None, thetas=None, B: int | None = None) -> PowerCurve:
    """Calibrate and estimate power on a grid of mean shifts (or natural parameters).

    Grid point ``g`` uses master seed ``seed_derive(master_seed, g + 1)``;
    calibration uses ``seed_derive(master_seed, 0)``.  The Bayes statistic
    depends on theta and is recalibrated at every grid point.
    """
    if thetas is None:
        thetas = [family.theta_for_shift(mu) for mu in mus]
    else:
        mus = [family.mean(t) - family.mean(0.0) for t in thetas]
    curve = PowerCurve(detector)
    calib_seed = seed_derive(master_seed, 0)
    if detector == "was_analytic":
        z = normal_quantile(1 - alpha) * math.sqrt(was_lambda(graph.m))
        for mu, th in zip(mus, thetas):
            curve.points.append(PowerPoint(mu, th, was_analytic_power(graph.m, mu, alpha), 0.0, 0, z, alpha))
        curve.threshold, curve.alpha_hat = z, alpha
        return curve
    if detector == "strip_fast":
        B = default_strip_width(graph.m) if B is None else B
        visits = strip_visits(graph.m, B, n_power, calib_seed, source.prior if source and source.prior else None)
        thr = normal_quantile(1 - alpha) * math.sqrt(strip_size(graph.m, B))
        for mu, th in zip(mus, thetas):
            est = fast_strip_power(graph.m, B, mu, alpha, family=family, visits=visits)
            curve.points.append(PowerPoint(mu, th, est.power, est.se, est.n_trials, thr, alpha))
        curve.threshold, curve.alpha_hat = thr, alpha
        return curve
    cal = None
    if detector != "bayes":
        stat = make_detector(detector, graph, family, B=B)
        cal = calibrate(stat, graph, family, alpha, n_calib, calib_seed, threads=threads)
        curve.threshold, curve.alpha_hat = cal.threshold, cal.alpha_hat
    for gi, (mu, th) in enumerate(zip(mus, thetas)):
        if detector == "bayes":
            stat = make_detector("bayes", graph, family, th)
            cal = calibrate(stat, graph, family, alpha, n_calib, calib_seed, threads=threads)
        est = estimate_power(stat, cal.threshold, graph, family, th, source, n_power,
                             seed_derive(master_seed, gi + 1), threads=threads)
        curve.points.append(PowerPoint(mu, th, est.power, est.se, est.n_trials, cal.threshold, cal.alpha_hat))
    return curve


# -- mu_0.95 search ----------------------------------------------------------


@dataclass(frozen=True)
class Mu95Result:
    mu: float
    lo: float
    hi: float
    power_lo: float
    power_hi: float
    evaluations: int


def bisect_power(power_at: Callable[[float, int, int], float], target: float = 0.95, lo: float = 0.0,
                 hi: float = 1.0, tol: float = 0.01, n: int = 1000, max_doublings: int = 20) -> Mu95Result:
    """Bisection on the mean shift for ``power(mu) = target``.

    ``power_at(mu, n, k)`` returns the power estimated with ``n`` trials at
    evaluation number ``k`` (use ``k`` to derive independent seeds).  The
    upper end is doubled until its power exceeds ``target``; the last two
    bisection steps use ``2 n`` trials.
    """
    k = 0
    p_lo = power_at(lo, n, k)
    k += 1
    if p_lo >= target:
        raise SearchError(f"power {p_lo:.3f} at the lower end {lo} already reaches {target}")
    p_hi = power_at(hi, n, k)
    k += 1
    doublings = 0
    while p_hi <= target:
        if doublings == max_doublings:
            raise SearchError(f"no bracket found: power {p_hi:.3f} at mu={hi} after {max_doublings} doublings")
        lo, p_lo = hi, p_hi
        hi *= 2.0
        p_hi = power_at(hi, n, k)
        k += 1
        doublings += 1
    steps = max(0, math.ceil(math.log2((hi - lo) / tol))) if hi - lo > tol else 0
    for s in range(steps):
        mid = 0.5 * (lo + hi)
        p = power_at(mid, 2 * n if s >= steps - 2 else n, k)
        k += 1
        if p > target:
            hi, p_hi = mid, p
        else:
            lo, p_lo = mid, p
    return Mu95Result(0.5 * (lo + hi), lo, hi, p_lo, p_hi, k)


def mu95_search(detector: str, graph: LayeredDag, family: Family = GAUSSIAN, source: PathSource | None = None,
                alpha: float = 0.05, target: float = 0.95, n: int = 1000, tol: float = 0.01,
                master_seed: int = 0, n_calib: int | None = None, lo: float = 0.0, hi: float = 1.0,
                threads: Optional[int] = None, B: int | None = None) -> Mu95Result:
    """Mean shift at which ``detector`` reaches power ``target`` at size ``alpha``.

    ``was_analytic`` uses the closed-form WAS power and ``strip_fast`` the
    field-free strip simulation; other detectors run full Monte Carlo with a
    null calibration of ``n_calib`` trials (default ``n``).
    """
    n_calib = n if n_calib is None else n_calib
    calib_seed = seed_derive(master_seed, 0)

    if detector == "was_analytic":
        fn = lambda mu, nn, k: was_analytic_power(graph.m, mu, alpha)
    elif detector == "strip_fast":
        width = default_strip_width(graph.m) if B is None else B
        visits = strip_visits(graph.m, width, n, calib_seed)
        fn = lambda mu, nn, k: fast_strip_power(graph.m, width, mu, alpha, family=family, visits=visits).power
    else:
        cache = {}

        def fn(mu, nn, k):
            theta = family.theta_for_shift(mu)
            if detector == "bayes":
                stat = make_detector("bayes", graph, family, theta)
                thr = calibrate(stat, graph, family, alpha, n_calib, calib_seed, threads=threads).threshold
            else:
                if "cal" not in cache:
                    cache["stat"] = make_detector(detector, graph, family, B=B)
                    cache["cal"] = calibrate(cache["stat"], graph, family, alpha, n_calib, calib_seed,
                                             threads=threads)
                stat, thr = cache["stat"], cache["cal"].threshold
            return estimate_power(stat, thr, graph, family, theta, source, nn,
                                  seed_derive(master_seed, k + 1), threads=threads).power

    return bisect_power(fn, target, lo, hi, tol, n)
