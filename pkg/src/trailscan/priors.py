"""Path priors, crossing numbers of independent prior paths, and their laws.

Priors:

* ``uniform``: i.i.d. equiprobable steps (all paths equally likely).
* ``hm``: nearest-neighbour walk in a block-structured random environment
  (Haggstrom-Mossel), with a low predictability profile.
* ``independent_uniform``: each layer's node chosen independently and
  uniformly; yields a :class:`~trailscan.graph.VertexSequence`, not a path.

Crossing counts always include the shared origin, so two paths of ``m``
vertices cross between 1 and ``m`` times.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import FitError
from .graph import (LATTICE2D, LATTICE_HD, TREE, LayeredDag, PathSteps,
                    VertexSequence, step_offsets, offsets_to_index)

UNIFORM = "uniform"
HM = "hm"
INDEPENDENT_UNIFORM = "independent_uniform"
PRIOR_KINDS = (UNIFORM, HM, INDEPENDENT_UNIFORM)


@dataclass(frozen=True)
class PriorSpec:
    kind: str = UNIFORM
    a_seq: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior {self.kind!r}; expected one of {PRIOR_KINDS}")
        object.__setattr__(self, "a_seq", tuple(float(a) for a in self.a_seq))
        if self.kind == HM:
            _check_a_seq(self.a_seq)


def _check_a_seq(a_seq) -> None:
    if any(a < 0 for a in a_seq):
        raise ValueError("a_seq entries must be nonnegative")
    if sum(a_seq) >= 0.5:
        raise ValueError(f"sum of a_seq is {sum(a_seq):.6g}; condition (A.1) requires < 1/2")


@dataclass(frozen=True)
class CrossingLaw:
    pmf: dict
    support: str = ""

    def __getitem__(self, k):
        return self.pmf.get(k, 0.0)

    def as_array(self, kmax=None) -> np.ndarray:
        kmax = max(self.pmf) if kmax is None else kmax
        out = np.zeros(kmax + 1)
        for k, p in self.pmf.items():
            if k <= kmax:
                out[k] = p
        return out

    def total(self) -> float:
        return math.fsum(self.pmf.values())


# -- the Haggstrom-Mossel environment ----------------------------------------


def hm_sequence(m: int) -> tuple:
    """Block amplitudes ``a_j = 1/(3 log2 m)`` for ``j <= log2 m``, zero beyond."""
    if m <= 4:
        raise ValueError(f"hm_sequence needs m > 4, got {m}")
    lg = math.log2(m)
    jmax = math.floor(lg + 1e-12)
    return tuple(1.0 / (3.0 * lg) for _ in range(jmax + 1))


def hm_environment(a_seq, m: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Success probabilities ``p_1 .. p_{m-1}`` of the walk's steps.

    Level ``j`` contributes a value uniform on ``[-a_j, a_j]``, redrawn every
    ``2**j`` steps.  ``size`` adds leading batch dimensions.
    """
    _check_a_seq(a_seq)
    n = m - 1
    batch = () if size is None else tuple(np.atleast_1d(size))
    if n == 0:
        return np.full(batch + (0,), 0.5)
    levels = []
    for j, a in enumerate(a_seq):
        n_blocks = ((n - 1) >> j) + 1  # step i = idx + 1 lives in block idx >> j
        levels.append(rng.uniform(-a, a, size=batch + (n_blocks,)) if a > 0 else None)
    # coarse to fine: each block of level j splits into two blocks of level j - 1
    acc = None
    for j in range(len(levels) - 1, -1, -1):
        if acc is not None:
            acc = np.repeat(acc, 2, axis=-1)[..., :((n - 1) >> j) + 1]
        if levels[j] is not None:
            acc = levels[j] if acc is None else acc + levels[j]
    if acc is None:
        return np.full(batch + (n,), 0.5)
    return 0.5 + acc


def _hm_steps(a_seq, m, rng, size=None) -> np.ndarray:
    p = hm_environment(a_seq, m, rng, size)
    return np.where(rng.random(p.shape) < p, 1, -1).astype(np.int64)


def _step_shape(g: LayeredDag) -> tuple:
    return (g.m - 1, g.d) if g.kind == LATTICE_HD else (g.m - 1,)


def sample_prior_steps(spec: PriorSpec, g: LayeredDag, rng: np.random.Generator, size) -> np.ndarray:
    """Step arrays of ``size`` independent prior paths (edge priors only)."""
    size = tuple(np.atleast_1d(size))
    if spec.kind == UNIFORM:
        bits = rng.integers(0, 2, size=size + _step_shape(g))
        return bits if g.kind == TREE else 2 * bits - 1
    if spec.kind == HM:
        if g.kind != LATTICE2D:
            raise ValueError("the hm prior is defined on the 2-d lattice only")
        return _hm_steps(spec.a_seq, g.m, rng, size)
    raise ValueError("independent_uniform yields vertex sequences; use sample_prior_offsets")


def sample_prior_offsets(spec: PriorSpec, g: LayeredDag, rng: np.random.Generator, size) -> np.ndarray:
    """Per-layer offsets of ``size`` prior draws, for any prior."""
    size = tuple(np.atleast_1d(size))
    if spec.kind == INDEPENDENT_UNIFORM:
        if g.kind != LATTICE2D:
            raise ValueError("independent_uniform is defined on the 2-d lattice only")
        width = np.arange(1, g.m + 1)
        return (rng.random(size + (g.m,)) * width).astype(np.int64)
    return step_offsets(g, sample_prior_steps(spec, g, rng, size))


def sample_prior_path(spec: PriorSpec, g: LayeredDag, rng: np.random.Generator):
    """One draw from the prior: a PathSteps, or a VertexSequence for independent_uniform."""
    if spec.kind == INDEPENDENT_UNIFORM:
        return VertexSequence(sample_prior_offsets(spec, g, rng, 1)[0])
    return PathSteps(sample_prior_steps(spec, g, rng, 1)[0])


# -- crossings ---------------------------------------------------------------


def _as_offsets(g: LayeredDag, p) -> np.ndarray:
    if isinstance(p, VertexSequence):
        offs = p.offsets
    else:
        offs = step_offsets(g, p)
    if offs.shape[-1 if g.kind != LATTICE_HD else -2] != g.m:
        raise ValueError("path length does not match the graph depth")
    return offs


def crossing_count(g: LayeredDag, p, q) -> int:
    """Number of vertices shared by two paths, origin included."""
    a, b = _as_offsets(g, p), _as_offsets(g, q)
    return int(crossings_from_offsets(g, a, b))


def crossings_from_offsets(g: LayeredDag, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    eq = a == b
    if g.kind == LATTICE_HD:
        eq = eq.all(axis=-1)
    return eq.sum(axis=-1)


def sample_crossings(spec: PriorSpec, g: LayeredDag, n: int, rng: np.random.Generator,
                     chunk: int = 20000) -> np.ndarray:
    """Crossing counts of ``n`` independent pairs of prior draws."""
    out = np.empty(n, dtype=np.int64)
    for s in range(0, n, chunk):
        k = min(chunk, n - s)
        a = sample_prior_offsets(spec, g, rng, k)
        b = sample_prior_offsets(spec, g, rng, k)
        out[s:s + k] = crossings_from_offsets(g, a, b)
    return out


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def lattice_crossing_pmf(n: int) -> CrossingLaw:
    """Law of the number of returns to 0 among ``n`` steps of the difference walk.

    ``P(N = k) = C(2n - k, n) / 2**(2n - k)`` for ``k = 0 .. n``.  For two
    lattice paths of ``m`` vertices this is the law of ``crossing_count - 1``
    with ``n = m - 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    # log P(0) = sum_i log(1 - 1/(2i)); then P(k+1)/P(k) = 1 - k/(2n - k).
    # Both sums avoid the cancellation of large log-factorials.
    i = np.arange(1, n + 1)
    k = np.arange(n + 1)
    log_p0 = math.fsum(np.log1p(-0.5 / i))
    steps = np.log1p(-k[:-1] / (2.0 * n - k[:-1]))
    logp = log_p0 + np.concatenate([[0.0], np.cumsum(steps)])
    return CrossingLaw({int(i): float(v) for i, v in zip(k, np.exp(logp))},
                       support=f"k = 0..{n} returns (origin excluded)")


def lattice_crossing_upper(k: int, n: int, eps: float) -> float:
    """Gaussian-type upper bound on ``lattice_crossing_pmf(n)[k]``."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    decay = math.exp(-k * k / (4.0 * n))
    if k <= eps * n:
        val = math.sqrt((1 + eps) / (math.pi * n)) * decay
    else:
        val = decay / math.sqrt(math.pi)
    return min(1.0, val)


def tree_crossing_pmf(m: int) -> CrossingLaw:
    """Truncated geometric law of tree crossings (root included)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return CrossingLaw({1: 1.0}, "k = 1")
    pmf = {k: 2.0**-k for k in range(1, m)}
    pmf[m] = 2.0 ** (-m + 1)
    return CrossingLaw(pmf, support=f"k = 1..{m} shared vertices (root included)")


def indep_uniform_mgf(t: float, m: int) -> float:
    """``E exp(t N)`` for the independent-uniform prior: prod (1 + (e^t - 1)/i)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    c = math.expm1(t)
    i = np.arange(1, m + 1)
    return float(np.exp(np.sum(np.log1p(c / i))))


# -- predictability ----------------------------------------------------------


@dataclass(frozen=True)
class ProfileBound:
    value: float
    vacuous: bool


def pred_profile_bound(k: int, a_seq) -> ProfileBound:
    """``min(1, 20 / (k a_{floor(log2(k/2))}))``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    j = math.floor(math.log2(k / 2)) if k >= 2 else -1
    a = a_seq[j] if 0 <= j < len(a_seq) else 0.0
    if a <= 0:
        warnings.warn(f"a_{j} is zero; the predictability bound is vacuous", stacklevel=2)
        return ProfileBound(1.0, True)
    val = 20.0 / (k * a)
    return ProfileBound(min(1.0, val), val >= 1.0)


@dataclass(frozen=True)
class ProfileEstimate:
    value: float
    se: float
    n_eff: float


def pred_profile_estimate(spec: PriorSpec, n: int, k: int, histories: int, continuations: int,
                          rng: np.random.Generator, method: str = "importance") -> ProfileEstimate:
    """Monte Carlo lower estimate of ``sup_x P(S_{n+k} = x | S_0 .. S_n)``.

    Under the uniform prior the value is exact.  Otherwise, for each sampled
    history the conditional law of ``S_{n+k}`` is estimated
    from ``continuations`` draws.  Under the hm prior the environment is
    redrawn from its prior and weighted by the likelihood of the history
    (self-normalized importance sampling), which targets the exact
    conditional law.  The reported standard error is binomial with the
    effective sample size.

    With ``method="environment"`` each history keeps the environment it was
    drawn with and all continuations share it.  That environment is a draw
    from the posterior given the history, so the estimate bounds the true
    conditional maximum from above in expectation; the weights stay equal
    however long the history is.
    """
    if method not in ("importance", "environment"):
        raise ValueError(f"unknown method {method!r}")
    if continuations < 100:
        raise ValueError("continuations must be >= 100")
    if n < 0 or k < 1 or histories < 1:
        raise ValueError("need n >= 0, k >= 1, histories >= 1")
    horizon = n + k + 1
    if spec.kind == UNIFORM:
        # the future is independent of the history: the central binomial mass
        return ProfileEstimate(math.exp(_log_binom(k, k // 2) - k * math.log(2.0)), 0.0, math.inf)
    best = ProfileEstimate(0.0, 0.0, 0.0)
    for _ in range(histories):
        if spec.kind == HM and method == "environment":
            env = hm_environment(spec.a_seq, horizon, rng)
            hist = np.where(rng.random(n) < env[:n], 1, -1)  # drawn to keep the joint law, then discarded
            w = np.ones(continuations)
            pc = env[n:n + k]
            cont = np.where(rng.random((continuations, k)) < pc, 1, -1)
        elif spec.kind == HM:
            hist = _hm_steps(spec.a_seq, horizon, rng)[:n]
            env = hm_environment(spec.a_seq, horizon, rng, continuations)
            ph, pc = env[:, :n], env[:, n:n + k]
            logw = np.where(hist > 0, np.log(ph), np.log1p(-ph)).sum(axis=1)
            w = np.exp(logw - logw.max())
            cont = np.where(rng.random(pc.shape) < pc, 1, -1)
        else:
            raise ValueError("the predictability profile is defined for walk priors only")
        disp = cont.sum(axis=1)
        vals, inv = np.unique(disp, return_inverse=True)
        mass = np.bincount(inv, weights=w) / w.sum()
        p = float(mass.max())
        n_eff = float(w.sum() ** 2 / np.sum(w * w))
        se = math.sqrt(p * (1 - p) / n_eff)
        if p > best.value:
            best = ProfileEstimate(p, se, n_eff)
    return best


# -- intersection tails ------------------------------------------------------


def intersection_tail_fit(spec: PriorSpec, g: LayeredDag, samples: int, rng: np.random.Generator,
                          min_count: int = 30) -> tuple:
    """Least-squares fit of ``log P(N >= k) = log C + k log eta``.

    Uses every ``k >= 1`` with at least ``min_count`` pairs at or above it.
    Returns ``(C, eta)``.
    """
    if samples < 10_000:
        raise ValueError("samples must be >= 10^4")
    counts = sample_crossings(spec, g, samples, rng)
    return fit_tail(counts, min_count)


def fit_tail(counts: np.ndarray, min_count: int = 30) -> tuple:
    counts = np.asarray(counts)
    if counts.min() == counts.max():
        raise FitError("all crossing counts are equal; the tail is degenerate")
    kmax = int(counts.max())
    ge = np.bincount(counts, minlength=kmax + 2)[::-1].cumsum()[::-1]  # ge[k] = #{N >= k}
    ks = np.array([k for k in range(1, kmax + 1) if ge[k] >= min_count])
    if len(ks) < 2:
        raise FitError("fewer than two tail points with enough observations")
    y = np.log(ge[ks] / len(counts))
    slope, intercept = np.polyfit(ks, y, 1)
    return float(math.exp(intercept)), float(math.exp(slope))
