"""Test statistics for a planted path: Bayes likelihood ratio, GLRT, strip and WAS.

All statistics accept a :class:`~trailscan.graph.NodeField` whose values may
carry leading batch dimensions, and return one value per batch entry.
The dynamic programs sweep the graph layer by layer; each formal
predecessor set is expressed through array shifts so the edge set is never
materialised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, NumericError
from .families import GAUSSIAN, Family
from .graph import (LATTICE2D, TREE, LayeredDag, NodeField, MAX_ENUMERATED_PATHS,
                    enumerate_paths, path_indices)

LOG2 = math.log(2.0)
_STD = NormalDist()


@dataclass(frozen=True)
class BayesParams:
    family: Family
    theta: float

    def __post_init__(self):
        self.family.check_theta(self.theta)


# -- layer transfer ----------------------------------------------------------


def _pair_reduce(prev: np.ndarray, axis: int, op, fill: float) -> np.ndarray:
    """Combine the two lattice predecessors along ``axis``; grows that axis by one."""
    pad = [(0, 0)] * prev.ndim
    pad[axis] = (1, 1)
    p = np.pad(prev, pad, constant_values=fill)
    n = p.shape[axis]
    lo = np.take(p, np.arange(0, n - 1), axis=axis)
    hi = np.take(p, np.arange(1, n), axis=axis)
    return op(lo, hi)


def _lattice_pair(prev: np.ndarray, op) -> np.ndarray:
    # last axis only, without padding; boundary nodes see a single predecessor
    out = np.empty(prev.shape[:-1] + (prev.shape[-1] + 1,))
    out[..., 0] = prev[..., 0]
    out[..., -1] = prev[..., -1]
    op(prev[..., :-1], prev[..., 1:], out=out[..., 1:-1])
    return out


def _transfer(g: LayeredDag, prev: np.ndarray, i: int, op, fill: float) -> np.ndarray:
    """Aggregate predecessor values for every node of layer ``i`` (``i >= 1``).

    ``op`` is applied to pairs of predecessors; out-of-graph predecessors
    contribute ``fill`` (the identity of ``op``).
    """
    if g.kind == TREE:
        return np.repeat(prev, 2, axis=-1)
    if g.kind == LATTICE2D:
        return _lattice_pair(prev, op)
    batch = prev.shape[:-1]
    cube = prev.reshape(batch + (i,) * g.d)
    nb = len(batch)
    for ax in range(g.d):
        cube = _pair_reduce(cube, nb + ax, op, fill)
    return cube.reshape(batch + ((i + 1) ** g.d,))


# -- Bayes likelihood ratio --------------------------------------------------


def bayes_lr_dp(field: NodeField, params: BayesParams, method: str = "auto") -> np.ndarray | float:
    """Log likelihood ratio of the uniform-prior Bayes test.

    Sweeps ``Y(v) = exp(theta X_v - psi(theta)) * mean_{formal preds} Y``
    layer by layer and returns ``log sum_{terminal v} Y(v)``.

    ``method="log"`` runs entirely in log space; ``"scaled"`` runs in the
    linear domain with a per-layer log scale, which is several times faster
    and used by ``"auto"`` whenever the per-node exponents are moderate.
    """
    g = field.graph
    if params.theta == 0:
        # every per-node factor is exactly 1
        out = np.zeros(field.values.shape[:-1])
        return out if out.ndim else 0.0
    a = params.theta * field.values - params.family.psi(params.theta)
    if method == "auto":
        span = float(np.max(np.abs(a))) if a.size else 0.0
        method = "scaled" if span < 300.0 else "log"
    if method == "log":
        out = _bayes_log(g, a)
    elif method == "scaled":
        out = _bayes_scaled(g, a)
    else:
        raise ValueError(f"unknown method {method!r}")
    return out if out.ndim else float(out)


def _bayes_log(g: LayeredDag, a: np.ndarray) -> np.ndarray:
    log_b = math.log(g.branching)
    cur = a[..., g.layer_slice(0)]
    for i in range(1, g.m):
        agg = _transfer(g, cur, i, np.logaddexp, -np.inf)
        cur = a[..., g.layer_slice(i)] + agg - log_b
        if not math.isfinite(float(cur.sum())):
            raise NumericError(f"non-finite log Y in layer {i}")
    return logsumexp(cur, axis=-1)


def _bayes_scaled(g: LayeredDag, a: np.ndarray) -> np.ndarray:
    e = np.exp(a)
    inv_b = 1.0 / g.branching
    span = float(np.max(np.abs(a))) + LOG2 * g.d
    every = max(1, min(32, int(300.0 // max(span, 1e-9))))
    batch = a.shape[:-1]
    log_scale = np.zeros(batch)
    cur = e[..., g.layer_slice(0)].copy()
    for i in range(1, g.m):
        agg = _transfer(g, cur, i, np.add, 0.0)
        cur = e[..., g.layer_slice(i)] * agg
        cur *= inv_b
        if i % every == 0 or i == g.m - 1:
            s = cur.max(axis=-1)
            if not np.all(np.isfinite(s)) or np.any(s <= 0):
                raise NumericError(f"scaled Y left the floating range in layer {i}")
            cur /= s[..., None]
            log_scale += np.log(s)
    return np.log(cur.sum(axis=-1)) + log_scale


def bayes_lr_bruteforce(field: NodeField, params: BayesParams) -> np.ndarray | float:
    """Log likelihood ratio by explicit averaging over every path."""
    g = field.graph
    if g.n_paths > MAX_ENUMERATED_PATHS:
        raise CapacityError(f"{g.n_paths} paths exceed the brute-force limit {MAX_ENUMERATED_PATHS}")
    idx = path_indices(g, enumerate_paths(g))  # (n_paths, m)
    a = params.theta * field.values - params.family.psi(params.theta)
    per_path = a[..., idx].sum(axis=-1)
    out = logsumexp(per_path, axis=-1) - (g.m - 1) * math.log(g.branching)
    return out if np.ndim(out) else float(out)


# -- GLRT --------------------------------------------------------------------


def glrt_max_dp(field: NodeField) -> np.ndarray | float:
    """Largest path sum ``max_p sum_{v in p} X_v`` by a max-plus sweep."""
    g = field.graph
    x = field.values
    cur = x[..., g.layer_slice(0)]
    for i in range(1, g.m):
        cur = x[..., g.layer_slice(i)] + _transfer(g, cur, i, np.maximum, -np.inf)
    out = cur.max(axis=-1)
    return out if out.ndim else float(out)


def glrt_max_bruteforce(field: NodeField) -> np.ndarray | float:
    g = field.graph
    if g.n_paths > MAX_ENUMERATED_PATHS:
        raise CapacityError(f"{g.n_paths} paths exceed the brute-force limit {MAX_ENUMERATED_PATHS}")
    idx = path_indices(g, enumerate_paths(g))
    out = field.values[..., idx].sum(axis=-1).max(axis=-1)
    return out if np.ndim(out) else float(out)


# -- strip -------------------------------------------------------------------


def default_strip_width(m: int) -> int:
    return int(math.floor(2.0 * math.sqrt(m)))


@lru_cache(maxsize=32)
def strip_mask(m: int, B: int) -> np.ndarray:
    """Flat indices of lattice nodes with ``|j| <= min(i, B)``, layer-major."""
    parts = []
    start = 0
    for i in range(m):
        o = np.arange(i + 1)
        j = 2 * o - i
        parts.append(start + o[np.abs(j) <= min(i, B)])
        start += i + 1
    idx = np.concatenate(parts)
    idx.flags.writeable = False
    return idx


def strip_size(m: int, B: int) -> int:
    """Number of lattice nodes in the strip."""
    total = 0
    for i in range(m):
        w = min(i, B)
        # j has the parity of i and |j| <= w
        total += w + 1 if (w - i) % 2 == 0 else w
    return total


def strip_statistic(field: NodeField, B: int | None = None):
    """Sum of node values inside the strip; returns ``(value, n_strip)``."""
    g = field.graph
    if g.kind != LATTICE2D:
        raise ValueError("the strip statistic is defined on the 2-d lattice only")
    if B is None:
        B = default_strip_width(g.m)
    if B < 0:
        raise ValueError("strip half-width B must be >= 0")
    idx = strip_mask(g.m, int(B))
    val = field.values[..., idx].sum(axis=-1)
    return (val if val.ndim else float(val)), len(idx)


def strip_visit_count(p, B: int) -> int | np.ndarray:
    """Layers at which a lattice path lies inside the strip ``|j| <= min(i, B)``.

    Accepts a PathSteps or an array of ``+/-1`` steps with batch dimensions.
    """
    steps = np.asarray(p.steps if hasattr(p, "steps") else p)
    j = np.concatenate([np.zeros(steps.shape[:-1] + (1,), dtype=np.int64), np.cumsum(steps, axis=-1)], axis=-1)
    out = (np.abs(j) <= B).sum(axis=-1)  # |j| <= i always holds on a path
    return int(out) if np.ndim(out) == 0 else out


# -- weighted average statistic ----------------------------------------------


def harmonic(m: int) -> float:
    return math.fsum(1.0 / i for i in range(1, m + 1))


def was_lambda(m: int) -> float:
    """Normalizer making the per-layer weights sum to one: ``1 / H_m``."""
    return 1.0 / harmonic(m)


@lru_cache(maxsize=32)
def was_weights(m: int) -> np.ndarray:
    lam = was_lambda(m)
    w = np.repeat(lam / np.arange(1, m + 1), np.arange(1, m + 1))
    w.flags.writeable = False
    return w


def was_statistic(field: NodeField) -> np.ndarray | float:
    """``sum_{(i,j)} w_i X_{i,j}`` with ``w_i = lambda_m / (i + 1)``."""
    g = field.graph
    if g.kind != LATTICE2D:
        raise ValueError("the weighted average statistic is defined on the 2-d lattice only")
    out = field.values @ was_weights(g.m)
    return out if np.ndim(out) else float(out)


def was_null_law(m: int) -> tuple:
    """Mean and variance of the WAS under standard Gaussian noise."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 0.0, was_lambda(m)


def normal_quantile(q: float) -> float:
    return _STD.inv_cdf(q)


def was_mu95(m: int, alpha: float = 0.05, beta: float = 0.95) -> float:
    """Mean shift at which the one-sided WAS test of size ``alpha`` has power ``beta``."""
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ValueError("alpha and beta must lie in (0, 1)")
    return (normal_quantile(1 - alpha) + normal_quantile(beta)) * math.sqrt(was_lambda(m))


# -- registry ----------------------------------------------------------------


def root_value(field: NodeField):
    """Value at the origin; a one-node sanity detector."""
    out = field.values[..., 0]
    return out if np.ndim(out) else float(out)


DETECTORS = ("bayes", "glrt", "strip", "was", "root")


def make_detector(name: str, graph: LayeredDag, family: Family = GAUSSIAN, theta: float | None = None,
                  B: int | None = None):
    """Return ``stat(values) -> ndarray`` evaluating a detector on a batch of fields."""
    if name == "bayes":
        if theta is None:
            raise ValueError("the Bayes detector needs theta")
        params = BayesParams(family, theta)
        return lambda v: np.asarray(bayes_lr_dp(NodeField(graph, v), params))
    if name == "glrt":
        return lambda v: np.asarray(glrt_max_dp(NodeField(graph, v)))
    if name == "strip":
        if graph.kind != LATTICE2D:
            raise ValueError("the strip statistic is defined on the 2-d lattice only")
        width = default_strip_width(graph.m) if B is None else B
        return lambda v: np.asarray(strip_statistic(NodeField(graph, v), width)[0])
    if name == "was":
        if graph.kind != LATTICE2D:
            raise ValueError("the weighted average statistic is defined on the 2-d lattice only")
        return lambda v: np.asarray(was_statistic(NodeField(graph, v)))
    if name == "root":
        return lambda v: np.asarray(v[..., 0])
    raise ValueError(f"unknown detector {name!r}; expected one of {DETECTORS}")
