"""Layered directed graphs, paths from the origin and node-value fields.

Every graph is a stack of layers ``0 .. m-1`` with edges only between
consecutive layers.  Nodes are addressed by ``(layer, offset)``; values of a
field are stored layer-major in one flat array so that dynamic-programming
sweeps read memory sequentially.

Offsets:

* ``lattice2d``: offset ``(j + i) / 2`` in ``[0, i]``; the signed coordinate
  ``j = 2 * offset - i`` only appears at the API surface.
* ``tree``: offset ``j`` in ``[0, 2**i)``.
* ``lattice_hd``: a tuple of ``d`` per-axis lattice offsets, stored in C
  order inside the layer.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CapacityError

LATTICE2D = "lattice2d"
TREE = "tree"
LATTICE_HD = "lattice_hd"
KINDS = (LATTICE2D, TREE, LATTICE_HD)

DEFAULT_NODE_CAP = 2**31
MAX_ENUMERATED_PATHS = 2**20


@dataclass(frozen=True)
class LayeredDag:
    kind: str
    m: int
    d: int = 1

    @cached_property
    def layer_sizes(self) -> tuple:
        if self.kind == LATTICE2D:
            return tuple(range(1, self.m + 1))
        if self.kind == TREE:
            return tuple(2**i for i in range(self.m))
        return tuple((i + 1) ** self.d for i in range(self.m))

    @cached_property
    def layer_starts(self) -> np.ndarray:
        """Flat index of the first node of each layer, plus the total at the end."""
        starts = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(self.layer_sizes, out=starts[1:])
        starts.flags.writeable = False
        return starts

    @property
    def n_nodes(self) -> int:
        return int(self.layer_starts[-1])

    @property
    def branching(self) -> int:
        """Number of formal successors (and formal predecessors) of a node."""
        return 2**self.d if self.kind == LATTICE_HD else 2

    @property
    def n_paths(self) -> int:
        return self.branching ** (self.m - 1)

    def layer_slice(self, i: int) -> slice:
        return slice(int(self.layer_starts[i]), int(self.layer_starts[i + 1]))


def count_nodes(kind: str, m: int, d: int = 1) -> int:
    if kind == LATTICE2D:
        return m * (m + 1) // 2
    if kind == TREE:
        return 2**m - 1
    return sum((i + 1) ** d for i in range(m))


def build_graph(kind: str, m: int, d: int | None = None, max_nodes: int = DEFAULT_NODE_CAP) -> LayeredDag:
    """Build a layered graph of depth ``m`` (paths of ``m`` vertices).

    Raises ``CapacityError`` when the node count exceeds ``max_nodes``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown graph kind {kind!r}; expected one of {KINDS}")
    m = int(m)
    if m < 1:
        raise ValueError(f"depth m must be >= 1, got {m}")
    if kind == LATTICE_HD:
        if d is None or int(d) < 1:
            raise ValueError("lattice_hd needs a dimension d >= 1")
        d = int(d)
    else:
        d = 1
    n = count_nodes(kind, m, d)
    if n > max_nodes:
        raise CapacityError(f"{kind} graph with m={m} has {n} nodes, above the cap of {max_nodes}")
    return LayeredDag(kind, m, d)


@dataclass(frozen=True)
class NodeRef:
    layer: int
    offset: int | tuple


def coords(g: LayeredDag, v: NodeRef) -> tuple:
    """Signed coordinates ``(i, j)`` (or ``(i, j_1, .., j_d)``) of a node."""
    if g.kind == TREE:
        return (v.layer, v.offset)
    if g.kind == LATTICE2D:
        return (v.layer, 2 * v.offset - v.layer)
    return (v.layer, *(2 * o - v.layer for o in v.offset))


def node_at(g: LayeredDag, i: int, *j: int) -> NodeRef:
    """Inverse of :func:`coords`."""
    if g.kind == TREE:
        (jj,) = j
        v = NodeRef(i, jj)
    elif g.kind == LATTICE2D:
        (jj,) = j
        if (jj + i) % 2:
            raise ValueError(f"j={jj} does not have the parity of i={i}")
        v = NodeRef(i, (jj + i) // 2)
    else:
        if len(j) != g.d or any((x + i) % 2 for x in j):
            raise ValueError(f"bad lattice coordinates {j} at layer {i}")
        v = NodeRef(i, tuple((x + i) // 2 for x in j))
    _check_node(g, v)
    return v


def _check_node(g: LayeredDag, v: NodeRef) -> None:
    if not 0 <= v.layer < g.m:
        raise ValueError(f"layer {v.layer} outside [0, {g.m})")
    if g.kind == LATTICE_HD:
        offs = v.offset
        if len(offs) != g.d or any(not 0 <= o <= v.layer for o in offs):
            raise ValueError(f"offset {offs} invalid in layer {v.layer}")
    else:
        hi = v.layer if g.kind == LATTICE2D else 2**v.layer - 1
        if not 0 <= v.offset <= hi:
            raise ValueError(f"offset {v.offset} invalid in layer {v.layer}")


def node_index(g: LayeredDag, v: NodeRef) -> int:
    """Flat storage index of a node."""
    _check_node(g, v)
    if g.kind == LATTICE_HD:
        local = int(np.ravel_multi_index(v.offset, (v.layer + 1,) * g.d))
    else:
        local = v.offset
    return int(g.layer_starts[v.layer]) + local


def predecessors(g: LayeredDag, v: NodeRef) -> list:
    _check_node(g, v)
    if v.layer == 0:
        raise ValueError("the origin has no predecessor")
    i = v.layer - 1
    if g.kind == TREE:
        return [NodeRef(i, v.offset // 2)]
    if g.kind == LATTICE2D:
        return [NodeRef(i, o) for o in (v.offset - 1, v.offset) if 0 <= o <= i]
    per_axis = [[o for o in (x - 1, x) if 0 <= o <= i] for x in v.offset]
    return [NodeRef(i, t) for t in itertools.product(*per_axis)]


def successors(g: LayeredDag, v: NodeRef) -> list:
    _check_node(g, v)
    if v.layer == g.m - 1:
        return []
    i = v.layer + 1
    if g.kind == TREE:
        return [NodeRef(i, 2 * v.offset + s) for s in (0, 1)]
    if g.kind == LATTICE2D:
        return [NodeRef(i, v.offset + s) for s in (0, 1)]
    return [NodeRef(i, tuple(x + s for x, s in zip(v.offset, ss)))
            for ss in itertools.product((0, 1), repeat=g.d)]


# -- paths -------------------------------------------------------------------


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class PathSteps:
    """A path from the origin as ``m - 1`` steps.

    Lattice steps are ``-1/+1`` (shape ``(m-1,)`` or ``(m-1, d)``), tree steps
    are ``0/1``.
    """
    steps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "steps", _readonly(np.asarray(self.steps, dtype=np.int64)))

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class VertexSequence:
    """One node per layer, not necessarily joined by edges.

    Produced by priors that pick each layer's node independently.
    """
    offsets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offsets", _readonly(np.asarray(self.offsets, dtype=np.int64)))


def step_alphabet(g: LayeredDag) -> tuple:
    return (0, 1) if g.kind == TREE else (-1, 1)


def validate_steps(g: LayeredDag, steps: np.ndarray) -> np.ndarray:
    """Check shape and alphabet of one path or a batch of paths; returns int64 array."""
    s = np.asarray(steps, dtype=np.int64)
    core = (g.m - 1, g.d) if g.kind == LATTICE_HD else (g.m - 1,)
    if s.shape[s.ndim - len(core):] != core:
        raise ValueError(f"steps have shape {s.shape}, expected trailing shape {core}")
    lo, hi = step_alphabet(g)
    if s.size and not np.all((s == lo) | (s == hi)):
        raise ValueError(f"steps must take values in {{{lo}, {hi}}} for a {g.kind} graph")
    return s


def step_offsets(g: LayeredDag, steps) -> np.ndarray:
    """Per-layer offsets of a path (or batch of paths): shape ``(..., m)`` or ``(..., m, d)``."""
    s = validate_steps(g, steps.steps if isinstance(steps, PathSteps) else steps)
    if g.kind == TREE:
        # offset_i = sum_k s_k 2^(i-1-k): build by repeated doubling
        out = np.zeros(s.shape[:-1] + (g.m,), dtype=np.int64)
        for i in range(1, g.m):
            out[..., i] = 2 * out[..., i - 1] + s[..., i - 1]
        return out
    inc = (s + 1) // 2
    axis = -2 if g.kind == LATTICE_HD else -1
    csum = np.cumsum(inc, axis=axis)
    pad = [(0, 0)] * csum.ndim
    pad[axis] = (1, 0)
    return np.pad(csum, pad)


def offsets_to_index(g: LayeredDag, offsets: np.ndarray) -> np.ndarray:
    """Flat node indices for per-layer offsets (shape ``(..., m)`` or ``(..., m, d)``)."""
    offsets = np.asarray(offsets, dtype=np.int64)
    starts = g.layer_starts[:-1]
    if g.kind != LATTICE_HD:
        return starts + offsets
    width = np.arange(1, g.m + 1, dtype=np.int64)
    local = np.zeros(offsets.shape[:-1], dtype=np.int64)
    for k in range(g.d):
        local = local * width + offsets[..., k]
    return starts + local


def path_indices(g: LayeredDag, p) -> np.ndarray:
    """Flat node indices visited by a path, vertex sequence or batch of step arrays."""
    if isinstance(p, VertexSequence):
        return offsets_to_index(g, p.offsets)
    return offsets_to_index(g, step_offsets(g, p))


def path_vertices(g: LayeredDag, p: PathSteps) -> list:
    offs = step_offsets(g, p)
    if g.kind == LATTICE_HD:
        return [NodeRef(i, tuple(int(x) for x in offs[i])) for i in range(g.m)]
    return [NodeRef(i, int(offs[i])) for i in range(g.m)]


def steps_from_vertices(g: LayeredDag, vertices: Sequence[NodeRef]) -> PathSteps:
    """Re-encode a vertex chain as steps; raises if consecutive nodes are not joined."""
    if len(vertices) != g.m or vertices[0].layer != 0:
        raise ValueError("a path must list one node per layer starting at the origin")
    steps = []
    for a, b in zip(vertices, vertices[1:]):
        if b not in successors(g, a):
            raise ValueError(f"{b} is not a successor of {a}")
        if g.kind == TREE:
            steps.append(b.offset - 2 * a.offset)
        elif g.kind == LATTICE2D:
            steps.append(2 * (b.offset - a.offset) - 1)
        else:
            steps.append([2 * (y - x) - 1 for x, y in zip(a.offset, b.offset)])
    tail = (g.d,) if g.kind == LATTICE_HD else ()
    return PathSteps(np.array(steps, dtype=np.int64).reshape((len(steps),) + tail))


def is_edge_path(g: LayeredDag, offsets: np.ndarray) -> bool:
    """True when per-layer offsets form a chain of edges from the origin."""
    offsets = np.asarray(offsets, dtype=np.int64)
    if g.kind == TREE:
        ok = offsets[0] == 0 and np.all(offsets[1:] // 2 == offsets[:-1])
        return bool(ok)
    diff = np.diff(offsets, axis=0)
    return bool(np.all(offsets[0] == 0) and np.all((diff == 0) | (diff == 1)))


def enumerate_paths(g: LayeredDag, limit: int = MAX_ENUMERATED_PATHS) -> np.ndarray:
    """All step sequences of the graph, shape ``(n_paths, m-1[, d])``."""
    n = g.n_paths
    if n > limit:
        raise CapacityError(f"{n} paths exceed the enumeration limit {limit}")
    lo, hi = step_alphabet(g)
    k = (g.m - 1) * g.d if g.kind == LATTICE_HD else g.m - 1
    bits = (np.arange(2**k)[:, None] >> np.arange(k - 1, -1, -1)) & 1
    steps = np.where(bits == 1, hi, lo).astype(np.int64)
    if g.kind == LATTICE_HD:
        steps = steps.reshape(2**k, g.m - 1, g.d)
    return steps


# -- fields ------------------------------------------------------------------


@dataclass(frozen=True)
class NodeField:
    """Node values of one realization, flat and layer-major.

    ``values`` may carry leading batch dimensions; the last axis always has
    one entry per node.
    """
    graph: LayeredDag
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 0 or v.shape[-1] != self.graph.n_nodes:
            raise ValueError(f"field has {v.shape[-1] if v.ndim else 0} values, graph has {self.graph.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def layer(self, i: int) -> np.ndarray:
        return self.values[..., self.graph.layer_slice(i)]

    def at(self, v: NodeRef):
        return self.values[..., node_index(self.graph, v)]


def sample_null_field(g: LayeredDag, fam, rng: np.random.Generator) -> NodeField:
    """Every node an independent draw from the family's base distribution."""
    return NodeField(g, fam.sample(0.0, rng, size=g.n_nodes))


def plant_path(field: NodeField, p, fam, theta: float, rng: np.random.Generator) -> NodeField:
    """Redraw the values on the path from the tilted distribution at ``theta``."""
    fam.check_theta(theta)
    idx = path_indices(field.graph, p)
    values = field.values.copy()
    values[..., idx] = fam.sample(theta, rng, size=values[..., idx].shape)
    return NodeField(field.graph, values)
