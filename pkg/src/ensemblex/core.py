"""Domain model shared by every other module.

Layers are indexed ``0..M-1`` in the Python API and nodes ``0..n-1`` globally,
with each layer occupying a contiguous range of node ids in layer order.  A
block is an unordered layer pair ``(s, t)`` with ``s <= t``; intra-layer blocks
have ``s == t``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Pair = tuple[int, int]


def block_key(s: int, t: int) -> Pair:
    """Return the canonical (sorted) key for the block between layers s and t."""
    return (s, t) if s <= t else (t, s)


def _as_degree_vector(values: Iterable[int]) -> tuple[int, ...]:
    out = []
    for v in values:
        iv = int(v)
        if iv != v:
            raise ValueError(f"degree entries must be integers, got {v!r}")
        out.append(iv)
    return tuple(out)


# ---------------------------------------------------------------------------
# Master graph and multilayer graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MasterGraph:
    """Symmetric 0/1 layer adjacency; diagonal entries allow intra-layer links."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=bool)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise ValueError("master graph must be a non-empty square matrix")
        if not np.array_equal(g, g.T):
            raise ValueError("master graph must be symmetric")
        g = g.copy()
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def M(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def from_pairs(cls, M: int, pairs: Iterable[Pair]) -> "MasterGraph":
        g = np.zeros((M, M), dtype=bool)
        for s, t in pairs:
            g[s, t] = g[t, s] = True
        return cls(g)

    @classmethod
    def complete(cls, M: int, self_loops: bool = True) -> "MasterGraph":
        g = np.ones((M, M), dtype=bool)
        if not self_loops:
            np.fill_diagonal(g, False)
        return cls(g)

    def admits(self, s: int, t: int) -> bool:
        return bool(self.gamma[s, t])

    def blocks(self) -> list[Pair]:
        """Admissible unordered pairs ``(s, t)``, ``s <= t``, in lexicographic order."""
        M = self.M
        return [(s, t) for s in range(M) for t in range(s, M) if self.gamma[s, t]]

    def ordered_pairs(self) -> list[Pair]:
        M = self.M
        return [(s, t) for s in range(M) for t in range(M) if self.gamma[s, t]]

    def __eq__(self, other):
        return isinstance(other, MasterGraph) and np.array_equal(self.gamma, other.gamma)

    def __hash__(self):
        return hash(self.gamma.tobytes())


def layer_offsets(layer_sizes: Sequence[int]) -> np.ndarray:
    """Start index of every layer plus the total node count as last entry."""
    return np.concatenate([[0], np.cumsum(np.asarray(layer_sizes, dtype=int))])


@dataclass(frozen=True, eq=False)
class MultilayerGraph:
    """Simple undirected graph whose nodes are split into contiguous layers.

    Parameters
    ----------
    layer_sizes : sequence of int
        Number of nodes ``n_s`` in each layer.
    adjacency : (n, n) array_like of bool
        Symmetric adjacency with zero diagonal.
    """

    layer_sizes: tuple[int, ...]
    adjacency: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(x) for x in self.layer_sizes)
        if any(x < 0 for x in sizes):
            raise ValueError("layer sizes must be non-negative")
        A = np.asarray(self.adjacency, dtype=bool)
        n = sum(sizes)
        if A.shape != (n, n):
            raise ValueError(f"adjacency shape {A.shape} does not match n={n}")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        if A.diagonal().any():
            raise ValueError("self-loops are not allowed")
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "adjacency", A)

    @classmethod
    def from_edges(cls, layer_sizes: Sequence[int], edges: Iterable[Pair]) -> "MultilayerGraph":
        n = int(sum(layer_sizes))
        A = np.zeros((n, n), dtype=bool)
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            A[u, v] = A[v, u] = True
        return cls(tuple(layer_sizes), A)

    @classmethod
    def empty(cls, layer_sizes: Sequence[int]) -> "MultilayerGraph":
        n = int(sum(layer_sizes))
        return cls(tuple(layer_sizes), np.zeros((n, n), dtype=bool))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def M(self) -> int:
        return len(self.layer_sizes)

    @property
    def layer_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.M), self.layer_sizes)

    def layer_slice(self, s: int) -> slice:
        off = layer_offsets(self.layer_sizes)
        return slice(int(off[s]), int(off[s + 1]))

    def block(self, s: int, t: int) -> np.ndarray:
        """Sub-adjacency rows in layer s, columns in layer t."""
        return self.adjacency[self.layer_slice(s), self.layer_slice(t)]

    def edges(self) -> list[Pair]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def is_admissible(self, master: MasterGraph) -> bool:
        if master.M != self.M:
            return False
        lay = self.layer_of
        i, j = np.nonzero(self.adjacency)
        return bool(np.all(master.gamma[lay[i], lay[j]]))

    def digest(self) -> str:
        """Short stable identifier of the edge set."""
        import hashlib

        h = hashlib.sha1(np.packbits(np.triu(self.adjacency, 1)).tobytes())
        h.update(repr(self.layer_sizes).encode())
        return h.hexdigest()[:12]

    def __eq__(self, other):
        return (
            isinstance(other, MultilayerGraph)
            and self.layer_sizes == other.layer_sizes
            and np.array_equal(self.adjacency, other.adjacency)
        )

    def __hash__(self):
        return hash((self.layer_sizes, self.adjacency.tobytes()))


def degree_matrix(g: MultilayerGraph, master: MasterGraph | None = None) -> dict[Pair, np.ndarray]:
    """Targeted degree sequences ``k_{s->t}(G)`` for every ordered admissible pair.

    Entry ``i`` of ``result[(s, t)]`` counts the neighbours of the i-th node of
    layer ``s`` lying in layer ``t``.  Without a master graph every ordered pair
    of layers is reported.
    """
    M = g.M
    pairs = master.ordered_pairs() if master is not None else [(s, t) for s in range(M) for t in range(M)]
    return {(s, t): g.block(s, t).sum(axis=1).astype(int) for s, t in pairs}


# ---------------------------------------------------------------------------
# Degree distributions and layer limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability mass on the non-negative integers (finite support)."""

    mass: Mapping[int, float]

    def __post_init__(self):
        clean = {}
        for k, p in self.mass.items():
            if int(k) != k or k < 0:
                raise ValueError(f"support must be non-negative integers, got {k!r}")
            if p < 0:
                raise ValueError("masses must be non-negative")
            if p > 0:
                clean[int(k)] = float(p)
        total = math.fsum(clean.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {total}, expected 1")
        object.__setattr__(self, "mass", dict(sorted(clean.items())))

    @classmethod
    def point(cls, k: int) -> "DegreeDistribution":
        return cls({k: 1.0})

    @property
    def support(self) -> list[int]:
        return list(self.mass)

    def __getitem__(self, k: int) -> float:
        return self.mass.get(k, 0.0)

    def items(self):
        return self.mass.items()

    def mean(self) -> float:
        return sum(k * p for k, p in self.mass.items())


def empirical_distribution(k: Sequence[int]) -> DegreeDistribution:
    """Empirical degree distribution ``f_n(k) = #{i: k_i = k} / n``."""
    k = _as_degree_vector(k)
    if not k:
        raise ValueError("empty sequence")
    if min(k) < 0:
        raise ValueError("degrees must be non-negative")
    n = len(k)
    counts = Counter(k)
    # exact fractions summed in sorted order keep the total within 1e-12
    return DegreeDistribution({d: c / n for d, c in sorted(counts.items())})


@dataclass(frozen=True)
class LayerLimits:
    """Limiting layer fractions ``A_s = lim n_s / n``."""

    A: tuple[float, ...]

    def __post_init__(self):
        A = tuple(float(a) for a in self.A)
        if not A or any(a < 0 or a > 1 for a in A):
            raise ValueError("layer fractions must lie in [0, 1]")
        if abs(math.fsum(A) - 1.0) > 1e-12:
            raise ValueError(f"layer fractions sum to {sum(A)}, expected 1")
        object.__setattr__(self, "A", A)

    @classmethod
    def uniform(cls, M: int) -> "LayerLimits":
        return cls(tuple([1.0 / M] * M))

    @classmethod
    def from_ratio(cls, c: float) -> "LayerLimits":
        """Two layers with ``c = A_2 / A_1``; ``c = inf`` puts all mass on layer 2."""
        if c < 0:
            raise ValueError("ratio must be non-negative")
        if np.isinf(c):
            return cls((0.0, 1.0))
        return cls((1.0 / (1.0 + c), c / (1.0 + c)))

    @property
    def M(self) -> int:
        return len(self.A)


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegreeConstraint:
    """Targeted degree constraint on the block between layers ``source`` and ``target``.

    ``forward`` is ``k*_{source->target}`` (one entry per node of ``source``).
    For inter-layer blocks ``backward`` is ``k*_{target->source}``; leaving it
    ``None`` constrains only the source side (the top-only bipartite case).
    Intra-layer blocks carry a single vector and ``backward`` must be ``None``.
    """

    source: int
    target: int
    forward: tuple[int, ...]
    backward: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "forward", _as_degree_vector(self.forward))
        if self.backward is not None:
            if self.source == self.target:
                raise ValueError("intra-layer degree constraints take a single vector")
            object.__setattr__(self, "backward", _as_degree_vector(self.backward))

    @property
    def key(self) -> Pair:
        return block_key(self.source, self.target)

    @property
    def intra(self) -> bool:
        return self.source == self.target

    @property
    def one_sided(self) -> bool:
        return not self.intra and self.backward is None

    def vectors(self) -> dict[Pair, tuple[int, ...]]:
        """Constrained directed degree vectors keyed by ordered pair."""
        out = {(self.source, self.target): self.forward}
        if self.backward is not None:
            out[(self.target, self.source)] = self.backward
        return out

    def oriented(self) -> tuple[tuple[int, ...], tuple[int, ...] | None]:
        """Vectors ordered as (lower layer side, higher layer side) of the block."""
        if self.source <= self.target:
            return self.forward, self.backward
        return self.backward, self.forward


@dataclass(frozen=True)
class LinkCountConstraint:
    """Fixed number of links between layers s and t (intra-layer links when s == t)."""

    s: int
    t: int
    count: int

    def __post_init__(self):
        if int(self.count) != self.count:
            raise ValueError("link count must be an integer")
        object.__setattr__(self, "count", int(self.count))

    @property
    def key(self) -> Pair:
        return block_key(self.s, self.t)

    @property
    def intra(self) -> bool:
        return self.s == self.t


Constraint = DegreeConstraint | LinkCountConstraint


@dataclass(frozen=True)
class ConstraintSet:
    """One constraint per admissible block; D and L are the degree / count blocks."""

    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def __iter__(self) -> Iterator[Constraint]:
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def by_block(self) -> dict[Pair, Constraint]:
        """Constraints keyed by block; duplicates keep the first (``validate`` flags them)."""
        out: dict[Pair, Constraint] = {}
        for c in self.constraints:
            out.setdefault(c.key, c)
        return out

    @property
    def D(self) -> set[Pair]:
        """Degree-constrained ordered pairs (both orientations of two-sided blocks)."""
        out = set()
        for c in self.constraints:
            if isinstance(c, DegreeConstraint):
                out.update(c.vectors())
        return out

    @property
    def L(self) -> set[Pair]:
        out = set()
        for c in self.constraints:
            if isinstance(c, LinkCountConstraint):
                out.update({(c.s, c.t), (c.t, c.s)})
        return out


@dataclass(frozen=True)
class ModelSpec:
    """Master graph, layer sizes, constraints and optional limiting fractions."""

    master: MasterGraph
    layer_sizes: tuple[int, ...]
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    limits: LayerLimits | None = None

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(x) for x in self.layer_sizes))
        if not isinstance(self.constraints, ConstraintSet):
            object.__setattr__(self, "constraints", ConstraintSet(tuple(self.constraints)))

    @property
    def n(self) -> int:
        return sum(self.layer_sizes)

    @property
    def M(self) -> int:
        return len(self.layer_sizes)

    def capacity(self, s: int, t: int) -> int:
        """Number of admissible node pairs in block (s, t)."""
        if s == t:
            return self.layer_sizes[s] * (self.layer_sizes[s] - 1) // 2
        return self.layer_sizes[s] * self.layer_sizes[t]


@dataclass(frozen=True)
class Violation:
    pair: Pair | None
    rule: str
    message: str

    def __str__(self):
        where = "model" if self.pair is None else f"block ({self.pair[0] + 1},{self.pair[1] + 1})"
        return f"{where}: {self.message}"


def validate(model: ModelSpec) -> list[Violation]:
    """Check a model against the constraint-set invariants.

    Returns an empty list iff the model is consistent.  Violations are data:
    each one names the offending block and the rule broken.
    """
    out: list[Violation] = []
    sizes = model.layer_sizes
    M = model.master.M
    if len(sizes) != M:
        out.append(Violation(None, "layers", f"{len(sizes)} layer sizes for a master graph with M={M}"))
        return out
    for s, n_s in enumerate(sizes):
        if n_s <= 0:
            out.append(Violation(None, "layers", f"layer {s + 1} has non-positive size {n_s}"))
    if model.limits is not None and model.limits.M != M:
        out.append(Violation(None, "limits", f"{model.limits.M} layer fractions for M={M}"))

    seen: set[Pair] = set()
    for c in model.constraints:
        key = c.key
        if not all(0 <= x < M for x in key):
            out.append(Violation(key, "layer-index", f"layer index out of range 1..{M}"))
            continue
        if key in seen:
            out.append(Violation(key, "duplicate", "more than one constraint on this block"))
            continue
        seen.add(key)
        if not model.master.admits(*key):
            out.append(Violation(key, "inadmissible", "constraint on a pair absent from the master graph"))
            continue
        if isinstance(c, LinkCountConstraint):
            cap = model.capacity(*key)
            if c.count < 0:
                out.append(Violation(key, "range", f"negative link count {c.count}"))
            elif c.count > cap:
                if c.intra:
                    msg = f"link count {c.count} exceeds n{key[0] + 1}(n{key[0] + 1}-1)/2={cap}"
                else:
                    msg = f"link count {c.count} exceeds n{key[0] + 1}n{key[1] + 1}={cap}"
                out.append(Violation(key, "range", msg))
        else:
            out.extend(_check_degrees(model, c))
    for key in model.master.blocks():
        if key not in seen:
            out.append(Violation(key, "unconstrained", "admissible block carries no constraint"))
    return out


def _check_degrees(model: ModelSpec, c: DegreeConstraint) -> list[Violation]:
    out = []
    key = c.key
    sizes = model.layer_sizes
    s, t = c.source, c.target
    for (a, b), vec in c.vectors().items():
        if len(vec) != sizes[a]:
            out.append(Violation(key, "length", f"k_{{{a + 1}->{b + 1}}} has {len(vec)} entries, layer has {sizes[a]}"))
            return out
        if vec and min(vec) < 0:
            out.append(Violation(key, "range", f"negative degree in k_{{{a + 1}->{b + 1}}}"))
            return out
        cap = sizes[b] - 1 if a == b else sizes[b]
        if vec and max(vec) > cap:
            out.append(Violation(key, "range", f"degree {max(vec)} in k_{{{a + 1}->{b + 1}}} exceeds {cap}"))
    if out:
        return out
    if c.intra:
        total = sum(c.forward)
        if total % 2:
            out.append(Violation(key, "parity", f"odd intra-layer degree sum {total}"))
    elif c.backward is not None:
        a, b = sum(c.forward), sum(c.backward)
        if a != b:
            out.append(Violation(key, "sum", f"sum mismatch {a}≠{b}"))
    return out


def unipartite_model(k: Sequence[int]) -> ModelSpec:
    """Single-layer model constraining the full degree sequence."""
    k = _as_degree_vector(k)
    return ModelSpec(
        MasterGraph.complete(1),
        (len(k),),
        ConstraintSet((DegreeConstraint(0, 0, k),)),
        LayerLimits((1.0,)),
    )


def link_count_model(n: int, L: int) -> ModelSpec:
    """Single-layer model constraining only the number of links."""
    return ModelSpec(MasterGraph.complete(1), (n,), ConstraintSet((LinkCountConstraint(0, 0, L),)), LayerLimits((1.0,)))


def bipartite_model(top: Sequence[int], bottom: Sequence[int] | None) -> ModelSpec:
    """Two-layer bipartite model; ``bottom=None`` constrains the top layer only.

    With ``bottom=None`` the size of the bottom layer cannot be inferred, so
    use :func:`top_only_model` instead.
    """
    if bottom is None:
        raise ValueError("use top_only_model for one-sided constraints")
    top, bottom = _as_degree_vector(top), _as_degree_vector(bottom)
    return ModelSpec(
        MasterGraph.from_pairs(2, [(0, 1)]),
        (len(top), len(bottom)),
        ConstraintSet((DegreeConstraint(0, 1, top, bottom),)),
    )


def top_only_model(top: Sequence[int], n2: int) -> ModelSpec:
    top = _as_degree_vector(top)
    return ModelSpec(
        MasterGraph.from_pairs(2, [(0, 1)]),
        (len(top), n2),
        ConstraintSet((DegreeConstraint(0, 1, top),)),
    )
