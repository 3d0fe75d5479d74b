"""Realizability of constraint sets and deterministic witness graphs.

All constructions are greedy and break ties by the lowest node index, so the
same constraints always produce the same witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import (
    LinkCountConstraint,
    ModelSpec,
    MultilayerGraph,
    Pair,
    layer_offsets,
    validate,
)


class NotRealizableError(ValueError):
    pass


def erdos_gallai(k: Sequence[int]) -> bool:
    """True iff ``k`` is the degree sequence of some simple graph."""
    d = sorted((int(x) for x in k), reverse=True)
    if any(x < 0 for x in d):
        return False
    n = len(d)
    if sum(d) % 2:
        return False
    if n and d[0] > n - 1:
        return False
    lhs = 0
    for j in range(1, n + 1):
        lhs += d[j - 1]
        rhs = j * (j - 1) + sum(min(j, x) for x in d[j:])
        if lhs > rhs:
            return False
    return True


def gale_ryser(top: Sequence[int], bottom: Sequence[int]) -> bool:
    """True iff a 0/1 matrix with row sums ``top`` and column sums ``bottom`` exists."""
    a = sorted((int(x) for x in top), reverse=True)
    b = [int(x) for x in bottom]
    if any(x < 0 for x in a) or any(x < 0 for x in b):
        return False
    if sum(a) != sum(b):
        return False
    if a and a[0] > len(b):
        return False
    lhs = 0
    for j in range(1, len(a) + 1):
        lhs += a[j - 1]
        if lhs > sum(min(x, j) for x in b):
            return False
    return True


def _havel_hakimi(k: Sequence[int]) -> np.ndarray:
    n = len(k)
    A = np.zeros((n, n), dtype=bool)
    res = [int(x) for x in k]
    order = lambda i: (-res[i], i)  # noqa: E731
    while True:
        active = [i for i in range(n) if res[i] > 0]
        if not active:
            return A
        v = min(active, key=order)
        d = res[v]
        res[v] = 0
        cands = sorted((i for i in range(n) if i != v and res[i] > 0), key=order)
        if len(cands) < d:
            raise NotRealizableError("not graphical")
        for u in cands[:d]:
            A[u, v] = A[v, u] = True
            res[u] -= 1


def realize_unipartite(k: Sequence[int]) -> MultilayerGraph:
    """Deterministic simple graph with degree sequence exactly ``k``."""
    if not erdos_gallai(k):
        raise NotRealizableError("not graphical")
    return MultilayerGraph((len(k),), _havel_hakimi(k))


def _ryser_fill(top: Sequence[int], bottom: Sequence[int]) -> np.ndarray:
    n1, n2 = len(top), len(bottom)
    B = np.zeros((n1, n2), dtype=bool)
    col = [int(x) for x in bottom]
    rows = sorted(range(n1), key=lambda i: (-top[i], i))
    for i in rows:
        d = int(top[i])
        cands = sorted((j for j in range(n2) if col[j] > 0), key=lambda j: (-col[j], j))
        if len(cands) < d:
            raise NotRealizableError("not bigraphical")
        for j in cands[:d]:
            B[i, j] = True
            col[j] -= 1
    if any(col):
        raise NotRealizableError("not bigraphical")
    return B


def realize_bipartite(top: Sequence[int], bottom: Sequence[int]) -> MultilayerGraph:
    """Deterministic bipartite graph with the given row and column degrees."""
    if not gale_ryser(top, bottom):
        raise NotRealizableError("not bigraphical")
    B = _ryser_fill(top, bottom)
    n1, n2 = B.shape
    A = np.zeros((n1 + n2, n1 + n2), dtype=bool)
    A[:n1, n1:] = B
    A[n1:, :n1] = B.T
    return MultilayerGraph((n1, n2), A)


@dataclass(frozen=True)
class RealizabilityReport:
    feasible: bool
    witness: MultilayerGraph | None = None
    failing_block: Pair | None = None
    reason: str = ""


def _lexicographic_fill(count: int, rows: int, cols: int, intra: bool) -> np.ndarray:
    B = np.zeros((rows, cols), dtype=bool)
    if intra:
        pairs = combinations(range(rows), 2)
    else:
        pairs = ((i, j) for i in range(rows) for j in range(cols))
    for _, (i, j) in zip(range(count), pairs):
        B[i, j] = True
    if intra:
        B = B | B.T
    return B


def realize_block(model: ModelSpec, constraint) -> np.ndarray:
    """Sub-adjacency (rows: lower layer, columns: higher layer) realizing one block."""
    s, t = constraint.key
    ns, nt = model.layer_sizes[s], model.layer_sizes[t]
    if isinstance(constraint, LinkCountConstraint):
        if not 0 <= constraint.count <= model.capacity(s, t):
            raise NotRealizableError(f"link count {constraint.count} out of range")
        return _lexicographic_fill(constraint.count, ns, nt, s == t)
    if constraint.intra:
        return realize_unipartite(constraint.forward).adjacency
    low, high = constraint.oriented()
    if low is None or high is None:
        # one side free: each constrained node takes its lowest-index partners
        B = np.zeros((ns, nt), dtype=bool)
        if low is not None:
            for i, d in enumerate(low):
                if d > nt:
                    raise NotRealizableError("degree exceeds opposite layer size")
                B[i, :d] = True
        else:
            for j, d in enumerate(high):
                if d > ns:
                    raise NotRealizableError("degree exceeds opposite layer size")
                B[:d, j] = True
        return B
    if not gale_ryser(low, high):
        raise NotRealizableError("not bigraphical")
    return _ryser_fill(low, high)


def realize_model(model: ModelSpec) -> RealizabilityReport:
    """Build a witness blockwise; blocks are disjoint edge sets so this is exact."""
    violations = validate(model)
    if violations:
        v = violations[0]
        return RealizabilityReport(False, failing_block=v.pair, reason=str(v))
    off = layer_offsets(model.layer_sizes)
    A = np.zeros((model.n, model.n), dtype=bool)
    for c in model.constraints:
        s, t = c.key
        try:
            B = realize_block(model, c)
        except NotRealizableError as exc:
            return RealizabilityReport(False, failing_block=(s, t), reason=str(exc))
        A[off[s]:off[s + 1], off[t]:off[t + 1]] |= B
        A[off[t]:off[t + 1], off[s]:off[s + 1]] |= B.T
    return RealizabilityReport(True, witness=MultilayerGraph(model.layer_sizes, A))


def block_feasible(model: ModelSpec, constraint) -> bool:
    s, t = constraint.key
    if isinstance(constraint, LinkCountConstraint):
        return 0 <= constraint.count <= model.capacity(s, t)
    if constraint.intra:
        return erdos_gallai(constraint.forward)
    low, high = constraint.oriented()
    if low is None or high is None:
        vec, cap = (low, model.layer_sizes[t]) if low is not None else (high, model.layer_sizes[s])
        return all(0 <= d <= cap for d in vec)
    return gale_ryser(low, high)


__all__ = [
    "NotRealizableError",
    "RealizabilityReport",
    "erdos_gallai",
    "gale_ryser",
    "realize_unipartite",
    "realize_bipartite",
    "realize_block",
    "realize_model",
    "block_feasible",
]
