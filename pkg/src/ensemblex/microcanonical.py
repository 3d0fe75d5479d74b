"""Counting graphs under hard constraints.

Exact counters work on multisets of residual degrees with memoisation and
exact integer arithmetic; asymptotic counters evaluate the sparse-regime
formulas in log space.  A brute-force enumerator over every admissible graph
serves as the oracle for both.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from .core import LinkCountConstraint, ModelSpec, MultilayerGraph, Pair, layer_offsets, validate
from .graphical import erdos_gallai, gale_ryser

EXACT_UNIPARTITE_MAX_N = 12
EXACT_BIPARTITE_MAX_NODES = 14
EXACT_BIPARTITE_MAX_PAIRS = 24
ENUMERATION_MAX_PAIRS = 20


class CapExceededError(ValueError):
    pass


@dataclass(frozen=True)
class CountResult:
    """``log_omega`` is ``ln Omega`` in nats, ``-inf`` for an empty fiber.

    ``omega`` carries the exact integer when the count is exact and cheap to
    represent; ``per_block`` is filled by :func:`count_model`.
    """

    log_omega: float
    method: str
    correction_terms: dict = field(default_factory=dict)
    omega: int | None = None
    per_block: dict = field(default_factory=dict)


def _exact(omega: int, **terms) -> CountResult:
    return CountResult(math.log(omega) if omega > 0 else -math.inf, "exact", dict(terms), omega)


def _log_factorial(k) -> float:
    return math.lgamma(k + 1)


def _log_binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _choices(groups, d):
    """All ways to take ``a_v <= c_v`` items from each group with ``sum a_v = d``."""
    if not groups:
        if d == 0:
            yield ()
        return
    (_, c), rest = groups[0], groups[1:]
    cap_rest = sum(cc for _, cc in rest)
    for a in range(max(0, d - cap_rest), min(c, d) + 1):
        for tail in _choices(rest, d - a):
            yield (a,) + tail


def _take(groups, picks):
    """Residual multiset after decrementing ``a_v`` members of each group."""
    mult = 1
    out = []
    for (v, c), a in zip(groups, picks):
        mult *= math.comb(c, a)
        out.extend([v - 1] * a)
        out.extend([v] * (c - a))
    return mult, out


def _normalize(values) -> tuple[int, ...]:
    return tuple(sorted((v for v in values if v > 0), reverse=True))


@lru_cache(maxsize=None)
def _count_uni(state: tuple[int, ...]) -> int:
    if not state:
        return 1
    if not erdos_gallai(state):
        return 0
    d, rest = state[0], state[1:]
    groups = sorted(Counter(rest).items(), reverse=True)
    total = 0
    for picks in _choices(groups, d):
        mult, new = _take(groups, picks)
        total += mult * _count_uni(_normalize(new))
    return total


def count_exact_unipartite(k: Sequence[int], max_n: int = EXACT_UNIPARTITE_MAX_N) -> CountResult:
    """Exact number of labeled simple graphs with degree sequence ``k``.

    The highest residual degree is connected first; nodes with equal residual
    degree are interchangeable, so each neighbour choice is weighted by a
    product of binomials instead of being enumerated.

    Raises
    ------
    CapExceededError
        If ``len(k) > max_n``.
    """
    k = [int(x) for x in k]
    if len(k) > max_n:
        raise CapExceededError(f"n={len(k)} exceeds the exact-count cap {max_n}: use asymptotic")
    if any(x < 0 for x in k):
        return _exact(0)
    return _exact(_count_uni(_normalize(k)))


@lru_cache(maxsize=None)
def _count_bip(rows: tuple[int, ...], cols: tuple[int, ...]) -> int:
    if not cols:
        return 1 if not rows else 0
    if sum(rows) != sum(cols) or not gale_ryser(rows, cols):
        return 0
    d, rest = cols[0], cols[1:]
    groups = sorted(Counter(rows).items(), reverse=True)
    total = 0
    for picks in _choices(groups, d):
        mult, new = _take(groups, picks)
        total += mult * _count_bip(_normalize(new), rest)
    return total


def _bipartite_cap_ok(n1: int, n2: int) -> bool:
    return n1 + n2 <= EXACT_BIPARTITE_MAX_NODES or n1 * n2 <= EXACT_BIPARTITE_MAX_PAIRS


def count_exact_bipartite(top: Sequence[int], bottom: Sequence[int], enforce_cap: bool = True) -> CountResult:
    """Exact number of 0/1 matrices with row sums ``top`` and column sums ``bottom``.

    Columns are filled one at a time; the state is the multiset of residual
    row sums.  The cap admits ``n1 + n2 <= 14`` or ``n1 * n2 <= 24``.
    """
    top = [int(x) for x in top]
    bottom = [int(x) for x in bottom]
    if enforce_cap and not _bipartite_cap_ok(len(top), len(bottom)):
        raise CapExceededError(
            f"n1={len(top)}, n2={len(bottom)} exceeds the exact-count cap: use asymptotic"
        )
    if any(x < 0 for x in top + bottom) or sum(top) != sum(bottom):
        return _exact(0)
    return _exact(_count_bip(_normalize(top), _normalize(bottom)))


def count_asymptotic_unipartite(k: Sequence[int]) -> CountResult:
    """Sparse-regime asymptotic count.

    ``ln Omega = ln sqrt(2) + L (ln 2L - 1) - sum ln k_i! - (<k^2>/2<k>)^2 + 1/4``
    with ``L = sum k / 2``; the ``o(<k>^3 / n)`` term in the exponent is dropped.
    """
    k = np.asarray(k, dtype=float)
    n = len(k)
    total = k.sum()
    m_star = float(k.max()) if n else 0.0
    sparse = bool(m_star < math.sqrt(n)) if n else True
    if total == 0:
        return CountResult(0.0, "exact", {"empty": True, "sparse_regime": sparse}, 1)
    if int(total) % 2:
        return CountResult(-math.inf, "asymptotic", {"odd_degree_sum": True, "sparse_regime": sparse}, 0)
    L = total / 2
    kbar = total / n
    k2bar = float((k**2).sum()) / n
    correction = -((k2bar / (2 * kbar)) ** 2) + 0.25
    log_omega = (
        0.5 * math.log(2)
        + L * (math.log(2 * L) - 1)
        - sum(_log_factorial(x) for x in k)
        + correction
    )
    terms = {
        "sqrt2_prefactor": True,
        "exp_correction": correction,
        "dropped": "o(n^-1 kbar^3) in the exponent",
        "sparse_regime": sparse,
        "max_degree": m_star,
    }
    return CountResult(log_omega, "asymptotic", terms)


def count_asymptotic_bipartite(top: Sequence[int], bottom: Sequence[int]) -> CountResult:
    """Leading-order count ``ln L! - sum ln k_i! - sum ln k'_j!``."""
    top = np.asarray(top, dtype=float)
    bottom = np.asarray(bottom, dtype=float)
    L = top.sum()
    m1 = float(top.max()) if top.size else 0.0
    m2 = float(bottom.max()) if bottom.size else 0.0
    sparse = bool(m1 * m2 < L ** (2 / 3)) if L > 0 else True
    if L != bottom.sum():
        return CountResult(-math.inf, "asymptotic", {"sum_mismatch": True}, 0)
    log_omega = _log_factorial(L) - sum(_log_factorial(x) for x in top) - sum(_log_factorial(x) for x in bottom)
    terms = {"dropped": "exp(o(n1 + n2))", "sparse_regime": sparse, "max_degree_product": m1 * m2}
    return CountResult(log_omega, "asymptotic", terms)


# closed forms also carry the integer count up to this many pairs
CLOSED_FORM_INT_MAX_PAIRS = 4096


def count_top_only(top: Sequence[int], n2: int) -> CountResult:
    """``ln Omega = sum_i ln C(n2, k_i)``; exact at every size."""
    if any(k < 0 or k > n2 for k in top):
        return CountResult(-math.inf, "exact", {"closed_form": True}, 0)
    omega = math.prod(math.comb(n2, int(k)) for k in top) if len(top) * n2 <= CLOSED_FORM_INT_MAX_PAIRS else None
    return CountResult(sum(_log_binom(n2, int(k)) for k in top), "exact", {"closed_form": True}, omega)


def count_link_only(L: int, capacity: int) -> CountResult:
    """``ln C(capacity, L)``; exact at every size."""
    omega = math.comb(int(capacity), int(L)) if capacity <= CLOSED_FORM_INT_MAX_PAIRS else None
    return CountResult(_log_binom(int(capacity), int(L)), "exact", {"closed_form": True}, omega)


def count_block(model: ModelSpec, constraint, mode: str = "exact") -> CountResult:
    if mode not in ("exact", "asymptotic"):
        raise ValueError(f"unknown mode {mode!r}")
    s, t = constraint.key
    if isinstance(constraint, LinkCountConstraint):
        return count_link_only(constraint.count, model.capacity(s, t))
    if constraint.intra:
        if mode == "exact":
            return count_exact_unipartite(constraint.forward)
        return count_asymptotic_unipartite(constraint.forward)
    low, high = constraint.oriented()
    if high is None:
        return count_top_only(low, model.layer_sizes[t])
    if low is None:
        return count_top_only(high, model.layer_sizes[s])
    if mode == "exact":
        return count_exact_bipartite(low, high)
    return count_asymptotic_bipartite(low, high)


def count_model(model: ModelSpec, mode: str = "exact") -> CountResult:
    """``ln Omega`` of the whole model as the sum of per-block counts."""
    problems = validate(model)
    if problems:
        raise ValueError("; ".join(str(v) for v in problems))
    per_block: dict[Pair, CountResult] = {}
    for c in model.constraints:
        per_block[c.key] = count_block(model, c, mode)
    total = sum((r.log_omega for r in per_block.values()), 0.0)
    methods = {r.method for r in per_block.values()}
    method = "exact" if methods <= {"exact"} else "asymptotic"
    omega = None
    if method == "exact" and all(r.omega is not None for r in per_block.values()):
        omega = math.prod(r.omega for r in per_block.values())
    if any(r.log_omega == -math.inf for r in per_block.values()):
        total, omega = -math.inf, 0
    return CountResult(total, method, {"blocks": len(per_block)}, omega, per_block)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Enumeration:
    """Every admissible graph on fixed layers, one row of ``bits`` per graph.

    Column ``e`` of ``bits`` is the pair ``(rows[e], cols[e])`` in global node
    ids, ``rows[e] < cols[e]``.
    """

    layer_sizes: tuple[int, ...]
    rows: np.ndarray
    cols: np.ndarray
    bits: np.ndarray

    def __len__(self):
        return self.bits.shape[0]

    def graph(self, index: int) -> MultilayerGraph:
        sel = self.bits[index].astype(bool)
        return MultilayerGraph.from_edges(self.layer_sizes, zip(self.rows[sel].tolist(), self.cols[sel].tolist()))

    def targeted_degrees(self, s: int, t: int) -> np.ndarray:
        """``(graphs, n_s)`` array of ``k_{s->t}`` for every graph."""
        off = layer_offsets(self.layer_sizes)
        layer = np.repeat(np.arange(len(self.layer_sizes)), self.layer_sizes)
        out = np.zeros((len(self), self.layer_sizes[s]), dtype=np.int64)
        for e, (i, j) in enumerate(zip(self.rows, self.cols)):
            if layer[i] == s and layer[j] == t:
                out[:, i - off[s]] += self.bits[:, e]
            if layer[j] == s and layer[i] == t:
                out[:, j - off[s]] += self.bits[:, e]
        return out

    def block_links(self, s: int, t: int) -> np.ndarray:
        layer = np.repeat(np.arange(len(self.layer_sizes)), self.layer_sizes)
        a, b = layer[self.rows], layer[self.cols]
        sel = ((a == s) & (b == t)) | ((a == t) & (b == s))
        return self.bits[:, sel].sum(axis=1)


def enumerate_graphs(model_or_sizes, master=None, max_pairs: int = ENUMERATION_MAX_PAIRS) -> Enumeration:
    """Enumerate all graphs whose edges respect the master graph."""
    if isinstance(model_or_sizes, ModelSpec):
        sizes, master = model_or_sizes.layer_sizes, model_or_sizes.master
    else:
        sizes = tuple(model_or_sizes)
    n = sum(sizes)
    layer = np.repeat(np.arange(len(sizes)), sizes)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if master.admits(layer[i], layer[j])]
    if len(pairs) > max_pairs:
        raise CapExceededError(f"{len(pairs)} admissible pairs exceed the enumeration cap {max_pairs}")
    E = len(pairs)
    rows = np.array([p[0] for p in pairs], dtype=int)
    cols = np.array([p[1] for p in pairs], dtype=int)
    codes = np.arange(2**E, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(E)) & 1).astype(np.int8)
    return Enumeration(tuple(sizes), rows, cols, bits)


def fiber_mask(model: ModelSpec, en: Enumeration) -> np.ndarray:
    """Boolean mask of the enumerated graphs that satisfy every hard constraint."""
    mask = np.ones(len(en), dtype=bool)
    for c in model.constraints:
        if isinstance(c, LinkCountConstraint):
            mask &= en.block_links(c.s, c.t) == c.count
        else:
            for (a, b), vec in c.vectors().items():
                mask &= np.all(en.targeted_degrees(a, b) == np.asarray(vec), axis=1)
    return mask


def count_by_enumeration(model: ModelSpec) -> int:
    return int(fiber_mask(model, enumerate_graphs(model)).sum())
