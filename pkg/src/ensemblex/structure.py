"""Modularity, scale-free limits and builders for named multilayer families."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import mpmath
import numpy as np
from scipy.special import zeta as _hurwitz_zeta

from .core import (
    ConstraintSet,
    DegreeConstraint,
    DegreeDistribution,
    LayerLimits,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    Pair,
)
from .entropy import g


# ---------------------------------------------------------------------------
# Partitions and modularity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Community label ``sigma[i]`` in ``0..M-1`` for every node."""

    sigma: tuple[int, ...]

    def __post_init__(self):
        sig = tuple(int(x) for x in self.sigma)
        if any(x < 0 for x in sig):
            raise ValueError("community labels must be non-negative")
        object.__setattr__(self, "sigma", sig)

    @property
    def M(self) -> int:
        return max(self.sigma, default=-1) + 1

    @classmethod
    def from_layers(cls, g: MultilayerGraph) -> "Partition":
        return cls(tuple(g.layer_of.tolist()))


@dataclass(frozen=True, eq=False)
class BlockLinkMatrix:
    """``L[s, t] = sum_{i in layer s} k_i^{(t)}``; diagonal entries count intra links twice."""

    L: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("block link matrix must be square")
        if not np.array_equal(L, L.T):
            raise ValueError("block link matrix must be symmetric")
        if np.any(L < 0) or np.any(L != np.round(L)):
            raise ValueError("block link matrix entries must be non-negative integers")
        L = L.astype(np.int64)
        L.setflags(write=False)
        object.__setattr__(self, "L", L)

    @classmethod
    def from_graph(cls, g: MultilayerGraph, sigma: Partition | None = None) -> "BlockLinkMatrix":
        labels = np.array(sigma.sigma if sigma is not None else g.layer_of, dtype=int)
        if labels.size != g.n:
            raise ValueError("partition does not cover every node exactly once")
        M = int(labels.max()) + 1 if labels.size else 0
        onehot = np.zeros((g.n, M), dtype=np.int64)
        onehot[np.arange(g.n), labels] = 1
        A = g.adjacency.astype(np.int64)
        return cls(onehot.T @ A @ onehot)


def _labels(g: MultilayerGraph, sigma: Partition) -> np.ndarray:
    labels = np.asarray(sigma.sigma)
    if labels.size != g.n:
        raise ValueError(f"partition has {labels.size} labels for {g.n} nodes")
    return labels


def modularity(
    g: MultilayerGraph,
    sigma: Partition,
    K: float | None = None,
    include_self_pairs: bool = False,
) -> float:
    """``K * sum_{i<j} (g_ij - k_i k_j / 2L) [sigma_i = sigma_j]``.

    ``K`` defaults to ``1 / 2L``.  With ``include_self_pairs=True`` the null
    model also assigns ``k_i^2 / 2L`` to each node with itself, i.e. the sum
    runs over all ordered pairs and is halved; only that variant reduces to
    the block-link form used by :func:`community_condition`.
    """
    labels = _labels(g, sigma)
    A = g.adjacency.astype(np.int64)
    k = A.sum(axis=1)
    two_L = int(k.sum())
    if two_L == 0:
        raise ValueError("no links")
    if K is None:
        K = 1.0 / two_L
    # Q = K * (2L * a - b) / 2L with integer a, b, so equality gives exactly 0
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(g.n, 1)
    mask = same[iu]
    a = int(A[iu][mask].sum())
    b = int((k[iu[0]] * k[iu[1]])[mask].sum())
    if include_self_pairs:
        b2 = 2 * b + int((k * k).sum())  # twice the null mass, self terms included once
        return K * (2 * two_L * a - b2) / (2 * two_L)
    return K * (two_L * a - b) / two_L


def modularity_from_blocks(L: BlockLinkMatrix, K: float | None = None) -> float:
    """``K/2 * sum_s (L_ss - (sum_t L_st)^2 / sum_{s,t} L_st)``."""
    total = float(L.L.sum())
    if total == 0:
        raise ValueError("no links")
    if K is None:
        K = 1.0 / total
    rows = L.L.sum(axis=1).astype(float)
    return K / 2 * float(np.trace(L.L) - (rows**2).sum() / total)


def community_condition(L: BlockLinkMatrix) -> bool:
    """``sum_s L_ss > sum_s (sum_t L_st)^2 / sum_{s,t} L_st``, decided in integers."""
    total = int(L.L.sum())
    if total == 0:
        raise ValueError("zero total links")
    rows = L.L.sum(axis=1)
    return int(np.trace(L.L)) * total > int((rows.astype(object) ** 2).sum())


# ---------------------------------------------------------------------------
# Zeta and scale-free limits
# ---------------------------------------------------------------------------


def zeta(gamma: float, tol: float = 1e-12) -> float:
    """Riemann zeta ``sum_{k>=1} k^-gamma`` for ``gamma > 1``."""
    if gamma <= 1:
        raise ValueError("zeta diverges for gamma <= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    return float(_hurwitz_zeta(gamma, 1))


# terms kept from the asymptotic series of g(k) - ln(2 pi k)/2 in the tail
_G_SERIES = ((1, 1 / 12), (3, -1 / 360), (5, 1 / 1260))
_G_SERIES_NEXT = 1 / 1680


def s_infinity_scale_free(gamma: float, tol: float = 1e-10) -> float:
    """``(1 / zeta(gamma)) * sum_{k>=1} g(k) k^-gamma``.

    Terms below a cut-off ``N`` are summed directly.  Above it
    ``g(k) = ln(2 pi k)/2 + 1/12k - 1/360k^3 + 1/1260k^5 + O(k^-7)``, so the
    tail is a combination of Hurwitz zeta values and one derivative; ``N``
    grows until the neglected ``O(k^-7)`` part is below ``tol``.
    """
    if gamma <= 1:
        raise ValueError("the scale-free series diverges for gamma <= 1")
    N = 64
    while _G_SERIES_NEXT * float(_hurwitz_zeta(gamma + 7, N)) > tol:
        N *= 2
    k = np.arange(1, N, dtype=float)
    head = math.fsum(g(k) * k**-gamma)
    with mpmath.workdps(30):
        s = mpmath.mpf(gamma)
        tail = mpmath.log(2 * mpmath.pi) / 2 * mpmath.zeta(s, N) - mpmath.zeta(s, N, 1) / 2
        for power, coef in _G_SERIES:
            tail += coef * mpmath.zeta(s + power, N)
        total = (head + tail) / mpmath.zeta(s)
    return float(total)


def truncated_power_law(gamma: float, k_c: int) -> DegreeDistribution:
    """``f(k)`` proportional to ``k^-gamma`` on ``1..k_c``."""
    if gamma <= 1:
        raise ValueError("gamma must exceed 1")
    if k_c < 1:
        raise ValueError("cut-off must be at least 1")
    w = np.arange(1, k_c + 1, dtype=float) ** -gamma
    total = math.fsum(w)
    return DegreeDistribution({k + 1: float(x / total) for k, x in enumerate(w)})


# ---------------------------------------------------------------------------
# Named families
# ---------------------------------------------------------------------------

FAMILIES = ("multipartite", "multiplex", "block_model", "targeted_block_model", "interdependent", "networks_of_networks")


def _two_sided(targeted: Mapping[Pair, Sequence[int]], s: int, t: int) -> DegreeConstraint:
    try:
        return DegreeConstraint(s, t, targeted[(s, t)], targeted[(t, s)])
    except KeyError as exc:
        raise ValueError(f"missing targeted degrees for ({s + 1},{t + 1}) or its reverse") from exc


def _equal_split(n: int, M: int) -> tuple[int, ...]:
    if M < 1:
        raise ValueError("need at least one layer")
    if n % M:
        raise ValueError(f"n={n} is not divisible by M={M}")
    return (n // M,) * M


def _check_vectors(vectors, sizes):
    if len(vectors) != len(sizes):
        raise ValueError(f"{len(vectors)} degree vectors for {len(sizes)} layers")
    for s, (v, n_s) in enumerate(zip(vectors, sizes)):
        if len(v) != n_s:
            raise ValueError(f"layer {s + 1}: {len(v)} degrees for {n_s} nodes")


def build_family(family: str, **params) -> ModelSpec:
    """Build the model of a named family.

    Parameters by family (layers are 0-based, ``targeted`` maps ordered pairs
    ``(s, t)`` to ``k_{s->t}``, ``limits`` is an optional :class:`LayerLimits`):

    * ``multipartite``: ``layer_sizes``, ``targeted`` for every ``s != t``.
    * ``multiplex``: ``n``, ``M``, ``degrees`` (one vector per layer).
    * ``block_model``: ``layer_sizes``, ``counts`` (symmetric matrix of link
      counts, diagonal = intra-layer links).
    * ``targeted_block_model``: ``layer_sizes``, ``targeted`` for every pair.
    * ``interdependent``: ``n``, ``M``, ``degrees``, ``targeted`` for the
      inter-layer pairs that carry links.
    * ``networks_of_networks``: ``layer_sizes``, ``degrees``, ``inter_links``
      mapping ``(s, t)``, ``s < t``, to a link count.
    """
    limits = params.pop("limits", None)
    if family == "multipartite":
        sizes = tuple(params.pop("layer_sizes"))
        targeted = params.pop("targeted")
        M = len(sizes)
        master = MasterGraph.complete(M, self_loops=False)
        cons = [_two_sided(targeted, s, t) for s in range(M) for t in range(s + 1, M)]
    elif family in ("multiplex", "interdependent"):
        n, M = int(params.pop("n")), int(params.pop("M"))
        sizes = _equal_split(n, M)
        degrees = params.pop("degrees")
        _check_vectors(degrees, sizes)
        cons = [DegreeConstraint(s, s, degrees[s]) for s in range(M)]
        pairs = [(s, s) for s in range(M)]
        if family == "interdependent":
            targeted = params.pop("targeted")
            inter = sorted({(min(s, t), max(s, t)) for s, t in targeted if s != t})
            cons += [_two_sided(targeted, s, t) for s, t in inter]
            pairs += inter
        master = MasterGraph.from_pairs(M, pairs)
        if limits is None:
            limits = LayerLimits.uniform(M)
    elif family == "block_model":
        sizes = tuple(params.pop("layer_sizes"))
        counts = np.asarray(params.pop("counts"))
        M = len(sizes)
        if counts.shape != (M, M) or not np.array_equal(counts, counts.T):
            raise ValueError("counts must be a symmetric M x M matrix")
        master = MasterGraph.complete(M)
        cons = [LinkCountConstraint(s, t, int(counts[s, t])) for s in range(M) for t in range(s, M)]
    elif family == "targeted_block_model":
        sizes = tuple(params.pop("layer_sizes"))
        targeted = params.pop("targeted")
        M = len(sizes)
        master = MasterGraph.complete(M)
        cons = []
        for s in range(M):
            if (s, s) not in targeted:
                raise ValueError(f"missing targeted degrees for ({s + 1},{s + 1})")
            cons.append(DegreeConstraint(s, s, targeted[(s, s)]))
            cons += [_two_sided(targeted, s, t) for t in range(s + 1, M)]
    elif family == "networks_of_networks":
        sizes = tuple(params.pop("layer_sizes"))
        degrees = params.pop("degrees")
        _check_vectors(degrees, sizes)
        inter = params.pop("inter_links", {})
        M = len(sizes)
        pairs = [(s, s) for s in range(M)] + [tuple(sorted(p)) for p in inter]
        master = MasterGraph.from_pairs(M, pairs)
        cons = [DegreeConstraint(s, s, degrees[s]) for s in range(M)]
        cons += [LinkCountConstraint(min(s, t), max(s, t), int(L)) for (s, t), L in inter.items()]
    else:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if params:
        raise ValueError(f"unexpected parameters for {family}: {sorted(params)}")
    return ModelSpec(master, sizes, ConstraintSet(tuple(cons)), limits)
