"""Sampling from both ensembles.

Random streams come from ``Philox`` keyed by ``SeedSequence([seed, replica])``:
replicas are independent and a fixed seed reproduces every draw bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .canonical import CanonicalSolution
from .core import ConstraintSet, DegreeConstraint, MultilayerGraph, Pair, layer_offsets

# bound on uniforms drawn per chunk by the batched canonical sampler
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class SamplerConfig:
    """``burn_in=None`` means 10 moves per edge of the witness."""

    seed: int
    swap_steps: int = 0
    burn_in: int | None = None
    replicas: int = 1

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.swap_steps < 0:
            raise ValueError("swap_steps must be >= 0")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")


def rng_for(seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replica])))


# ---------------------------------------------------------------------------
# Canonical ensemble
# ---------------------------------------------------------------------------


def _block_pairs(sol: CanonicalSolution):
    """Global node pairs and probabilities of every block, in block order."""
    off = layer_offsets(sol.layer_sizes)
    out = []
    for (s, t) in sorted(sol.blocks):
        b = sol.blocks[(s, t)]
        r, c = np.nonzero(b.pair_mask)
        out.append(((s, t), r + off[s], c + off[t], b.edge_prob[r, c]))
    return out


def sample_canonical(sol: CanonicalSolution, cfg: SamplerConfig, replica: int = 0) -> MultilayerGraph:
    """One graph with every admissible pair present independently with probability ``p*``."""
    rng = rng_for(cfg.seed, replica)
    A = np.zeros((sol.n, sol.n), dtype=bool)
    for _, r, c, p in _block_pairs(sol):
        e = rng.random(p.size) < p
        A[r[e], c[e]] = True
        A[c[e], r[e]] = True
    return MultilayerGraph(sol.layer_sizes, A)


def canonical_pair_samples(sol: CanonicalSolution, cfg: SamplerConfig, count: int, replica: int = 0):
    """Draw ``count`` graphs in batch.

    Returns ``(rows, cols, bits)`` where ``bits[m, e]`` tells whether pair
    ``(rows[e], cols[e])`` is present in draw ``m``.
    """
    rng = rng_for(cfg.seed, replica)
    parts = _block_pairs(sol)
    rows = np.concatenate([r for _, r, _, _ in parts]) if parts else np.zeros(0, int)
    cols = np.concatenate([c for _, _, c, _ in parts]) if parts else np.zeros(0, int)
    p = np.concatenate([q for _, _, _, q in parts]) if parts else np.zeros(0)
    bits = np.empty((count, p.size), dtype=bool)
    step = max(1, _CHUNK_ENTRIES // max(p.size, 1))
    for start in range(0, count, step):
        stop = min(count, start + step)
        bits[start:stop] = rng.random((stop - start, p.size)) < p
    return rows, cols, bits


@dataclass(frozen=True)
class ConstraintMoments:
    """Monte-Carlo moments of one constrained quantity.

    ``kind`` is ``"degrees"`` (``pair`` ordered, arrays per node) or ``"links"``.
    """

    kind: str
    pair: Pair
    mean: np.ndarray
    variance: np.ndarray
    samples: int

    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.variance / self.samples)


def estimate_constraint_fluctuations(
    sol: CanonicalSolution, cfg: SamplerConfig, samples: int = 10_000
) -> list[ConstraintMoments]:
    """Sample the canonical measure and report mean and variance of every constraint.

    Degree and one-sided blocks report the targeted degrees of both sides;
    count blocks report the number of links.
    """
    off = layer_offsets(sol.layer_sizes)
    out = []
    for i, (s, t) in enumerate(sorted(sol.blocks)):
        b = sol.blocks[(s, t)]
        sub = CanonicalSolution(sol.layer_sizes, sol.master, {(s, t): b})
        rows, cols, bits = canonical_pair_samples(sub, cfg, samples, replica=i)
        x = bits.astype(np.float64)
        if b.kind == "count":
            L = x.sum(axis=1)
            out.append(ConstraintMoments("links", (s, t), np.array(L.mean()), np.array(L.var(ddof=1)), samples))
            continue
        sides = [(s, t)] if s == t else [(s, t), (t, s)]
        for a, c in sides:
            n_a = sol.layer_sizes[a]
            inc = np.zeros((rows.size, n_a))
            E = np.arange(rows.size)
            if s == t:
                inc[E, rows - off[a]] = 1.0
                inc[E, cols - off[a]] = 1.0
            else:
                # rows lie in layer s, columns in layer t
                ends = rows if a == s else cols
                inc[E, ends - off[a]] = 1.0
            k = x @ inc
            out.append(
                ConstraintMoments("degrees", (a, c), k.mean(axis=0), k.var(axis=0, ddof=1), samples)
            )
    return out


# ---------------------------------------------------------------------------
# Microcanonical ensemble
# ---------------------------------------------------------------------------


class _Block:
    """Mutable edge list of one block with O(1) edge replacement."""

    def __init__(self, kind, s, t, edges, side=None):
        self.kind = kind  # "intra", "inter", "top", "count"
        self.s, self.t = s, t
        self.edges = list(edges)
        self.where = {e: i for i, e in enumerate(self.edges)}
        self.side = side

    def replace(self, old, new):
        i = self.where.pop(old)
        self.edges[i] = new
        self.where[new] = i


class MicrocanonicalChain:
    """Markov chain with uniform stationary law on the fiber of a witness.

    Degree blocks use double edge swaps; link-count blocks move one edge to a
    uniformly chosen empty pair; one-sided degree blocks redraw the partner
    set of one constrained node uniformly.  Every proposal is symmetric and
    rejected moves leave the state unchanged.
    """

    def __init__(self, witness: MultilayerGraph, constraints: ConstraintSet, seed: int, replica: int = 0):
        self.layer_sizes = witness.layer_sizes
        self.A = np.array(witness.adjacency, dtype=bool)
        self.off = layer_offsets(self.layer_sizes)
        self.rng = rng_for(seed, replica)
        self.blocks: list[_Block] = []
        layer = witness.layer_of
        edges = witness.edges()
        for c in constraints:
            s, t = c.key
            own = [(u, v) for u, v in edges if {layer[u], layer[v]} == {s, t} and (s != t or layer[u] == s)]
            own = [(u, v) if layer[u] == s else (v, u) for u, v in own]
            if not isinstance(c, DegreeConstraint):
                blk = _Block("count", s, t, own)
            elif c.intra:
                blk = _Block("intra", s, t, own)
            elif c.one_sided:
                low, high = c.oriented()
                side = s if high is None else t
                blk = _Block("top", s, t, own, side=side)
            else:
                blk = _Block("inter", s, t, own)
            self.blocks.append(blk)
        self._weights = np.array([max(len(b.edges), 1) for b in self.blocks], dtype=float)
        self._active = [
            i for i, b in enumerate(self.blocks) if self._mutable(b)
        ]
        w = self._weights[self._active] if self._active else np.zeros(0)
        self._cum = np.cumsum(w) / w.sum() if w.size else w
        self.steps = 0
        self.accepted = 0

    @property
    def edge_count(self) -> int:
        return sum(len(b.edges) for b in self.blocks)

    def _mutable(self, b: _Block) -> bool:
        if b.kind == "count":
            ns, nt = self.layer_sizes[b.s], self.layer_sizes[b.t]
            cap = ns * (ns - 1) // 2 if b.s == b.t else ns * nt
            return 0 < len(b.edges) < cap
        if b.kind == "top":
            return len(b.edges) > 0
        return len(b.edges) >= 2

    def graph(self) -> MultilayerGraph:
        return MultilayerGraph(self.layer_sizes, self.A)

    def _set(self, u, v, val):
        self.A[u, v] = val
        self.A[v, u] = val

    def _swap(self, b: _Block) -> bool:
        m = len(b.edges)
        i = int(self.rng.integers(m))
        j = int(self.rng.integers(m - 1))
        j += j >= i
        a, c = b.edges[i]
        d, e = b.edges[j]
        if b.kind == "intra" and self.rng.random() < 0.5:
            d, e = e, d
        # (a,c),(d,e) -> (a,e),(d,c)
        if a == e or d == c or self.A[a, e] or self.A[d, c]:
            return False
        old1, old2 = b.edges[i], b.edges[j]
        self._set(a, c, False)
        self._set(d, e, False)
        self._set(a, e, True)
        self._set(d, c, True)
        b.replace(old1, (a, e))
        b.replace(old2, (d, c))
        return True

    def _move_link(self, b: _Block) -> bool:
        ns, nt = self.layer_sizes[b.s], self.layer_sizes[b.t]
        i = int(self.rng.integers(len(b.edges)))
        u = int(self.off[b.s] + self.rng.integers(ns))
        v = int(self.off[b.t] + self.rng.integers(nt))
        if u == v or self.A[u, v]:
            return False
        old = b.edges[i]
        self._set(*old, False)
        self._set(u, v, True)
        b.replace(old, (u, v))
        return True

    def _resample_row(self, b: _Block) -> bool:
        side = b.side
        other = b.t if side == b.s else b.s
        n_side = self.layer_sizes[side]
        node = int(self.off[side] + self.rng.integers(n_side))
        lo, hi = int(self.off[other]), int(self.off[other + 1])
        current = np.flatnonzero(self.A[node, lo:hi]) + lo
        d = current.size
        if d == 0 or d == hi - lo:
            return False
        new = np.sort(self.rng.choice(hi - lo, size=d, replace=False)) + lo
        for v in current:
            self._set(node, int(v), False)
            edge = (node, int(v)) if side == b.s else (int(v), node)
            b.where.pop(edge)
        for v in new:
            self._set(node, int(v), True)
        keep = [e for e in b.edges if node not in e]
        keep += [(node, int(v)) if side == b.s else (int(v), node) for v in new]
        b.edges = keep
        b.where = {e: k for k, e in enumerate(keep)}
        return True

    def step(self) -> bool:
        """One proposal; returns whether the state changed."""
        self.steps += 1
        if not self._active:
            return False
        if len(self._active) == 1:
            b = self.blocks[self._active[0]]
        else:
            pick = min(int(np.searchsorted(self._cum, self.rng.random(), side="right")), len(self._active) - 1)
            b = self.blocks[self._active[pick]]
        if b.kind in ("intra", "inter"):
            ok = self._swap(b)
        elif b.kind == "count":
            ok = self._move_link(b)
        else:
            ok = self._resample_row(b)
        self.accepted += ok
        return ok

    def run(self, steps: int):
        for _ in range(steps):
            self.step()


def default_burn_in(witness: MultilayerGraph) -> int:
    return 10 * len(witness.edges())


def sample_microcanonical(
    witness: MultilayerGraph, constraints: ConstraintSet, cfg: SamplerConfig, replica: int = 0
) -> MultilayerGraph:
    """Run ``burn_in + swap_steps`` moves from the witness and return the final graph.

    With ``burn_in=0`` and ``swap_steps=0`` the witness is returned unchanged.
    """
    chain = MicrocanonicalChain(witness, constraints, cfg.seed, replica)
    burn = default_burn_in(witness) if cfg.burn_in is None else cfg.burn_in
    chain.run(burn + cfg.swap_steps)
    return chain.graph()


def microcanonical_chain(
    witness: MultilayerGraph,
    constraints: ConstraintSet,
    cfg: SamplerConfig,
    count: int,
    thin: int = 10,
    replica: int = 0,
) -> Iterator[MultilayerGraph]:
    """Yield ``count`` graphs spaced ``thin`` moves apart after burn-in."""
    chain = MicrocanonicalChain(witness, constraints, cfg.seed, replica)
    chain.run(default_burn_in(witness) if cfg.burn_in is None else cfg.burn_in)
    for _ in range(count):
        chain.run(thin)
        yield chain.graph()
