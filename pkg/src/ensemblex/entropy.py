"""Relative entropy between the microcanonical and canonical ensembles.

The finite-size value is evaluated at a single witness graph ``G*``: since the
canonical law is constant on the fiber and the microcanonical law is uniform
there, ``S_n = ln P_mic(G*) - ln P_can(G*)`` for any ``G*`` in the fiber.
Limits are evaluated from an explicit :class:`LimitClass`; they are never
guessed from finite sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import poisson

from .canonical import CanonicalSolution, block_log_prob, log_p, log_q, solve_model
from .core import (
    DegreeConstraint,
    DegreeDistribution,
    LayerLimits,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    Pair,
    degree_matrix,
    empirical_distribution,
    layer_offsets,
)
from .graphical import NotRealizableError, realize_model
from .microcanonical import CapExceededError, CountResult, count_model, enumerate_graphs, fiber_mask

DIRECT_KL_MAX_N = 5

# below this g is evaluated from log-gamma, above it from the Stirling series
_STIRLING_CUTOFF = 20


def _stirling_remainder(k: np.ndarray) -> np.ndarray:
    inv = 1.0 / k
    inv2 = inv * inv
    return inv * (1 / 12 - inv2 * (1 / 360 - inv2 * (1 / 1260 - inv2 / 1680)))


def _check_nonneg(k) -> np.ndarray:
    arr = np.asarray(k, dtype=float)
    if np.any(arr < 0):
        raise ValueError("g is defined on non-negative integers")
    return arr


def stirling_remainder(k):
    """``g(k) - ln(2 pi k) / 2`` for ``k >= 1`` without cancellation error."""
    arr = _check_nonneg(k)
    if np.any(arr < 1):
        raise ValueError("the Stirling remainder needs k >= 1")
    small = arr < _STIRLING_CUTOFF
    out = np.empty_like(arr)
    ks = arr[small]
    out[small] = gammaln(ks + 1) - xlogy(ks, ks) + ks - 0.5 * np.log(2 * np.pi * ks)
    out[~small] = _stirling_remainder(arr[~small])
    return out if out.ndim else float(out)


def g(k):
    """``g(k) = ln k! - k ln k + k`` with ``g(0) = 0``; accepts scalars or arrays."""
    arr = _check_nonneg(k)
    small = arr < _STIRLING_CUTOFF
    out = np.empty_like(arr)
    ks = arr[small]
    out[small] = gammaln(ks + 1) - xlogy(ks, ks) + ks
    kl = arr[~small]
    out[~small] = 0.5 * np.log(2 * np.pi * kl) + _stirling_remainder(kl)
    return out if out.ndim else float(out)


def g_binomial(n: int, k):
    """``g_n(k) = -ln[C(n,k) (k/n)^k ((n-k)/n)^(n-k)]`` for ``k <= n``, else 0.

    Evaluated as ``g(k)`` plus the correction
    ``-sum_{i<k} ln(1 - i/n) - (n-k) ln(1 - k/n) - k``, which stays accurate
    for ``n`` much larger than ``k``.
    """
    if n < 1:
        raise ValueError("g_n needs n >= 1")
    scalar = np.ndim(k) == 0
    ks = np.atleast_1d(_check_nonneg(k)).astype(np.int64)
    out = np.zeros(ks.shape)
    for idx, kk in enumerate(ks):
        if kk == 0 or kk >= n:
            continue
        i = np.arange(kk)
        delta = -np.log1p(-i / n).sum() - (n - kk) * math.log1p(-kk / n) - kk
        out[idx] = g(int(kk)) + delta
    return float(out[0]) if scalar else out


def poissonisation_g(k: int) -> float:
    """Relative entropy of a point mass at ``k`` w.r.t. ``Poisson(k)``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return float(-poisson.logpmf(k, k))


def l1_g_norm(f: DegreeDistribution, weight: Callable = g) -> float:
    """``sum_k f(k) w(k)``; ``weight`` defaults to ``g``."""
    return float(sum(p * float(weight(k)) for k, p in f.items()))


def s_n_top_only(f_n: DegreeDistribution, n1: int, n2: int) -> float:
    """Finite-size specific relative entropy of the top-only bipartite model."""
    if max(f_n.support, default=0) > n2:
        raise ValueError(f"degree support exceeds n2={n2}")
    return n1 / (n1 + n2) * l1_g_norm(f_n, lambda k: g_binomial(n2, k))


# ---------------------------------------------------------------------------
# Finite-size relative entropy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EntropyReport:
    """Relative entropy in nats; ``per_block`` maps a block to ``(ln P_mic, ln P_can, S)``."""

    log_p_mic: float
    log_p_can: float
    S_n: float
    s_n: float
    n: int
    per_block: dict = field(default_factory=dict)
    witness_digest: str = ""
    method: str = "exact"
    s_infinity: "LimitFormulaResult | None" = None


def _check_witness(model: ModelSpec, witness: MultilayerGraph):
    if tuple(witness.layer_sizes) != tuple(model.layer_sizes):
        raise ValueError("witness layers do not match the model")
    if not witness.is_admissible(model.master):
        raise ValueError("witness uses a pair absent from the master graph")
    deg = degree_matrix(witness, model.master)
    for c in model.constraints:
        if isinstance(c, DegreeConstraint):
            for key, vec in c.vectors().items():
                if tuple(deg[key]) != tuple(vec):
                    raise ValueError(f"witness violates the degree constraint on {key}")
        elif int(witness.block(c.s, c.t).sum() // (2 if c.intra else 1)) != c.count:
            raise ValueError(f"witness violates the link count on {c.key}")


def relative_entropy(
    model: ModelSpec,
    mode: str = "exact",
    canonical: CanonicalSolution | None = None,
    counts: CountResult | None = None,
    witness: MultilayerGraph | None = None,
) -> EntropyReport:
    """``S_n = ln P_mic(G*) - ln P_can(G*)`` with per-block terms.

    ``mode="exact"`` uses exact counts (subject to their size caps) and
    ``mode="asymptotic"`` the sparse-regime formulas; the canonical side is
    always solved numerically.  When the model carries layer limits the
    asymptotic report also includes the limit formula.
    """
    if witness is None:
        rep = realize_model(model)
        if not rep.feasible:
            raise NotRealizableError(f"infeasible model: {rep.reason}")
        witness = rep.witness
    else:
        _check_witness(model, witness)
    if counts is None:
        counts = count_model(model, mode)
    if canonical is None:
        canonical = solve_model(model)
    per_block = {}
    for key, b in canonical.blocks.items():
        lm = -counts.per_block[key].log_omega
        lc = block_log_prob(b, witness.block(*key))
        per_block[key] = (lm, lc, lm - lc)
    log_mic = -counts.log_omega
    log_can = sum((v[1] for v in per_block.values()), 0.0)
    S = log_mic - log_can + 0.0  # normalise -0.0
    s_inf = None
    if mode == "asymptotic" and model.limits is not None:
        s_inf = s_infinity(limit_class_from_model(model))
    return EntropyReport(log_mic, log_can, S, S / model.n, model.n, per_block, witness.digest(), counts.method, s_inf)


def relative_entropy_exact(
    model: ModelSpec,
    canonical: CanonicalSolution | None = None,
    counts: CountResult | None = None,
    witness: MultilayerGraph | None = None,
) -> EntropyReport:
    """Exact-count version of :func:`relative_entropy`."""
    if counts is not None and counts.method != "exact":
        raise ValueError("relative_entropy_exact needs exact counts")
    return relative_entropy(model, "exact", canonical, counts, witness)


def _logit_matrix(sol: CanonicalSolution) -> np.ndarray:
    off = layer_offsets(sol.layer_sizes)
    Z = np.full((sol.n, sol.n), -np.inf)
    for (s, t), b in sol.blocks.items():
        Z[off[s]:off[s + 1], off[t]:off[t + 1]] = b.logits
        Z[off[t]:off[t + 1], off[s]:off[s + 1]] = b.logits.T
    return Z


def relative_entropy_direct_kl(model: ModelSpec, canonical: CanonicalSolution | None = None) -> float:
    """``sum_G P_mic(G) ln(P_mic(G) / P_can(G))`` by enumerating every admissible graph."""
    if model.n > DIRECT_KL_MAX_N:
        raise CapExceededError(f"n={model.n} exceeds the enumeration cap {DIRECT_KL_MAX_N}")
    if canonical is None:
        canonical = solve_model(model)
    en = enumerate_graphs(model)
    mask = fiber_mask(model, en)
    omega = int(mask.sum())
    if omega == 0:
        raise NotRealizableError("empty fiber")
    z = _logit_matrix(canonical)[en.rows, en.cols]
    lp, lq = log_p(z), log_q(z)
    bits = en.bits[mask].astype(bool)
    with np.errstate(invalid="ignore"):
        log_can = np.where(bits, lp, lq).sum(axis=1)
    p_mic = 1.0 / omega
    return float(np.sum(p_mic * (-math.log(omega) - log_can)))


def can_log_probs(model: ModelSpec, canonical: CanonicalSolution | None = None):
    """``(enumeration, ln P_can)`` for every admissible graph (oracle helper)."""
    if canonical is None:
        canonical = solve_model(model)
    en = enumerate_graphs(model)
    z = _logit_matrix(canonical)[en.rows, en.cols]
    with np.errstate(invalid="ignore"):
        lp = np.where(en.bits.astype(bool), log_p(z), log_q(z)).sum(axis=1)
    return en, lp


# ---------------------------------------------------------------------------
# Limit formulas
# ---------------------------------------------------------------------------

TOP_ONLY_CASES = ("n1_fixed", "n2_fixed", "both_grow")


@dataclass(frozen=True)
class LimitFormulaResult:
    s_infinity: float
    formula: str
    contributions: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LimitClass:
    """Description of a sequence of models through its thermodynamic limit.

    Parameters
    ----------
    master : MasterGraph
    limits : LayerLimits
        Limiting layer fractions ``A_s``.
    distributions : mapping (s, t) -> DegreeDistribution
        Limiting targeted degree distributions ``f_{s->t}``.
    degree_pairs : set of ordered pairs, optional
        Degree-constrained pairs ``D``; defaults to the keys of ``distributions``.
        Every other admissible pair is treated as link-count constrained.
    case : {"n1_fixed", "n2_fixed", "both_grow"}, optional
        Growth regime of a two-layer model with only the top degrees
        constrained.  ``"both_grow"`` takes ``c = A_2 / A_1`` from ``limits``.
    fixed_n2 : int, optional
        Size of the fixed bottom layer for ``case="n2_fixed"``.
    """

    master: MasterGraph
    limits: LayerLimits
    distributions: Mapping[Pair, DegreeDistribution]
    degree_pairs: frozenset | None = None
    case: str | None = None
    fixed_n2: int | None = None

    @property
    def D(self) -> frozenset:
        return frozenset(self.distributions) if self.degree_pairs is None else frozenset(self.degree_pairs)


def s_infinity(desc: LimitClass) -> LimitFormulaResult:
    """Limiting specific relative entropy ``sum_{(s,t) in D} A_s ||f_{s->t}||_{l1(g)}``.

    Link-count pairs contribute nothing.  The top-only two-layer regimes are
    selected by ``desc.case``: a fixed top layer or ``c = inf`` gives 0, a fixed
    bottom layer gives ``||f||_{l1(g_{n2})}``, and joint growth with finite
    ``c`` gives ``||f||_{l1(g)} / (1 + c)``.
    """
    if desc.limits.M != desc.master.M:
        raise ValueError(f"{desc.limits.M} layer fractions for M={desc.master.M}")
    A = desc.limits.A
    D = desc.D
    for s, t in D:
        if not desc.master.admits(s, t):
            raise ValueError(f"degree pair ({s + 1},{t + 1}) is absent from the master graph")
        if (s, t) not in desc.distributions:
            raise ValueError(f"missing distribution for pair ({s + 1},{t + 1})")

    if desc.case is not None:
        if desc.case not in TOP_ONLY_CASES:
            raise ValueError(f"unknown case {desc.case!r}; expected one of {TOP_ONLY_CASES}")
        if desc.master.M != 2 or D != {(0, 1)}:
            raise ValueError("growth cases apply to two layers with only k_{1->2} constrained")
        f = desc.distributions[(0, 1)]
        if desc.case == "n1_fixed":
            return LimitFormulaResult(0.0, "top-only, n1 fixed: 0", {(0, 1): 0.0})
        if desc.case == "n2_fixed":
            if desc.fixed_n2 is None:
                raise ValueError("case n2_fixed needs fixed_n2")
            v = l1_g_norm(f, lambda k: g_binomial(desc.fixed_n2, k))
            return LimitFormulaResult(v, f"top-only, n2={desc.fixed_n2} fixed: ||f||_l1(g_n2)", {(0, 1): v})
        if A[0] == 0.0:
            return LimitFormulaResult(0.0, "top-only, c=inf: 0", {(0, 1): 0.0})
        c = A[1] / A[0]
        v = l1_g_norm(f) / (1.0 + c)
        return LimitFormulaResult(v, f"top-only, c={c:g}: ||f||_l1(g)/(1+c)", {(0, 1): v})

    contributions = {}
    for s, t in sorted(D):
        contributions[(s, t)] = A[s] * l1_g_norm(desc.distributions[(s, t)])
    total = float(sum(contributions.values()))
    if not D:
        formula = "link counts only: 0"
    elif desc.master.M == 1:
        formula = "single layer: ||f||_l1(g)"
    else:
        formula = "sum over degree pairs of A_s ||f_{s->t}||_l1(g)"
    return LimitFormulaResult(total, formula, contributions)


def limit_class_from_model(model: ModelSpec, case: str | None = None, fixed_n2: int | None = None) -> LimitClass:
    """Use a finite model's empirical targeted distributions as the limit data."""
    if model.limits is None:
        raise ValueError("model has no layer limits; supply A_s (or c) explicitly")
    dists = {}
    for c in model.constraints:
        if isinstance(c, DegreeConstraint):
            for key, vec in c.vectors().items():
                dists[key] = empirical_distribution(vec)
    return LimitClass(model.master, model.limits, dists, frozenset(dists), case, fixed_n2)
