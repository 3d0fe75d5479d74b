"""Canonical (maximum-entropy) ensembles under soft constraints.

Every block of a model is a product of independent Bernoulli pairs whose
log-odds are ``-(theta_i + theta_j)``.  Solutions store these log-odds
(``logits``) rather than raw probabilities so that log-probabilities stay
accurate near 0 and 1; pairs forced to 0 or 1 carry ``-inf`` / ``+inf``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .core import (
    DegreeConstraint,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    Pair,
    validate,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000

# log-odds beyond this trigger an exact LP check for a boundary face
_BOUNDARY_LOGIT = 15.0


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class NonInteriorError(ValueError):
    """Constraints outside the closure of the realizable mean polytope."""


class SparseRegimeWarning(UserWarning):
    pass


def log_p(z):
    """log(sigmoid(z)), exact at z = +-inf."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))


def log_q(z):
    """log(1 - sigmoid(z))."""
    return -np.logaddexp(0.0, np.asarray(z, dtype=float))


def _logit(p: float) -> float:
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return math.log(p) - math.log1p(-p)


# ---------------------------------------------------------------------------
# Solution containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockSolution:
    """Solved canonical ensemble of a single block.

    Attributes
    ----------
    key : (s, t)
        Block, ``s <= t``.
    kind : str
        ``"degree"``, ``"one-sided"`` or ``"count"``.
    logits : ndarray
        ``(n_s, n_t)`` log-odds of every node pair (rows in layer s).  Intra-layer
        blocks are square and symmetric; their diagonal is ``-inf`` and ignored.
    theta, phi : ndarray
        Lagrange multipliers of the two sides (``phi`` is ``None`` for intra-layer
        and count blocks).  ``+inf`` marks nodes whose pairs are all forced to 0,
        ``-inf`` nodes forced to 1, ``nan`` nodes sitting on a mixed face.
    residual : float
        Max-norm violation of the mean constraints.
    interior : bool
        False when some pair probability is exactly 0 or 1 although the
        constraint is not trivially empty.
    """

    key: Pair
    kind: str
    logits: np.ndarray
    theta: np.ndarray
    phi: np.ndarray | None = None
    residual: float = 0.0
    interior: bool = True

    @property
    def intra(self) -> bool:
        return self.key[0] == self.key[1]

    @property
    def pair_mask(self) -> np.ndarray:
        r, c = self.logits.shape
        if self.intra:
            return np.triu(np.ones((r, c), dtype=bool), 1)
        return np.ones((r, c), dtype=bool)

    @property
    def edge_prob(self) -> np.ndarray:
        p = expit(self.logits)
        if self.intra:
            np.fill_diagonal(p, 0.0)
        return p

    def pair_logits(self) -> np.ndarray:
        """Log-odds of the block's node pairs as a flat vector."""
        return self.logits[self.pair_mask]


@dataclass(frozen=True, eq=False)
class CanonicalSolution:
    layer_sizes: tuple[int, ...]
    master: MasterGraph
    blocks: dict[Pair, BlockSolution] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return sum(self.layer_sizes)

    @property
    def residual(self) -> float:
        return max((b.residual for b in self.blocks.values()), default=0.0)

    @property
    def interior(self) -> bool:
        return all(b.interior for b in self.blocks.values())

    def block(self, s: int, t: int) -> BlockSolution:
        return self.blocks[(min(s, t), max(s, t))]

    @property
    def edge_prob(self) -> np.ndarray:
        """Full ``n x n`` matrix of pair probabilities (zero outside blocks)."""
        off = np.concatenate([[0], np.cumsum(self.layer_sizes)])
        P = np.zeros((self.n, self.n))
        for (s, t), b in self.blocks.items():
            p = b.edge_prob
            P[off[s]:off[s + 1], off[t]:off[t + 1]] = p
            P[off[t]:off[t + 1], off[s]:off[s + 1]] = p.T
        return P


def _single(layer_sizes, master, block: BlockSolution) -> CanonicalSolution:
    return CanonicalSolution(tuple(layer_sizes), master, {block.key: block})


# ---------------------------------------------------------------------------
# Generic solver over a list of candidate node pairs
# ---------------------------------------------------------------------------


def _node_sums(n: int, rows: np.ndarray, cols: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.bincount(rows, w, minlength=n) + np.bincount(cols, w, minlength=n)


def _eliminate(n, rows, cols, target, fixed):
    """Fix pairs forced by zero or saturated residual degrees, in place."""
    while True:
        free = fixed < 0
        avail = _node_sums(n, rows[free], cols[free], np.ones(free.sum()))
        ones = fixed == 1
        res = target - _node_sums(n, rows[ones], cols[ones], np.ones(ones.sum()))
        if np.any(res < -1e-9) or np.any(res > avail + 1e-9):
            raise NonInteriorError("non-interior constraint: degree outside the admissible range")
        zero = (np.abs(res) < 1e-12) & (avail > 0)
        full = (np.abs(res - avail) < 1e-12) & (avail > 0)
        if not (zero.any() or full.any()):
            return res
        hit0 = free & (zero[rows] | zero[cols])
        hit1 = free & (full[rows] | full[cols])
        if np.any(hit0 & hit1):
            raise NonInteriorError("non-interior constraint: pair forced to both 0 and 1")
        fixed[hit0] = 0
        fixed[hit1] = 1


def _face_by_lp(n, rows, cols, res):
    """Classify free pairs as forced-0, forced-1 or genuinely free via LPs.

    Returns an int array: -1 free, 0 / 1 forced value.
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix, hstack, identity, vstack

    E = len(rows)
    inc = coo_matrix(
        (np.ones(2 * E), (np.concatenate([rows, cols]), np.concatenate([np.arange(E)] * 2))),
        shape=(n, E),
    ).tocsr()
    I = identity(E, format="csr")
    A_eq = hstack([inc, coo_matrix((n, E))]).tocsr()
    A_ub = vstack([hstack([-I, I]), hstack([I, I])]).tocsr()
    b_ub = np.concatenate([np.zeros(E), np.ones(E)])
    c = np.concatenate([np.zeros(E), -np.ones(E)])
    bounds = [(0.0, 1.0)] * E + [(0.0, 0.5)] * E
    out = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=res, bounds=bounds, method="highs")
    if out.status == 2:
        raise NonInteriorError("non-interior constraint: no mean-matching pair probabilities exist")
    if out.status != 0:
        raise ConvergenceError(f"face detection LP failed: {out.message}", float("nan"))
    p = out.x[:E]
    eps = 1e-7
    is_free = (p > eps) & (p < 1 - eps)
    face = np.full(E, -1)
    for e in np.flatnonzero(~is_free):
        if is_free[e]:
            continue
        sign = -1.0 if p[e] < 0.5 else 1.0  # maximise if near 0, minimise if near 1
        ce = np.zeros(E)
        ce[e] = sign
        r = linprog(ce, A_eq=inc, b_eq=res, bounds=[(0.0, 1.0)] * E, method="highs")
        if r.status != 0:
            raise ConvergenceError(f"face detection LP failed: {r.message}", float("nan"))
        val = r.x[e]
        if sign < 0 and val < eps:
            face[e] = 0
        elif sign > 0 and val > 1 - eps:
            face[e] = 1
        else:
            is_free |= (r.x > eps) & (r.x < 1 - eps)
    return face


def _newton(n, rows, cols, res, tol, max_iter):
    """Minimise the convex dual over free pairs; returns node potentials u = -theta."""
    active = _node_sums(n, rows, cols, np.ones(len(rows))) > 0
    total = max(res.sum(), 1.0)
    u = np.full(n, -np.inf)
    u[active] = np.log(np.maximum(res[active], 1e-300)) - 0.5 * np.log(total)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return u, 0.0, 0
    r_, c_ = rows, cols

    def grad(v):
        p = expit(v[r_] + v[c_])
        return _node_sums(n, r_, c_, p)[idx] - res[idx], p

    def objective(v):
        z = v[r_] + v[c_]
        return np.logaddexp(0.0, z).sum() - res[idx] @ v[idx]

    # damped fixed point warm start on x = exp(u)
    for _ in range(200):
        g, _p = grad(u)
        if np.max(np.abs(g)) < 1e-3:
            break
        zr = u[r_] + u[c_]
        # x_j / (1 + x_i x_j) = exp(u_j - softplus(u_i + u_j))
        sp = np.logaddexp(0.0, zr)
        denom = np.bincount(r_, np.exp(u[c_] - sp), minlength=n) + np.bincount(c_, np.exp(u[r_] - sp), minlength=n)
        with np.errstate(divide="ignore"):
            new = np.log(res[idx]) - np.log(denom[idx])
        u_new = u.copy()
        u_new[idx] = 0.5 * u[idx] + 0.5 * new
        if not np.all(np.isfinite(u_new[idx])):
            break
        u = u_new

    it = 0
    g, p = grad(u)
    F = objective(u)
    pos = {v: k for k, v in enumerate(idx)}
    ri = np.array([pos[v] for v in r_])
    ci = np.array([pos[v] for v in c_])
    m = idx.size
    while np.max(np.abs(g)) >= tol:
        if it >= max_iter:
            raise ConvergenceError("canonical solver did not converge", float(np.max(np.abs(g))))
        it += 1
        w = p * (1.0 - p)
        H = np.zeros((m, m))
        np.add.at(H, (ri, ri), w)
        np.add.at(H, (ci, ci), w)
        np.add.at(H, (ri, ci), w)
        np.add.at(H, (ci, ri), w)
        ridge = 1e-12 * (1.0 + H.diagonal().max())
        try:
            d = np.linalg.solve(H + ridge * np.eye(m), -g)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(H, -g, rcond=None)[0]
        slope = g @ d
        t = 1.0
        gmax = np.max(np.abs(g))
        for _ in range(60):
            v = u.copy()
            v[idx] += t * d
            F_new = objective(v)
            g_new, p_new = grad(v)
            if F_new <= F + 1e-4 * t * slope + 1e-13 * abs(F) or np.max(np.abs(g_new)) < 0.5 * gmax:
                break
            t *= 0.5
        u, F, g, p = v, F_new, g_new, p_new
        if np.max(np.abs(u[idx])) > 8 * _BOUNDARY_LOGIT:
            break
    return u, float(np.max(np.abs(g))), it


def _solve_pairs(n, rows, cols, target, tol, max_iter):
    """Solve sum_{pairs at i} sigmoid(u_i + u_j) = target_i.

    Returns ``(z, u, fixed)`` with the pair log-odds ``z`` (+-inf on forced
    pairs), node potentials ``u`` and the forced-value array (-1 for free).
    """
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    target = np.asarray(target, dtype=float)
    E = len(rows)
    fixed = np.full(E, -1)
    res = _eliminate(n, rows, cols, target, fixed)
    used_lp = False
    while True:
        free = fixed < 0
        u, gres, _ = _newton(n, rows[free], cols[free], res, tol, max_iter)
        z_free = u[rows[free]] + u[cols[free]]
        on_face = free.any() and np.max(np.abs(z_free)) > _BOUNDARY_LOGIT
        if (gres < tol and not on_face) or used_lp:
            if gres >= tol:
                raise ConvergenceError("canonical solver did not converge", gres)
            break
        face = np.full(E, -1)
        face[free] = _face_by_lp(n, rows[free], cols[free], res)
        fixed[face >= 0] = face[face >= 0]
        res = _eliminate(n, rows, cols, target, fixed)
        used_lp = True
    z = np.empty(E)
    z[fixed == 0] = -np.inf
    z[fixed == 1] = np.inf
    z[fixed < 0] = z_free
    return z, u, fixed


def _thetas(n, rows, cols, u, fixed):
    """Multipliers per node; infinities / nan where pairs are forced."""
    theta = -u.copy()
    touches0 = _node_sums(n, rows, cols, (fixed == 0).astype(float)) > 0
    touches1 = _node_sums(n, rows, cols, (fixed == 1).astype(float)) > 0
    has_free = _node_sums(n, rows, cols, (fixed < 0).astype(float)) > 0
    theta[touches0 | touches1] = np.nan
    theta[touches0 & ~touches1 & ~has_free] = np.inf
    theta[touches1 & ~touches0 & ~has_free] = -np.inf
    theta[~(touches0 | touches1 | has_free)] = np.inf
    return theta


def _residual(n, rows, cols, z, target):
    return float(np.max(np.abs(_node_sums(n, rows, cols, expit(z)) - target), initial=0.0))


# ---------------------------------------------------------------------------
# Block solvers
# ---------------------------------------------------------------------------


def _unipartite_block(k, key, tol, max_iter) -> BlockSolution:
    k = np.asarray(k, dtype=float)
    n = len(k)
    if np.any(k < 0) or np.any(k > n - 1):
        raise NonInteriorError("non-interior constraint: degree outside 0..n-1")
    rows, cols = np.triu_indices(n, 1)
    z, u, fixed = _solve_pairs(n, rows, cols, k, tol, max_iter)
    Z = np.full((n, n), -np.inf)
    Z[rows, cols] = z
    Z[cols, rows] = z
    trivial = np.all(k == 0)
    return BlockSolution(
        key,
        "degree",
        Z,
        _thetas(n, rows, cols, u, fixed),
        residual=_residual(n, rows, cols, z, k),
        interior=bool(trivial or np.all(fixed < 0)),
    )


def _bipartite_block(top, bottom, key, tol, max_iter) -> BlockSolution:
    top = np.asarray(top, dtype=float)
    bottom = np.asarray(bottom, dtype=float)
    n1, n2 = len(top), len(bottom)
    if abs(top.sum() - bottom.sum()) > 1e-9:
        raise NonInteriorError(f"non-interior constraint: sum mismatch {top.sum():g}≠{bottom.sum():g}")
    if np.any(top < 0) or np.any(bottom < 0) or np.any(top > n2) or np.any(bottom > n1):
        raise NonInteriorError("non-interior constraint: degree outside the admissible range")
    rows = np.repeat(np.arange(n1), n2)
    cols = np.tile(np.arange(n2), n1) + n1
    target = np.concatenate([top, bottom])
    z, u, fixed = _solve_pairs(n1 + n2, rows, cols, target, tol, max_iter)
    th = _thetas(n1 + n2, rows, cols, u, fixed)
    trivial = top.sum() == 0
    return BlockSolution(
        key,
        "degree",
        z.reshape(n1, n2),
        th[:n1],
        th[n1:],
        residual=_residual(n1 + n2, rows, cols, z, target),
        interior=bool(trivial or np.all(fixed < 0)),
    )


def _top_only_block(top, n2, key, transpose=False) -> BlockSolution:
    top = np.asarray(top, dtype=int)
    if np.any(top < 0) or np.any(top > n2):
        raise NonInteriorError("infeasible: top degree exceeds the bottom layer size")
    z_row = np.array([_logit(k / n2) if n2 else -math.inf for k in top])
    Z = np.repeat(z_row[:, None], n2, axis=1)
    theta = -z_row
    if transpose:
        Z = Z.T
    interior = bool(np.all((top > 0) & (top < n2)) or np.all(top == 0))
    return BlockSolution(key, "one-sided", Z, theta, residual=0.0, interior=interior)


def _count_block(L, rows, cols, intra, key) -> BlockSolution:
    cap = rows * (rows - 1) // 2 if intra else rows * cols
    if not 0 <= L <= cap:
        raise NonInteriorError(f"infeasible: link count {L} outside 0..{cap}")
    lam = L / cap if cap else 0.0
    z = _logit(lam)
    Z = np.full((rows, cols), z)
    if intra:
        np.fill_diagonal(Z, -np.inf)
    return BlockSolution(key, "count", Z, np.array([-z]), residual=0.0, interior=bool(0 < L < cap or L == 0))


def solve_unipartite(k: Sequence[int], tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> CanonicalSolution:
    """Canonical configuration model: ``sum_j p_ij = k_i`` with logistic ``p_ij``.

    Nodes of degree zero get ``p = 0`` exactly; boundary faces (pairs forced
    to 0 or 1 by the mean constraints) are detected and solved exactly, and the
    solution is flagged ``interior=False``.

    Raises
    ------
    NonInteriorError
        If no product measure matches the degrees on average.
    ConvergenceError
        If the max-norm residual is still above ``tol`` after ``max_iter``
        Newton steps.
    """
    block = _unipartite_block(k, (0, 0), tol, max_iter)
    return _single((len(k),), MasterGraph.complete(1), block)


def solve_bipartite(top: Sequence[int], bottom: Sequence[int], tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> CanonicalSolution:
    """Two-sided bipartite canonical ensemble, ``p_ij = sigmoid(-(theta_i + phi_j))``."""
    block = _bipartite_block(top, bottom, (0, 1), tol, max_iter)
    return _single((len(top), len(bottom)), MasterGraph.from_pairs(2, [(0, 1)]), block)


def solve_bipartite_top_only(top: Sequence[int], n2: int) -> CanonicalSolution:
    """Closed form ``p_ij = k_i / n2`` when only the top degrees are constrained."""
    block = _top_only_block(top, n2, (0, 1))
    return _single((len(top), n2), MasterGraph.from_pairs(2, [(0, 1)]), block)


def solve_link_count(L: int, pair_capacity: int) -> BlockSolution:
    """Uniform ``p* = L / capacity`` over an abstract list of ``capacity`` pairs.

    The returned block has shape ``(1, capacity)``; use :func:`solve_model`
    for a count block embedded in concrete layers.
    """
    if pair_capacity < 0 or not 0 <= L <= pair_capacity:
        raise NonInteriorError(f"infeasible: link count {L} outside 0..{pair_capacity}")
    return _count_block(L, 1, pair_capacity, False, (0, 1))


def solve_block(model: ModelSpec, constraint, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> BlockSolution:
    s, t = constraint.key
    ns, nt = model.layer_sizes[s], model.layer_sizes[t]
    if isinstance(constraint, LinkCountConstraint):
        return _count_block(constraint.count, ns, nt, s == t, (s, t))
    if constraint.intra:
        return _unipartite_block(constraint.forward, (s, t), tol, max_iter)
    low, high = constraint.oriented()
    if high is None:
        return _top_only_block(low, nt, (s, t))
    if low is None:
        b = _top_only_block(high, ns, (s, t), transpose=True)
        return b
    return _bipartite_block(low, high, (s, t), tol, max_iter)


def solve_model(model: ModelSpec, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> CanonicalSolution:
    """Solve every block independently; the canonical law is their product."""
    problems = validate(model)
    if problems:
        raise ValueError("; ".join(str(v) for v in problems))
    blocks = {}
    for c in model.constraints:
        try:
            blocks[c.key] = solve_block(model, c, tol, max_iter)
        except (NonInteriorError, ConvergenceError) as exc:
            label = f"block ({c.key[0] + 1},{c.key[1] + 1})"
            if isinstance(exc, ConvergenceError):
                raise ConvergenceError(f"{label}: {exc}", exc.residual) from exc
            raise NonInteriorError(f"{label}: {exc}") from exc
    return CanonicalSolution(model.layer_sizes, model.master, blocks)


# ---------------------------------------------------------------------------
# Probabilities
# ---------------------------------------------------------------------------


def _check_graph(sol: CanonicalSolution, g: MultilayerGraph):
    if tuple(g.layer_sizes) != tuple(sol.layer_sizes):
        raise ValueError(f"graph layers {g.layer_sizes} do not match solution layers {sol.layer_sizes}")


def block_log_prob(b: BlockSolution, gb: np.ndarray) -> float:
    """Log-probability of a block sub-adjacency under one block's law."""
    mask = b.pair_mask
    z = b.logits[mask]
    e = np.asarray(gb, dtype=bool)[mask]
    with np.errstate(invalid="ignore"):
        lp = np.where(e, log_p(z), log_q(z))
    return float(lp.sum())


def log_prob(sol: CanonicalSolution, g: MultilayerGraph) -> float:
    """``ln P_can(G)`` in nats; ``-inf`` if G has a pair the law forbids."""
    _check_graph(sol, g)
    if not g.is_admissible(sol.master):
        return -math.inf
    return sum((block_log_prob(b, g.block(*key)) for key, b in sol.blocks.items()), 0.0)


def hamiltonian(sol: CanonicalSolution, g: MultilayerGraph) -> float:
    """``H(G, theta*) = sum (theta_i + theta_j) g_ij`` over non-forced pairs."""
    _check_graph(sol, g)
    total = 0.0
    for key, b in sol.blocks.items():
        mask = b.pair_mask
        z = b.logits[mask]
        e = g.block(*key)[mask]
        fin = np.isfinite(z)
        total -= float(z[fin] @ e[fin])
    return total


def log_partition(sol: CanonicalSolution) -> float:
    """``ln Z(theta*) = sum ln(1 + exp(-(theta_i + theta_j)))`` over non-forced pairs.

    Pairs with probability exactly 0 or 1 contribute a factor 1 to the law of
    any graph that agrees with them and are left out, so that
    ``log_prob(G) == -hamiltonian(G) - log_partition`` for such graphs.
    """
    total = 0.0
    for b in sol.blocks.values():
        z = b.pair_logits()
        total += float(np.logaddexp(0.0, z[np.isfinite(z)]).sum())
    return total


def boundary_pairs(sol: CanonicalSolution) -> int:
    """Number of pairs whose probability is exactly 0 or 1."""
    return int(sum(np.sum(~np.isfinite(b.pair_logits())) for b in sol.blocks.values()))


def expected_degrees(sol: CanonicalSolution) -> dict[Pair, np.ndarray]:
    """Expected targeted degrees ``<k_{s->t}>`` for both orientations of every block."""
    out = {}
    for (s, t), b in sol.blocks.items():
        p = b.edge_prob
        out[(s, t)] = p.sum(axis=1)
        if s != t:
            out[(t, s)] = p.sum(axis=0)
    return out


def sparse_p_hat(k: Sequence[int]) -> np.ndarray:
    """Chung-Lu approximation ``k_i k_j / 2L`` of the canonical probabilities.

    Entries above 1 are clipped and a :class:`SparseRegimeWarning` is issued;
    the same warning fires when ``max k >= sqrt(n)``, where the approximation is
    not expected to be accurate.
    """
    k = np.asarray(k, dtype=float)
    two_L = k.sum()
    if two_L <= 0:
        raise ValueError("sparse approximation needs at least one link")
    P = np.outer(k, k) / two_L
    np.fill_diagonal(P, 0.0)
    if P.max() > 1.0:
        warnings.warn("p_hat exceeds 1; clipped (outside the sparse regime)", SparseRegimeWarning, stacklevel=2)
        P = np.minimum(P, 1.0)
    elif k.max() >= math.sqrt(len(k)):
        warnings.warn("max degree >= sqrt(n): sparse approximation unreliable", SparseRegimeWarning, stacklevel=2)
    return P
