import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from ensemblex.canonical import (
    ConvergenceError,
    NonInteriorError,
    SparseRegimeWarning,
    boundary_pairs,
    expected_degrees,
    hamiltonian,
    log_partition,
    log_prob,
    log_q,
    solve_bipartite,
    solve_bipartite_top_only,
    solve_link_count,
    solve_model,
    solve_unipartite,
    sparse_p_hat,
)
from ensemblex.core import (
    ConstraintSet,
    DegreeConstraint,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    bipartite_model,
    degree_matrix,
    link_count_model,
    top_only_model,
    unipartite_model,
)
from ensemblex.graphical import erdos_gallai, gale_ryser, realize_unipartite
from ensemblex.microcanonical import enumerate_graphs

MATCHING = MultilayerGraph.from_edges((4,), [(0, 1), (2, 3)])


def _offdiag(P):
    return P[~np.eye(P.shape[0], dtype=bool)]


def test_solve_unipartite_examples():
    sol = solve_unipartite((1, 1, 1, 1))
    assert np.allclose(_offdiag(sol.edge_prob), 1 / 3, atol=1e-12)
    assert sol.interior and sol.residual < 1e-10

    zero = solve_unipartite((0, 0, 0))
    assert not zero.edge_prob.any()

    sol = solve_unipartite((2, 2, 1, 1))
    assert np.allclose(sol.edge_prob.sum(axis=1), (2, 2, 1, 1), atol=1e-10)
    assert sol.residual < 1e-10
    # nodes 0,1 must be linked and 2,3 cannot be: a boundary face with no saturated node
    assert sol.edge_prob[0, 1] == 1.0 and sol.edge_prob[2, 3] == 0.0
    assert not sol.interior and boundary_pairs(sol) == 2
    assert np.isnan(sol.block(0, 0).theta).all()


def test_solve_unipartite_errors():
    with pytest.raises(NonInteriorError):
        solve_unipartite((5, 5, 5, 5, 5, 1))
    with pytest.raises(NonInteriorError):
        solve_unipartite((4, 1, 1, 0))
    with pytest.raises(ConvergenceError) as exc:
        solve_unipartite((3, 1, 2, 2, 1, 1, 2), tol=1e-300, max_iter=3)
    assert exc.value.residual >= 0


def test_solve_bipartite_examples():
    sol = solve_bipartite((1, 1), (1, 1))
    assert np.allclose(sol.block(0, 1).edge_prob, 0.5, atol=1e-12)
    full = solve_bipartite((2, 2), (2, 2))
    assert np.all(full.block(0, 1).edge_prob == 1.0)
    assert not full.interior and full.residual == 0.0
    sol = solve_bipartite((2, 1, 1), (3, 1))
    B = sol.block(0, 1).edge_prob
    assert np.allclose(B.sum(axis=1), (2, 1, 1), atol=1e-10)
    assert np.allclose(B.sum(axis=0), (3, 1), atol=1e-10)
    with pytest.raises(NonInteriorError, match="sum mismatch"):
        solve_bipartite((2, 2), (1, 1))


def test_solve_top_only_examples():
    assert np.all(solve_bipartite_top_only((2,), 4).block(0, 1).edge_prob == 0.5)
    assert not solve_bipartite_top_only((0, 0), 3).block(0, 1).edge_prob.any()
    assert np.all(solve_bipartite_top_only((3,), 3).block(0, 1).edge_prob == 1.0)
    with pytest.raises(NonInteriorError):
        solve_bipartite_top_only((4,), 3)


def test_solve_link_count_examples():
    assert np.all(solve_link_count(3, 6).edge_prob == 0.5)
    assert not solve_link_count(0, 6).edge_prob.any()
    assert np.all(solve_link_count(6, 6).edge_prob == 1.0)
    with pytest.raises(NonInteriorError):
        solve_link_count(7, 6)


def test_solve_model_examples():
    multiplex = ModelSpec(
        MasterGraph.from_pairs(2, [(0, 0), (1, 1)]),
        (4, 4),
        ConstraintSet((DegreeConstraint(0, 0, (1, 1, 1, 1)), DegreeConstraint(1, 1, (1, 1, 1, 1)))),
    )
    sol = solve_model(multiplex)
    P = sol.edge_prob
    assert np.allclose(_offdiag(P[:4, :4]), 1 / 3) and np.allclose(_offdiag(P[4:, 4:]), 1 / 3)
    assert not P[:4, 4:].any()

    mixed = ModelSpec(
        MasterGraph.from_pairs(2, [(0, 0), (0, 1)]),
        (3, 2),
        ConstraintSet((DegreeConstraint(0, 0, (2, 1, 1)), LinkCountConstraint(0, 1, 3))),
    )
    sol = solve_model(mixed)
    assert sol.block(0, 0).residual < 1e-10
    assert sol.block(0, 1).kind == "count" and np.all(sol.block(0, 1).edge_prob == 0.5)
    assert np.allclose(sol.edge_prob[:3, :3].sum(axis=1), (2, 1, 1))

    empty = ModelSpec(MasterGraph(np.zeros((2, 2))), (2, 1), ConstraintSet())
    sol = solve_model(empty)
    assert sol.blocks == {}
    assert log_prob(sol, MultilayerGraph.empty((2, 1))) == 0.0
    assert log_partition(sol) == 0.0

    bad = ModelSpec(MasterGraph.from_pairs(2, [(0, 1)]), (2, 2), ConstraintSet((LinkCountConstraint(0, 1, 5),)))
    with pytest.raises(ValueError, match=r"\(1,2\)"):
        solve_model(bad)


def test_log_prob_examples():
    half = solve_model(link_count_model(4, 3))
    for g in (MATCHING, MultilayerGraph.empty((4,)), MultilayerGraph.from_edges((4,), [(0, 1), (1, 2), (2, 3)])):
        assert log_prob(half, g) == pytest.approx(-6 * math.log(2), abs=1e-12)
    zero = solve_model(link_count_model(4, 0))
    assert log_prob(zero, MultilayerGraph.empty((4,))) == 0.0
    assert log_prob(zero, MATCHING) == -math.inf
    sol = solve_unipartite((1, 1, 1, 1))
    assert log_prob(sol, MATCHING) == pytest.approx(math.log(16 / 729), abs=1e-12)
    with pytest.raises(ValueError):
        log_prob(sol, MultilayerGraph.empty((2, 2)))
    # a graph using a pair outside the master graph has probability 0
    bip = solve_model(bipartite_model((1, 1), (1, 1)))
    assert log_prob(bip, MultilayerGraph.from_edges((2, 2), [(0, 1)])) == -math.inf


def test_log_partition_examples():
    assert log_partition(solve_model(link_count_model(4, 3))) == pytest.approx(6 * math.log(2), abs=1e-12)
    assert log_partition(solve_model(link_count_model(4, 0))) == 0.0
    assert log_partition(solve_unipartite((1, 1, 1, 1))) == pytest.approx(6 * math.log(1.5), abs=1e-12)


def test_log_q_accuracy_for_tiny_probabilities():
    # ln(1 - p) at p = sigmoid(-40) ~ 4.2e-18 must not round to 0
    z = -40.0
    assert log_q(z) == pytest.approx(-math.exp(z), rel=1e-12)
    assert log_q(-math.inf) == 0.0


def test_sparse_p_hat_examples():
    P = sparse_p_hat((1, 1, 1, 1))
    assert np.allclose(_offdiag(P), 0.25) and not P.diagonal().any()
    with pytest.warns(SparseRegimeWarning):
        P = sparse_p_hat((2, 2, 2))
    assert np.allclose(_offdiag(P), 2 / 3)
    with pytest.warns(SparseRegimeWarning):
        assert sparse_p_hat((3, 1))[0, 1] == 0.75
    with pytest.warns(SparseRegimeWarning, match="clipped"):
        assert sparse_p_hat((4, 4, 1, 1)).max() == 1.0
    with pytest.raises(ValueError):
        sparse_p_hat((0, 0))


def test_sparse_p_hat_approaches_solution():
    k = np.array([1, 2, 1, 2, 1, 1, 2, 2] * 25)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        P = sparse_p_hat(k)
    exact = solve_unipartite(k).edge_prob
    assert np.max(np.abs(P - exact)) < 2e-3


# --- invariants -------------------------------------------------------------


def _graphical_sequences(n):
    return [k for k in itertools.product(range(n), repeat=n) if erdos_gallai(k)]


@pytest.mark.parametrize("n", [3, 4, 5])
def test_constant_on_fibers_and_normalisation(n):
    for k in _graphical_sequences(n)[::3]:
        model = unipartite_model(k)
        sol = solve_model(model)
        en = enumerate_graphs(model)
        lp = np.array([log_prob(sol, en.graph(i)) for i in range(len(en))])
        degs = en.targeted_degrees(0, 0)
        fiber = np.all(degs == np.array(k), axis=1)
        vals = lp[fiber]
        assert np.ptp(vals) < 1e-12
        assert math.fsum(np.exp(lp)) == pytest.approx(1.0, abs=1e-9)


@given(st.lists(st.integers(0, 7), min_size=2, max_size=12))
@settings(max_examples=60, deadline=None)
def test_mean_matching(k):
    if not erdos_gallai(k):
        return
    sol = solve_unipartite(k)
    assert sol.residual < 1e-10
    assert np.allclose(expected_degrees(sol)[(0, 0)], k, atol=1e-10)
    P = sol.edge_prob
    assert np.all((P >= 0) & (P <= 1)) and np.array_equal(P, P.T)


@given(
    st.lists(st.integers(0, 4), min_size=1, max_size=5),
    st.lists(st.integers(0, 4), min_size=1, max_size=5),
)
@settings(max_examples=60, deadline=None)
def test_bipartite_mean_matching(top, bottom):
    if not gale_ryser(top, bottom) or max(top) > len(bottom) or max(bottom) > len(top):
        return
    sol = solve_bipartite(top, bottom)
    B = sol.block(0, 1).edge_prob
    assert np.allclose(B.sum(axis=1), top, atol=1e-10)
    assert np.allclose(B.sum(axis=0), bottom, atol=1e-10)


@given(st.lists(st.integers(1, 3), min_size=4, max_size=10))
@settings(max_examples=40, deadline=None)
def test_logistic_form_and_hamiltonian(k):
    if not erdos_gallai(k):
        return
    sol = solve_unipartite(k)
    b = sol.block(0, 0)
    th = b.theta
    i, j = np.triu_indices(len(k), 1)
    ok = np.isfinite(th[i]) & np.isfinite(th[j])
    assert np.allclose(b.edge_prob[i[ok], j[ok]], expit(-th[i[ok]] - th[j[ok]]), atol=1e-12)
    # ln P = -H - ln Z on any graph the law supports
    g = realize_unipartite(k)
    assert log_prob(sol, g) == pytest.approx(-hamiltonian(sol, g) - log_partition(sol), abs=1e-9)


def test_count_blocks_uniform_and_exact():
    for n, L in ((4, 3), (5, 7), (6, 0)):
        b = solve_model(link_count_model(n, L)).block(0, 0)
        p = b.edge_prob[b.pair_mask]
        assert np.ptp(p) == 0 and p.sum() == pytest.approx(L, abs=1e-12)


def test_entropy_maximality_spot_check():
    """Moving along the null space of the constraint map only lowers the Shannon entropy."""
    k = (2, 1, 2, 1)
    sol = solve_unipartite(k)
    i, j = np.triu_indices(4, 1)
    p = sol.edge_prob[i, j]

    def H(q):
        q = np.clip(q, 1e-300, 1 - 1e-16)
        return float(-(q * np.log(q) + (1 - q) * np.log1p(-q)).sum())

    A = np.zeros((4, i.size))
    A[i, np.arange(i.size)] = 1
    A[j, np.arange(i.size)] = 1
    _, _, vt = np.linalg.svd(A)
    null = vt[4:]
    base = H(p)
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = rng.normal(size=null.shape[0]) @ null
        for eps in (1e-3, 1e-2, 5e-2):
            q = p + eps * d
            if np.all((q > 0) & (q < 1)):
                assert np.allclose(A @ q, k)
                assert H(q) < base


def test_top_only_model_solution():
    sol = solve_model(top_only_model((2, 0, 3), 3))
    B = sol.block(0, 1).edge_prob
    assert B[:, 0].tolist() == [2 / 3, 0.0, 1.0]
    assert not sol.interior
    ed = expected_degrees(sol)
    assert np.allclose(ed[(0, 1)], (2, 0, 3))
