import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemblex.core import (
    ConstraintSet,
    DegreeConstraint,
    DegreeDistribution,
    LayerLimits,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    MultilayerGraph,
    bipartite_model,
    degree_matrix,
    empirical_distribution,
    layer_offsets,
    link_count_model,
    top_only_model,
    unipartite_model,
    validate,
)


def test_master_graph_symmetry_and_blocks():
    m = MasterGraph.from_pairs(3, [(0, 0), (0, 2)])
    assert m.admits(2, 0) and m.admits(0, 0) and not m.admits(1, 1)
    assert m.blocks() == [(0, 0), (0, 2)]
    assert sorted(m.ordered_pairs()) == [(0, 0), (0, 2), (2, 0)]
    with pytest.raises(ValueError, match="symmetric"):
        MasterGraph(np.array([[1, 1], [0, 1]]))
    assert MasterGraph.complete(2, self_loops=False).blocks() == [(0, 1)]


def test_multilayer_graph_invariants():
    with pytest.raises(ValueError, match="symmetric"):
        MultilayerGraph((2,), np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError, match="self-loops"):
        MultilayerGraph((2,), np.eye(2))
    with pytest.raises(ValueError, match="shape"):
        MultilayerGraph((2, 1), np.zeros((2, 2)))
    g = MultilayerGraph.from_edges((2, 2), [(0, 2), (1, 3)])
    assert g.n == 4 and g.M == 2
    assert g.layer_of.tolist() == [0, 0, 1, 1]
    assert g.edges() == [(0, 2), (1, 3)]
    assert g.block(0, 1).tolist() == [[True, False], [False, True]]
    assert g.is_admissible(MasterGraph.from_pairs(2, [(0, 1)]))
    assert not g.is_admissible(MasterGraph.from_pairs(2, [(0, 0), (1, 1)]))
    assert g == MultilayerGraph.from_edges((2, 2), [(1, 3), (2, 0)])
    assert g.digest() == MultilayerGraph.from_edges((2, 2), [(1, 3), (0, 2)]).digest()
    assert g.digest() != MultilayerGraph.from_edges((2, 2), [(0, 3), (1, 2)]).digest()
    assert layer_offsets((2, 3)).tolist() == [0, 2, 5]


def test_degree_matrix_examples():
    tri = MultilayerGraph.from_edges((3,), [(0, 1), (1, 2), (0, 2)])
    assert degree_matrix(tri)[(0, 0)].tolist() == [2, 2, 2]
    empty = MultilayerGraph.empty((2, 3))
    assert all(not v.any() for v in degree_matrix(empty).values())
    cross = MultilayerGraph.from_edges((2, 2), [(0, 2)])
    d = degree_matrix(cross)
    assert d[(0, 1)].tolist() == [1, 0] and d[(1, 0)].tolist() == [1, 0]


@st.composite
def layered_graphs(draw, max_n=8):
    sizes = draw(st.lists(st.integers(1, 3), min_size=1, max_size=3))
    n = sum(sizes)
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    A = np.zeros((n, n), dtype=bool)
    A[np.triu_indices(n, 1)] = bits
    return MultilayerGraph(tuple(sizes), A | A.T)


@given(layered_graphs())
def test_handshake_identity_per_block(g):
    d = degree_matrix(g)
    for s in range(g.M):
        for t in range(g.M):
            assert d[(s, t)].sum() == d[(t, s)].sum()
        assert d[(s, s)].sum() % 2 == 0
    assert sum(v.sum() for v in d.values()) == 2 * len(g.edges())


def test_empirical_distribution_examples():
    assert empirical_distribution((2, 2, 2)).mass == {2: 1.0}
    assert empirical_distribution((1, 1, 2, 2)).mass == {1: 0.5, 2: 0.5}
    assert empirical_distribution((0, 3)).mass == {0: 0.5, 3: 0.5}
    with pytest.raises(ValueError, match="empty sequence"):
        empirical_distribution(())


@given(st.lists(st.integers(0, 20), min_size=1, max_size=30), st.randoms())
def test_empirical_distribution_permutation_invariant(k, rnd):
    shuffled = list(k)
    rnd.shuffle(shuffled)
    assert empirical_distribution(k) == empirical_distribution(shuffled)


def test_degree_distribution_checks():
    with pytest.raises(ValueError):
        DegreeDistribution({1: 0.5})
    with pytest.raises(ValueError):
        DegreeDistribution({-1: 1.0})
    f = DegreeDistribution({1: 0.25, 3: 0.75})
    assert f.support == [1, 3] and f[2] == 0.0 and f.mean() == 2.5


def test_layer_limits():
    assert LayerLimits.uniform(4).A == (0.25,) * 4
    assert LayerLimits.from_ratio(1.0).A == (0.5, 0.5)
    assert LayerLimits.from_ratio(math.inf).A == (0.0, 1.0)
    with pytest.raises(ValueError):
        LayerLimits((0.5, 0.6))


def test_constraints_d_and_l_partition():
    cs = ConstraintSet((
        DegreeConstraint(0, 0, (1, 1)),
        DegreeConstraint(1, 0, (1,), (0, 1)),
        LinkCountConstraint(1, 1, 0),
    ))
    assert cs.D == {(0, 0), (1, 0), (0, 1)}
    assert cs.L == {(1, 1)}
    assert set(cs.by_block()) == {(0, 0), (0, 1), (1, 1)}
    c = DegreeConstraint(1, 0, (1,), (0, 1))
    assert c.key == (0, 1) and c.oriented() == ((0, 1), (1,))
    assert DegreeConstraint(0, 1, (1, 1)).one_sided
    with pytest.raises(ValueError):
        DegreeConstraint(0, 0, (1, 1), (1, 1))


def test_validate_examples():
    assert validate(bipartite_model((1, 1), (2, 0))) == []
    v = validate(bipartite_model((1, 1), (1, 0)))
    assert len(v) == 1 and "sum mismatch 2≠1" in v[0].message and v[0].pair == (0, 1)
    m = ModelSpec(MasterGraph.from_pairs(2, [(0, 1)]), (2, 2), ConstraintSet((LinkCountConstraint(0, 1, 7),)))
    v = validate(m)
    assert len(v) == 1 and "exceeds n1n2=4" in v[0].message
    assert str(v[0]).startswith("block (1,2)")


def test_validate_other_rules():
    master = MasterGraph.from_pairs(2, [(0, 0)])
    rules = lambda cons: [x.rule for x in validate(ModelSpec(master, (3, 2), ConstraintSet(cons)))]  # noqa: E731
    assert rules(()) == ["unconstrained"]
    assert rules((DegreeConstraint(0, 0, (1, 1, 1)),)) == ["parity"]
    assert rules((DegreeConstraint(0, 0, (1, 1)),)) == ["length"]
    assert rules((DegreeConstraint(0, 0, (3, 1, 0)),)) == ["range"]
    assert rules((DegreeConstraint(0, 0, (1, 1, 0)), LinkCountConstraint(0, 1, 1))) == ["inadmissible"]
    assert rules((DegreeConstraint(0, 0, (1, 1, 0)), LinkCountConstraint(0, 0, 1))) == ["duplicate"]
    assert [x.rule for x in validate(ModelSpec(master, (3,), ConstraintSet()))] == ["layers"]


def test_model_helpers():
    assert validate(unipartite_model((1, 1, 2, 2))) == []
    assert validate(link_count_model(4, 3)) == []
    m = top_only_model((2, 1), 3)
    assert m.layer_sizes == (2, 3) and validate(m) == []
    assert m.capacity(0, 1) == 6 and link_count_model(5, 0).capacity(0, 0) == 10
    with pytest.raises(ValueError):
        bipartite_model((1,), None)


def test_core_types_are_immutable():
    g = MultilayerGraph.from_edges((2,), [(0, 1)])
    with pytest.raises(ValueError):
        g.adjacency[0, 1] = False
    with pytest.raises(Exception):
        g.layer_sizes = (1, 1)
