import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensemblex.core import (
    ConstraintSet,
    DegreeConstraint,
    LinkCountConstraint,
    MasterGraph,
    ModelSpec,
    bipartite_model,
    link_count_model,
    top_only_model,
    unipartite_model,
)
from ensemblex.graphical import erdos_gallai
from ensemblex.microcanonical import (
    CapExceededError,
    count_asymptotic_bipartite,
    count_asymptotic_unipartite,
    count_by_enumeration,
    count_exact_bipartite,
    count_exact_unipartite,
    count_link_only,
    count_model,
    count_top_only,
    enumerate_graphs,
    fiber_mask,
)


def test_exact_unipartite_examples():
    assert count_exact_unipartite((2, 2, 2)).omega == 1
    r = count_exact_unipartite((1, 1, 1, 1))
    assert r.omega == 3 and r.log_omega == pytest.approx(math.log(3)) and r.method == "exact"
    r = count_exact_unipartite((3, 3, 1, 1))
    assert r.omega == 0 and r.log_omega == -math.inf
    # perfect matchings on 12 nodes: 11!! = 10395
    assert count_exact_unipartite((1,) * 12).omega == 10395
    # 2-regular graphs on 6 nodes: 60 hexagons + 10 pairs of triangles
    assert count_exact_unipartite((2,) * 6).omega == 70


def test_exact_bipartite_examples():
    assert count_exact_bipartite((1, 1), (1, 1)).omega == 2
    assert count_exact_bipartite((1, 1, 1), (1, 1, 1)).omega == 6
    assert count_exact_bipartite((2, 2), (2, 2)).omega == 1
    assert count_exact_bipartite((2, 2), (1, 1)).omega == 0
    assert count_exact_bipartite((1,) * 6, (1,) * 6).omega == math.factorial(6)


def test_exact_caps():
    with pytest.raises(CapExceededError, match="asymptotic"):
        count_exact_unipartite((1,) * 14)
    with pytest.raises(CapExceededError, match="asymptotic"):
        count_exact_bipartite((1,) * 5, (1,) * 10)
    # the cap can be lifted explicitly for oracle work
    assert count_exact_unipartite((1,) * 14, max_n=14).omega == 135135


@pytest.mark.parametrize("n", [3, 4, 5])
def test_exact_unipartite_matches_enumeration(n):
    en = enumerate_graphs(unipartite_model((0,) * n))
    degs = en.targeted_degrees(0, 0)
    for k in itertools.product(range(n), repeat=n):
        expected = int(np.all(degs == np.array(k), axis=1).sum())
        assert count_exact_unipartite(k).omega == expected


def test_exact_bipartite_matches_enumeration():
    model = bipartite_model((0, 0, 0), (0, 0))
    en = enumerate_graphs(model)
    top, bottom = en.targeted_degrees(0, 1), en.targeted_degrees(1, 0)
    for t in itertools.product(range(3), repeat=3):
        for b in itertools.product(range(4), repeat=2):
            expected = int((np.all(top == t, axis=1) & np.all(bottom == b, axis=1)).sum())
            assert count_exact_bipartite(t, b).omega == expected


@given(st.lists(st.integers(0, 6), min_size=1, max_size=8), st.randoms())
@settings(max_examples=60, deadline=None)
def test_exact_count_permutation_invariant(k, rnd):
    k = [min(x, len(k) - 1) for x in k]
    shuffled = list(k)
    rnd.shuffle(shuffled)
    assert count_exact_unipartite(k).omega == count_exact_unipartite(shuffled).omega


def test_asymptotic_unipartite_examples():
    r = count_asymptotic_unipartite((1, 1))
    assert r.method == "asymptotic" and r.log_omega != 0.0  # finite-size gap to ln 1
    exact = count_exact_unipartite((2,) * 10).log_omega
    approx = count_asymptotic_unipartite((2,) * 10).log_omega
    assert abs(approx - exact) / exact < 0.25
    zero = count_asymptotic_unipartite((0, 0, 0))
    assert zero.log_omega == 0.0 and zero.omega == 1
    assert count_asymptotic_unipartite((1, 0, 0)).log_omega == -math.inf
    assert "dropped" in r.correction_terms


def test_asymptotic_unipartite_formula():
    k = np.array([1, 2, 3, 2, 1, 1])
    L = k.sum() / 2
    kbar, k2bar = k.mean(), (k**2).mean()
    expected = (math.log(math.sqrt(2)) + L * (math.log(2 * L) - 1)
                - sum(math.lgamma(x + 1) for x in k) - (k2bar / (2 * kbar)) ** 2 + 0.25)
    assert count_asymptotic_unipartite(k).log_omega == pytest.approx(expected, abs=1e-12)


def test_asymptotic_vs_exact_per_node_gap_shrinks():
    gaps = [abs(count_asymptotic_unipartite((2,) * n).log_omega - count_exact_unipartite((2,) * n).log_omega) / n
            for n in (6, 8, 10, 12)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_asymptotic_bipartite_examples():
    assert count_asymptotic_bipartite((1, 1), (1, 1)).log_omega == pytest.approx(math.log(2))
    assert count_asymptotic_bipartite((1, 1, 1), (1, 1, 1)).log_omega == pytest.approx(math.log(6))
    r = count_asymptotic_bipartite((2, 2), (2, 2))
    assert r.log_omega == pytest.approx(math.log(24 / 16))
    assert r.correction_terms["sparse_regime"] is False
    assert count_asymptotic_bipartite((1,), (2,)).log_omega == -math.inf


def test_closed_form_counts():
    assert count_top_only((2,), 4).log_omega == pytest.approx(math.log(6))
    assert count_top_only((0, 0, 0), 4).log_omega == 0.0
    r = count_top_only((1, 1), 3)
    assert r.omega == 9 and r.log_omega == pytest.approx(math.log(9))
    assert count_top_only((5,), 4).log_omega == -math.inf
    assert count_link_only(3, 6).omega == 20
    assert count_link_only(0, 6).log_omega == 0.0
    assert count_link_only(5, 12).log_omega == pytest.approx(math.log(792))
    assert count_link_only(7, 6).log_omega == -math.inf
    # large capacities stay in log space
    big = count_link_only(10**6, 10**8)
    assert big.omega is None and math.isfinite(big.log_omega)


def test_count_model_examples():
    multiplex = ModelSpec(
        MasterGraph.from_pairs(2, [(0, 0), (1, 1)]),
        (4, 4),
        ConstraintSet((DegreeConstraint(0, 0, (1,) * 4), DegreeConstraint(1, 1, (1,) * 4))),
    )
    r = count_model(multiplex)
    assert r.omega == 9 and r.log_omega == pytest.approx(math.log(9))
    assert set(r.per_block) == {(0, 0), (1, 1)}
    assert count_model(bipartite_model((1, 1), (1, 1))).log_omega == pytest.approx(math.log(2))
    empty = ModelSpec(MasterGraph(np.zeros((2, 2))), (2, 2), ConstraintSet())
    r = count_model(empty)
    assert r.log_omega == 0.0 and r.omega == 1 and count_by_enumeration(empty) == 1
    dead = ModelSpec(
        MasterGraph.from_pairs(2, [(0, 0), (1, 1)]),
        (4, 2),
        ConstraintSet((DegreeConstraint(0, 0, (3, 3, 1, 1)), DegreeConstraint(1, 1, (1, 1)))),
    )
    r = count_model(dead)
    assert r.log_omega == -math.inf and r.omega == 0
    with pytest.raises(ValueError):
        count_model(ModelSpec(MasterGraph.from_pairs(1, [(0, 0)]), (3,), ConstraintSet()))
    assert count_model(unipartite_model((2,) * 8), "asymptotic").method == "asymptotic"


def test_count_model_matches_enumeration_on_mixed_specs():
    model = ModelSpec(
        MasterGraph.from_pairs(3, [(0, 0), (0, 1), (1, 2), (2, 2)]),
        (2, 2, 2),
        ConstraintSet((
            LinkCountConstraint(0, 0, 1),
            DegreeConstraint(0, 1, (1, 2), (2, 1)),
            DegreeConstraint(2, 1, (1, 0)),
            LinkCountConstraint(2, 2, 0),
        )),
    )
    assert count_model(model).omega == count_by_enumeration(model) == 2


@pytest.mark.parametrize("k", [(1, 1, 1, 1), (2, 2, 1, 1), (2, 2, 2, 2, 2), (1, 1, 0)])
def test_mic_probabilities_normalised(k):
    model = unipartite_model(k)
    en = enumerate_graphs(model)
    mask = fiber_mask(model, en)
    omega = count_model(model).omega
    assert mask.sum() == omega
    assert math.fsum([1 / omega] * omega) == pytest.approx(1.0, abs=1e-15)


def test_enumeration_cap():
    with pytest.raises(CapExceededError):
        enumerate_graphs(link_count_model(7, 0))
    assert len(enumerate_graphs(top_only_model((1,), 4))) == 16
