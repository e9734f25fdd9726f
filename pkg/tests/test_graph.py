import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentscore import (LatentDag, L, X, atomic_covers, cpdag, d_separated, is_atomic_cover,
                         markov_equivalent, mec_key, op_atomic, op_min, op_skeleton,
                         pure_children, satisfies_hierarchical, satisfies_one_factor, skeleton,
                         v_structures)
from latentscore.enumeration import EnumerationConfig, enumerate_one_factor

import oracles


def one_factor(blocks, latent_edges=()):
    m = sum(blocks)
    meas, start = [], 0
    for j, size in enumerate(blocks):
        meas += [(j, i) for i in range(start, start + size)]
        start += size
    return LatentDag.from_edges(m, len(blocks), meas, latent_edges)


def operator_example():
    """Root L0 over a three-latent cover {L1, L2, L3} and a redundant singleton L4.

    X7 hangs off L3 alone and X8..X10 off L4.
    """
    meas = [(j, i) for j in (1, 2, 3) for i in range(7)] + [(3, 7)]
    meas += [(4, i) for i in (8, 9, 10)]
    return LatentDag.from_edges(11, 5, meas, [(0, 1), (0, 2), (0, 3), (0, 4)])


@st.composite
def latent_dags(draw, max_m=5, max_n=3):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(0, max_n))
    b = np.array(draw(st.lists(st.integers(0, 1), min_size=m * n, max_size=m * n)),
                 dtype=np.int8).reshape(m, n)
    c = np.zeros((n, n), dtype=np.int8)
    for i, j in itertools.combinations(range(n), 2):
        c[i, j] = draw(st.integers(0, 1))
    return LatentDag(b, c)


# construction ------------------------------------------------------------------

def test_cycle_rejected():
    with pytest.raises(ValueError):
        LatentDag.from_edges(3, 2, [], [(0, 1), (1, 0)])


def test_non_binary_rejected():
    with pytest.raises(ValueError):
        LatentDag(np.array([[2]]), np.zeros((1, 1)))


def test_lower_triangular_latent_edges_accepted():
    g = LatentDag.from_edges(3, 2, [(0, 0), (1, 1), (1, 2)], [(0, 1)])
    assert g.c_adj[1, 0] == 1 and g.n_edges == 4


def test_json_roundtrip():
    g = operator_example()
    again = LatentDag.from_dict(json.loads(json.dumps(g.to_dict())))
    assert np.array_equal(again.b_adj, g.b_adj) and np.array_equal(again.c_adj, g.c_adj)


def test_json_cycle_rejected():
    obj = {"m": 1, "n": 2, "latent_edges": [[0, 1], [1, 0]], "measurement_edges": []}
    with pytest.raises(ValueError):
        LatentDag.from_dict(obj)


# skeleton and v-structures -----------------------------------------------------

def test_skeleton_single_latent():
    g = one_factor([3])
    assert skeleton(g) == {frozenset((L(0), X(i))) for i in range(3)}


def test_skeleton_empty():
    assert skeleton(LatentDag.empty(3)) == set()


def test_skeleton_matches_edge_list():
    g = operator_example()
    expected = {frozenset((L(j), X(i))) for j, i in g.measurement_edges()}
    expected |= {frozenset((L(j), L(i))) for j, i in g.latent_edges()}
    assert skeleton(g) == expected and len(expected) == g.n_edges == 29


def test_v_structure_collider():
    g = LatentDag.from_edges(1, 2, [(0, 0), (1, 0)])
    assert v_structures(g) == {(L(0), X(0), L(1))}


def test_no_v_structures_in_one_factor_chain():
    assert v_structures(one_factor([3, 3], [(0, 1)])) == set()


def test_v_structure_after_skeleton_operator():
    assert (L(1), X(7), L(2)) in v_structures(op_skeleton(operator_example()))


# d-separation -------------------------------------------------------------------

def test_dsep_examples():
    assert not d_separated(LatentDag.from_edges(1, 1, [(0, 0)]), [L(0)], [X(0)], [])
    fork = LatentDag.from_edges(2, 1, [(0, 0), (0, 1)])
    assert d_separated(fork, [X(0)], [X(1)], [L(0)])
    collider = LatentDag.from_edges(1, 2, [(0, 0), (1, 0)])
    assert not d_separated(collider, [L(0)], [L(1)], [X(0)])
    assert d_separated(collider, [L(0)], [L(1)], [])


def test_dsep_overlap_error():
    g = one_factor([3])
    with pytest.raises(ValueError):
        d_separated(g, [X(0)], [X(0)], [])


@settings(max_examples=150, deadline=None)
@given(latent_dags(max_m=4, max_n=3), st.data())
def test_dsep_matches_path_enumeration(g, data):
    nodes = g.nodes()
    labels = data.draw(st.lists(st.integers(0, 2), min_size=len(nodes), max_size=len(nodes)))
    a = [v for v, lab in zip(nodes, labels) if lab == 0]
    b = [v for v, lab in zip(nodes, labels) if lab == 1]
    z = [v for v, lab in zip(nodes, labels) if lab == 2]
    if not a or not b:
        return
    idx = {v: k for k, v in enumerate(nodes)}
    expected = oracles.d_separated_oracle(np.asarray(g.adj), {idx[v] for v in a},
                                          {idx[v] for v in b}, {idx[v] for v in z})
    assert d_separated(g, a, b, z) == expected


# Markov equivalence ---------------------------------------------------------------

def test_equivalent_to_itself():
    g = operator_example()
    assert markov_equivalent(g, g)


def test_equivalent_under_block_swap():
    a = one_factor([3, 3], [(0, 1)])
    swapped = LatentDag.from_edges(6, 2, [(1, i) for i in range(3)] + [(0, i) for i in range(3, 6)],
                                   [(1, 0)])
    assert markov_equivalent(a, swapped)


def test_six_children_vs_two_triples():
    assert not markov_equivalent(one_factor([6]), one_factor([3, 3]))


def test_equivalence_requires_same_m():
    with pytest.raises(ValueError):
        markov_equivalent(one_factor([3]), one_factor([4]))


def test_isolated_latents_ignored():
    g = one_factor([3])
    padded = LatentDag(np.hstack([g.b_adj, np.zeros((3, 1), dtype=np.int8)]), np.zeros((2, 2)))
    assert markov_equivalent(g, padded)


@settings(max_examples=60, deadline=None)
@given(latent_dags(max_m=4, max_n=3), st.data())
def test_equivalence_invariant_to_relabeling(g, data):
    perm = data.draw(st.permutations(range(g.n)))
    assert markov_equivalent(g, g.permute_latents(perm))
    assert mec_key(g) == mec_key(g.permute_latents(perm))


def test_equivalence_relation_on_enumerated_graphs():
    graphs = enumerate_one_factor(EnumerationConfig(6, mode="one-factor"))
    graphs = graphs + [g.permute_latents(list(reversed(range(g.n)))) for g in graphs]
    rel = np.array([[markov_equivalent(a, b) for b in graphs] for a in graphs])
    assert rel.diagonal().all()
    assert (rel == rel.T).all()
    # transitivity: the relation composed with itself adds nothing
    assert ((rel.astype(int) @ rel.astype(int) > 0) == rel).all()


# CPDAG -----------------------------------------------------------------------------

def test_cpdag_single_edge_undirected():
    c = cpdag(LatentDag.from_edges(1, 1, [(0, 0)]))
    assert c.directed_edges == frozenset() and c.undirected_edges == {frozenset((L(0), X(0)))}


def test_cpdag_collider_compelled():
    c = cpdag(LatentDag.from_edges(1, 2, [(0, 0), (1, 0)]))
    assert c.directed_edges == {(L(0), X(0)), (L(1), X(0))}


def test_cpdag_one_factor_pair_matches_oracle():
    # a tree without colliders: every edge reversible (see the decisions ledger)
    g = one_factor([3, 3], [(0, 1)])
    c = cpdag(g)
    directed, undirected = oracles.cpdag_oracle(np.asarray(g.adj))
    assert directed == set() and len(undirected) == 7
    assert c.undirected_edges == skeleton(g) and not c.directed_edges


@settings(max_examples=80, deadline=None)
@given(latent_dags(max_m=3, max_n=3))
def test_cpdag_partition_of_skeleton(g):
    c = cpdag(g)
    assert {frozenset(e) for e in c.directed_edges} | set(c.undirected_edges) == skeleton(g)
    assert not ({frozenset(e) for e in c.directed_edges} & set(c.undirected_edges))


# pure children and atomic covers -------------------------------------------------------

def test_pure_children_single_latent():
    assert pure_children(one_factor([3]), [L(0)]) == [frozenset({X(0), X(1), X(2)})]


def test_pure_children_excludes_shared_child():
    g = LatentDag.from_edges(4, 2, [(0, 0), (1, 0), (0, 1), (0, 2), (1, 3)])
    pcs = pure_children(g, [L(0)])
    assert all(X(0) not in s for s in pcs)
    assert pcs == [frozenset({X(1), X(2)})]


def test_pure_children_of_cover_block():
    g = operator_example()
    assert pure_children(g, [L(1), L(2), L(3)]) == [frozenset(X(i) for i in range(8))]


def test_pure_children_rejects_measured():
    with pytest.raises(ValueError):
        pure_children(one_factor([3]), [X(0)])


def test_singleton_with_three_children_is_not_a_cover():
    # disjoint C and N need 2 + 2 neighbours (see the decisions ledger)
    assert not is_atomic_cover(one_factor([3]), [L(0)])
    assert is_atomic_cover(one_factor([4]), [L(0)])


def test_pair_with_two_pure_children_is_not_a_cover():
    g = LatentDag.from_edges(2, 2, [(j, i) for j in (0, 1) for i in range(2)])
    assert not is_atomic_cover(g, [L(0), L(1)])


def fig2_style():
    """Root L0 with one measured child over two-latent covers {L1, L2} and {L3, L4}."""
    meas = [(j, i) for j in (1, 2) for i in range(5)] + [(j, i) for j in (3, 4) for i in range(5, 10)]
    return LatentDag.from_edges(11, 5, meas + [(0, 10)], [(0, 1), (0, 2), (0, 3), (0, 4)])


def test_two_latent_cover_in_two_level_graph():
    g = fig2_style()
    assert is_atomic_cover(g, [L(1), L(2)]) and is_atomic_cover(g, [L(3), L(4)])
    assert set(atomic_covers(g)) == {frozenset({L(0)}), frozenset({L(1), L(2)}),
                                      frozenset({L(3), L(4)})}


# structural assumptions --------------------------------------------------------------

def test_one_factor_checks():
    assert satisfies_one_factor(one_factor([3, 3, 3], [(0, 1), (1, 2)]))
    two_parents = LatentDag.from_edges(6, 2, [(0, 0), (1, 0), (0, 1), (0, 2), (1, 3), (1, 4), (1, 5)])
    assert not satisfies_one_factor(two_parents)
    assert not satisfies_one_factor(one_factor([2, 3]))


@settings(max_examples=100, deadline=None)
@given(latent_dags(max_m=6, max_n=2))
def test_one_factor_equals_counts(g):
    expected = g.n > 0 and bool((g.b_adj.sum(axis=1) == 1).all() and (g.b_adj.sum(axis=0) >= 3).all())
    assert satisfies_one_factor(g) == expected


def test_hierarchical_checks():
    assert satisfies_hierarchical(fig2_style())
    tri = LatentDag.from_edges(4, 2, [(0, 0), (1, 0), (0, 1), (0, 2), (1, 2), (1, 3)], [(0, 1)])
    assert not satisfies_hierarchical(tri)
    assert not satisfies_hierarchical(LatentDag.from_edges(1, 1, [(0, 0)]))
    assert not satisfies_hierarchical(LatentDag.empty(3))


# operators ------------------------------------------------------------------------------

def test_skeleton_operator_example():
    g = operator_example()
    s = op_skeleton(g)
    added = {(int(j), int(i)) for j, i in s.measurement_edges()} - set(g.measurement_edges())
    assert added == {(1, 7), (2, 7)}
    assert s.latent_edges() == g.latent_edges()


def test_min_operator_example():
    s = op_min(op_skeleton(operator_example()))
    assert s.n == 4
    assert {(0, 8), (0, 9), (0, 10)} <= set(s.measurement_edges())
    assert set(s.latent_edges()) == {(0, 1), (0, 2), (0, 3)}


def test_atomic_operator_example():
    s = op_atomic(op_min(op_skeleton(operator_example())))
    assert set(s.latent_edges()) == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}


def test_atomic_operator_pair():
    g = fig2_style()
    extra = set(op_atomic(g).latent_edges()) - set(g.latent_edges())
    assert extra == {(1, 2), (3, 4)}


def test_operators_fix_one_factor_graphs():
    for g in enumerate_one_factor(EnumerationConfig(7, mode="one-factor")):
        if satisfies_hierarchical(g):
            assert op_skeleton(g) == g
        assert np.array_equal(op_atomic(g).adj, g.adj)


def test_min_operator_leaves_chain_without_merge():
    # L1 is the only pure child of L0 and L0 has its own measured children
    g = LatentDag.from_edges(8, 2, [(0, i) for i in range(4)] + [(1, i) for i in range(4, 8)],
                             [(0, 1)])
    assert np.array_equal(op_min(g).adj, g.adj)


def test_operators_idempotent_on_examples():
    for g in (operator_example(), fig2_style(), one_factor([4, 4], [(0, 1)])):
        for op in (op_skeleton, op_min, op_atomic):
            once = op(g)
            assert np.array_equal(op(once).adj, once.adj)
