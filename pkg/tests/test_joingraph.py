import warnings

import networkx as nx
import pytest

from hdmn.errors import ModelError
from hdmn.joingraph import (
    IBoundWarning,
    build_join_graph,
    build_join_tree,
    conditioned_width,
    elimination_cliques,
    elimination_order,
    induced_width,
    interaction_graph,
    min_fill_order,
    paste_interfaces,
    select_w_cutset,
)
from hdmn.network import unroll
from hdmn.random_models import random_dbn, random_hmm, random_hmn


def test_interaction_graph_is_moral():
    adj = interaction_graph([{0, 1}, {1, 2, 3}], [4])
    assert adj[1] == {0, 2, 3} and adj[4] == set()


def test_chain_has_width_one():
    adj = interaction_graph([{k, k + 1} for k in range(6)])
    order = min_fill_order(adj)
    assert induced_width(adj, order) == 1
    assert all(len(c) <= 2 for c in elimination_cliques(adj, order))


def test_strong_order_eliminates_continuous_first():
    # continuous 2, 3 hang off discrete 0, 1
    adj = interaction_graph([{0, 1}, {0, 2}, {1, 3}, {2, 3}])
    order = min_fill_order(adj, continuous={2, 3})
    assert set(order[:2]) == {2, 3}


@pytest.mark.parametrize("seed", range(15))
def test_join_tree_invariants(seed):
    net = random_hmn(seed, n_discrete=5, n_continuous=3, n_constraints=2)
    jt = build_join_tree(net)
    jt.check()
    assert jt.is_tree
    g = nx.Graph(list(jt.edges))
    g.add_nodes_from(c.id for c in jt.clusters)
    assert nx.is_tree(g)
    scopes = {frozenset(f.scope) for f in net.functions()}
    assert all(any(s <= c.variables for c in jt.clusters) for s in scopes)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("i", [1, 2, 3])
def test_join_graph_respects_i_bound(seed, i):
    net = random_hmn(seed, n_discrete=6, n_continuous=2, n_constraints=2, max_card=2)
    jt = build_join_tree(net)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IBoundWarning)
        jg = build_join_graph(jt, i)
    jg.check()
    assert jg.variables == jt.variables
    for c in jg.clusters:
        if c.id not in jg.oversized:
            assert jg.discrete_size(c.id) <= i + 1


def test_large_i_gives_the_tree():
    net = random_hmn(3, n_discrete=4, n_continuous=2)
    jt = build_join_tree(net)
    jg = build_join_graph(jt, 50)
    assert jg.is_tree and len(jg.clusters) == len(jt.clusters)


def test_check_detects_broken_running_intersection():
    net = random_hmn(1, n_discrete=4, n_continuous=0)
    jt = build_join_tree(net)
    if len(jt.clusters) < 2:
        pytest.skip("single cluster")
    (a, b), _ = next(iter(jt.edges.items()))
    jt.edges[(a, b)] = frozenset()
    jt._nbrs = None
    with pytest.raises(ModelError):
        jt.check()


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("w", [0, 1, 2])
def test_w_cutset_bounds_width(seed, w):
    net = random_hmn(seed, n_discrete=7, n_continuous=2, n_constraints=2, max_card=2)
    R, Z = select_w_cutset(net, w)
    assert R <= set(net.discrete_ids) and not (R & Z)
    assert conditioned_width(net, R) <= w


def test_pasted_slice_graph_contains_interface():
    dmn = random_dbn(4, n_discrete=3, n_continuous=1, n_constraints=1)
    sg = paste_interfaces(dmn, 2, observed=())
    for t in (1, 2):
        jg = sg.instantiate(t)
        jg.check()


def test_unrolled_hmm_tree_width():
    net = unroll(random_hmm(0, 3, 2), 5)
    order = elimination_order(net)
    assert induced_width(interaction_graph([f.scope for f in net.functions()], net.variables), order) <= 2


def test_to_dot_mentions_every_cluster():
    jt = build_join_tree(random_hmn(2))
    dot = jt.to_dot()
    assert dot.startswith("graph") and all(f"c{c.id} [" in dot for c in jt.clusters)
