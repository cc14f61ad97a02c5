import random

import pytest

from tensorplace import (
    ComputationGraph,
    GraphInput,
    InputRef,
    OperatorNode,
    match_all,
    match_at,
    parse_pattern,
)
from tensorplace.errors import PatternError
from tensorplace.patterns import Wildcard

import util


def test_fused_chain_match(chain3):
    p = parse_pattern("relu(add(conv2d(*, *), *))")
    m = match_at(chain3, 2, p)
    assert m is not None
    assert m.root == 2
    assert m.nodes.node_ids == frozenset({0, 1, 2})
    assert m.binding_map() == {(): 2, (0,): 1, (0, 0): 0}


def test_match_requires_root_kind(chain3):
    assert match_at(chain3, 1, parse_pattern("relu(*)")) is None
    assert match_at(chain3, 2, parse_pattern("relu(*)")) is not None


def test_zero_arg_pattern_matches_any_arity(chain3):
    m = match_at(chain3, 0, parse_pattern("conv2d()"))
    assert m is not None
    assert m.nodes.node_ids == frozenset({0})


def test_arity_mismatch_rejected(chain3):
    assert match_at(chain3, 0, parse_pattern("conv2d(*)")) is None
    assert match_at(chain3, 0, parse_pattern("conv2d(*, *, *)")) is None


def test_constraint_filters_match(chain3):
    assert match_at(chain3, 0, parse_pattern("conv2d(*, *){stride=1}")) \
        is not None
    assert match_at(chain3, 0, parse_pattern("conv2d(*, *){stride=2}")) is None


def test_wildcard_binds_edge_not_node(chain3):
    m = match_at(chain3, 1, parse_pattern("add(*, *)"))
    assert m is not None
    assert m.nodes.node_ids == frozenset({1})


def test_non_wildcard_arg_requires_node_producer(chain3):
    # conv2d's inputs are graph inputs, not nodes
    assert match_at(chain3, 1, parse_pattern("add(relu(*), *)")) is None


def test_multi_consumer_interior_rejected(diamond):
    # conv2d (node 0) feeds both relu and tanh; a match fusing only
    # relu(conv2d) would have to re-emit conv2d's value for tanh
    assert match_at(diamond, 1, parse_pattern("relu(conv2d(*, *))")) is None


def test_interior_graph_output_rejected():
    g = ComputationGraph(
        inputs=[GraphInput("x", (4,))],
        nodes=[OperatorNode(0, "add", {}, (InputRef("x"), InputRef("x")), (4,)),
               OperatorNode(1, "relu", {}, (0,), (4,))],
        outputs=[0, 1])
    assert match_at(g, 1, parse_pattern("relu(add(*, *))")) is None
    # same shape without node 0 exported is fine
    g2 = ComputationGraph(
        inputs=[GraphInput("x", (4,))],
        nodes=[OperatorNode(0, "add", {}, (InputRef("x"), InputRef("x")), (4,)),
               OperatorNode(1, "relu", {}, (0,), (4,))],
        outputs=[1])
    assert match_at(g2, 1, parse_pattern("relu(add(*, *))")) is not None


def test_root_value_may_escape(diamond):
    # the whole diamond can fuse: only the root (node 3) is consumed outside
    p = parse_pattern("add(relu(conv2d(*, *)), tanh(conv2d(*, *)))")
    m = match_at(diamond, 3, p)
    assert m is not None
    assert m.nodes.node_ids == frozenset({0, 1, 2, 3})
    # conv2d bound by two positions with identical subtrees
    assert m.binding_map()[(0, 0)] == 0
    assert m.binding_map()[(1, 0)] == 0


def test_sharing_requires_identical_subtrees(diamond):
    # positions disagree structurally at the shared node: the tanh branch
    # writes conv2d with a constraint the other branch lacks
    p = parse_pattern(
        'add(relu(conv2d(*, *)), tanh(conv2d(*, *){stride=9}))')
    assert match_at(diamond, 3, p) is None


def test_identical_branches_may_bind_distinct_nodes():
    # two separate relu producers; the sharing rule permits but does not
    # force binding them to one node
    g = ComputationGraph(
        inputs=[GraphInput("x", (4,))],
        nodes=[OperatorNode(0, "relu", {}, (InputRef("x"),), (4,)),
               OperatorNode(1, "relu", {}, (InputRef("x"),), (4,)),
               OperatorNode(2, "add", {}, (0, 1), (4,))],
        outputs=[2])
    m = match_at(g, 2, parse_pattern("add(relu(*), relu(*))"))
    assert m is not None
    assert m.nodes.node_ids == frozenset({0, 1, 2})


def test_duplicated_input_binds_one_node():
    g = ComputationGraph(
        inputs=[GraphInput("x", (4,))],
        nodes=[OperatorNode(0, "relu", {}, (InputRef("x"),), (4,)),
               OperatorNode(1, "add", {}, (0, 0), (4,))],
        outputs=[1])
    m = match_at(g, 1, parse_pattern("add(relu(*), relu(*))"))
    assert m is not None
    assert m.nodes.node_ids == frozenset({0, 1})


def test_bare_wildcard_raises(chain3):
    with pytest.raises(PatternError):
        match_at(chain3, 0, Wildcard())
    with pytest.raises(PatternError):
        match_all(chain3, Wildcard())


def test_unknown_root_raises(chain3):
    with pytest.raises(KeyError):
        match_at(chain3, 99, parse_pattern("relu(*)"))


def test_match_all_ordered_by_root(diamond):
    matches = match_all(diamond, parse_pattern("conv2d()"))
    assert [m.root for m in matches] == [0]
    g = util.chain_graph(["relu", "relu", "relu"])
    roots = [m.root for m in match_all(g, parse_pattern("relu()"))]
    assert roots == [0, 1, 2]


def test_match_all_equals_brute_force_random():
    rng = random.Random(3355)
    pairs = 0
    nonempty = 0
    while pairs < 120:
        g = util.random_dag(rng, rng.randrange(3, 9))
        pattern = util.random_pattern(rng)
        produced = {(m.root, m.nodes.node_ids, m.binding)
                    for m in match_all(g, pattern)}
        expected = util.brute_matches(g, pattern)
        assert produced == expected
        pairs += 1
        if expected:
            nonempty += 1
    # the generator must actually exercise matching, not just mismatches
    assert nonempty >= 20
