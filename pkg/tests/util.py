"""Shared builders, random generators, and brute-force references.

The brute-force functions here are deliberately independent of the package's
algorithms: they enumerate paths, assignments, or subsets directly and are
only usable at small sizes. Tests compare the production implementations
against them.
"""

from __future__ import annotations

import json
import random

from tensorplace import (
    Assignment,
    BackendDescriptor,
    BackendKind,
    ComputationGraph,
    GraphInput,
    InputRef,
    OpCost,
    OperatorNode,
    OpPattern,
    PatternRegistry,
    SimMeasurer,
    SimProfile,
    Wildcard,
)
from tensorplace.patterns import Equals, IntRange, OneOf, Pattern
from tensorplace.rules import (
    FusionTransition,
    OpClass,
    OpValidity,
    PatternRule,
    save_rule_file,
)

OP_KINDS = ("conv2d", "add", "relu", "mul", "tanh", "dense")
SHAPES = ((1, 4, 4, 4), (1, 8, 8, 8), (1, 16, 4, 4))


def chain_graph(ops, shape=(1, 16, 8, 8), attrs=None):
    """Linear chain over `ops`; node i consumes node i-1, node 0 the input.

    `attrs` maps op kind to the attrs dict given to nodes of that kind.
    """
    nodes = []
    for i, op in enumerate(ops):
        src = InputRef("x") if i == 0 else i - 1
        node_attrs = dict((attrs or {}).get(op, {}))
        nodes.append(OperatorNode(i, op, node_attrs, (src,), shape))
    return ComputationGraph(inputs=[GraphInput("x", shape)], nodes=nodes,
                            outputs=[len(ops) - 1])


def conv_add_relu_graph(shape=(1, 16, 8, 8)):
    """conv2d -> add -> relu with a weight and a bias input."""
    return ComputationGraph(
        inputs=[GraphInput("x", shape), GraphInput("w", (16, 16, 3, 3)),
                GraphInput("b", shape)],
        nodes=[
            OperatorNode(0, "conv2d", {"stride": 1},
                         (InputRef("x"), InputRef("w")), shape),
            OperatorNode(1, "add", {}, (0, InputRef("b")), shape),
            OperatorNode(2, "relu", {}, (1,), shape),
        ],
        outputs=[2])


def diamond_graph(shape=(1, 8, 8, 8)):
    """conv2d fans out to relu and tanh, which re-converge into add."""
    return ComputationGraph(
        inputs=[GraphInput("x", shape), GraphInput("w", (8, 8, 3, 3))],
        nodes=[
            OperatorNode(0, "conv2d", {}, (InputRef("x"), InputRef("w")),
                         shape),
            OperatorNode(1, "relu", {}, (0,), shape),
            OperatorNode(2, "tanh", {}, (0,), shape),
            OperatorNode(3, "add", {}, (1, 2), shape),
        ],
        outputs=[3])


def random_dag(rng: random.Random, n_nodes: int, ops=OP_KINDS[:4],
               p_node_input=0.75) -> ComputationGraph:
    """Random DAG with ids 0..n-1 in topological order.

    Every node gets 1-2 inputs drawn from earlier nodes or the graph input;
    outputs are exactly the sink nodes, so validation always passes.
    """
    nodes = []
    for i in range(n_nodes):
        arity = rng.choice((1, 1, 2))
        inputs = []
        for _ in range(arity):
            if i > 0 and rng.random() < p_node_input:
                inputs.append(rng.randrange(i))
            else:
                inputs.append(InputRef("x"))
        attrs = {"variant": rng.randrange(3)}
        nodes.append(OperatorNode(i, rng.choice(ops), attrs, tuple(inputs),
                                  rng.choice(SHAPES)))
    consumed = {r for n in nodes for r in n.input_ids if isinstance(r, int)}
    outputs = [n.id for n in nodes if n.id not in consumed]
    return ComputationGraph(inputs=[GraphInput("x", SHAPES[0])], nodes=nodes,
                            outputs=outputs)


def derived_fused_pattern(rng: random.Random,
                          g: ComputationGraph) -> Pattern | None:
    """A depth-2 pattern copied from a random node's real surroundings, so
    it is guaranteed to match at least once somewhere."""
    with_preds = [n for n in g.nodes.values()
                  if any(isinstance(r, int) for r in n.input_ids)]
    if not with_preds:
        return None
    node = rng.choice(with_preds)
    args = []
    for ref in node.input_ids:
        if isinstance(ref, int) and rng.random() < 0.8:
            args.append(OpPattern(g.nodes[ref].op_kind, (), ()))
        else:
            args.append(Wildcard())
    return OpPattern(node.op_kind, tuple(args), ())


def random_setup(rng: random.Random, g: ComputationGraph,
                 n_backends: int = 2, fused_per_backend: int = 2):
    """Registry + measurer over `g`: backend b0 carries singletons for every
    op kind (keeping the graph coverable), later backends carry random
    singleton subsets plus structure-derived fused patterns."""
    present = sorted({n.op_kind for n in g.nodes.values()})
    registry = PatternRegistry()
    profiles = {}
    for b in range(n_backends):
        bid = f"b{b}"
        registry.add_backend(BackendDescriptor(bid,
                                               BackendKind.OP_KERNEL_LIBRARY))
        ops = present if b == 0 else [op for op in present
                                      if rng.random() < 0.7]
        for op in ops:
            registry.add_pattern(bid, f"{op}()")
        if b > 0:
            for _ in range(fused_per_backend):
                p = derived_fused_pattern(rng, g)
                if p is not None:
                    registry.add_pattern(bid, p)
        profiles[bid] = SimProfile(
            bid,
            {op: OpCost(rng.choice((0.0, 1e-6, 2e-6)),
                        round(rng.uniform(0.05, 1.0), 3))
             for op in present},
            fusion_discount=rng.choice((1.0, 0.95, 0.9, 0.8)))
    return registry, SimMeasurer(profiles)


def random_es_setup(rng: random.Random, g: ComputationGraph):
    """Like random_setup, plus a graph inference library backend 'gx' whose
    singleton support covers a random subset of the graph's op kinds."""
    present = sorted({n.op_kind for n in g.nodes.values()})
    registry, measurer = random_setup(rng, g)
    registry.add_backend(BackendDescriptor(
        "gx", BackendKind.GRAPH_INFERENCE_LIBRARY))
    for op in present:
        if rng.random() < 0.8:
            registry.add_pattern("gx", f"{op}()")
    profile = SimProfile(
        "gx",
        {op: OpCost(rng.choice((0.0, 1e-6)),
                    round(rng.uniform(0.05, 1.0), 3))
         for op in present},
        region_alpha=rng.choice((0.0, 0.02, 0.05)),
        region_floor=rng.choice((0.7, 0.9)))
    profiles = dict(measurer.profiles)
    profiles["gx"] = profile
    return registry, SimMeasurer(profiles)


def offload_chain_setup():
    """Six-op chain where only the middle run [1, 2, 3] is supported by the
    graph library. Frozen expectations at epsilon 0.01: the operator-level
    optimum keeps everything on cpu at 6.06; offloading exactly the middle
    run forms one 3-kernel region priced 3.06 * 0.9 = 2.754 for a graph-level
    total of 5.794, and that genome is (0, 1, 1, 1, 0, 0)."""
    g = chain_graph(["conv2d", "add", "relu", "add", "conv2d", "conv2d"])
    registry = PatternRegistry()
    registry.add_backend(BackendDescriptor("cpu",
                                           BackendKind.OP_KERNEL_LIBRARY))
    registry.add_backend(BackendDescriptor(
        "simgraph", BackendKind.GRAPH_INFERENCE_LIBRARY))
    for op in ("conv2d", "add", "relu"):
        registry.add_pattern("cpu", f"{op}()")
    for op in ("add", "relu"):
        registry.add_pattern("simgraph", f"{op}()")
    cpu = SimProfile("cpu", {op: OpCost(0.0, 1.0)
                             for op in ("conv2d", "add", "relu")})
    sim = SimProfile("simgraph", {"add": OpCost(0.0, 1.02),
                                  "relu": OpCost(0.0, 1.02)},
                     region_alpha=0.05, region_floor=0.7)
    return g, registry, SimMeasurer({"cpu": cpu, "simgraph": sim})


CPU_PROFILE_DOC = {
    "version": "collage-costs/1",
    "backend": "cpu",
    "ops": {"conv2d": {"coeff": 0.0, "overhead": 1.0},
            "add": {"coeff": 0.0, "overhead": 1.0},
            "relu": {"coeff": 0.0, "overhead": 1.0}},
}

SIM_PROFILE_DOC = {
    "version": "collage-costs/1",
    "backend": "simgraph",
    "ops": {"add": {"coeff": 0.0, "overhead": 1.02},
            "relu": {"coeff": 0.0, "overhead": 1.02}},
    "region_alpha": 0.05,
    "region_floor": 0.7,
}

FAST_PROFILE_DOC = {
    "version": "collage-costs/1",
    "backend": "fast",
    "ops": {"add": {"coeff": 0.0, "overhead": 0.5},
            "relu": {"coeff": 0.0, "overhead": 0.5}},
}


def write_backend_config(dirpath, order=("cpu", "simgraph"),
                         name="backends.json", rules=False):
    """Write a CLI backends config into `dirpath`, returning its path.

    The entries mirror offload_chain_setup plus an optional cheap op kernel
    library "fast"; `order` selects and orders them, which fixes the subset
    order the ablate command walks. With rules=True the simgraph entry
    carries an elementwise fusion rule file alongside its patterns.
    """
    entries = {
        "cpu": {"id": "cpu", "kind": "op_kernel_library",
                "cost_profile": CPU_PROFILE_DOC,
                "patterns": ["conv2d()", "add()", "relu()"]},
        "simgraph": {"id": "simgraph", "kind": "graph_inference_library",
                     "cost_profile": SIM_PROFILE_DOC,
                     "patterns": ["add()", "relu()"]},
        "fast": {"id": "fast", "kind": "op_kernel_library",
                 "cost_profile": FAST_PROFILE_DOC,
                 "patterns": ["add()", "relu()"]},
    }
    if rules:
        rule = PatternRule(
            backend="simgraph",
            op_validity=(OpValidity("add", (), OpClass.ELEMWISE),
                         OpValidity("relu", (), OpClass.ELEMWISE)),
            fusion_transitions=(
                FusionTransition(OpClass.ELEMWISE, OpClass.ELEMWISE,
                                 OpClass.ELEMWISE),
            ))
        save_rule_file(rule, str(dirpath / "sim_rules.json"))
        entries["simgraph"] = dict(entries["simgraph"],
                                   rules=["sim_rules.json"])
    doc = {"version": "collage-backends/1",
           "backends": [entries[bid] for bid in order]}
    path = dirpath / name
    path.write_text(json.dumps(doc))
    return str(path)


def random_pattern(rng: random.Random, ops=OP_KINDS[:4],
                   depth: int = 2) -> OpPattern:
    """Random tree pattern; may or may not match anything."""
    constraints = ()
    if rng.random() < 0.3:
        kind = rng.randrange(3)
        if kind == 0:
            constraints = (Equals("variant", rng.randrange(3)),)
        elif kind == 1:
            constraints = (OneOf("variant", (0, 1)),)
        else:
            constraints = (IntRange("variant", 0, rng.randrange(1, 3)),)
    if depth == 0 or rng.random() < 0.3:
        return OpPattern(rng.choice(ops), (), constraints)
    args = []
    for _ in range(rng.choice((1, 2))):
        if rng.random() < 0.4:
            args.append(Wildcard())
        else:
            args.append(random_pattern(rng, ops, depth - 1))
    return OpPattern(rng.choice(ops), tuple(args), constraints)


def random_rule(rng: random.Random, g: ComputationGraph,
                backend: str = "b1") -> PatternRule:
    """Random rule over the op kinds present in `g`."""
    present = sorted({n.op_kind for n in g.nodes.values()})
    classes = (OpClass.FUSABLE, OpClass.ELEMWISE, OpClass.INJECTIVE)
    validity = []
    for op in present:
        if rng.random() < 0.85:
            constraints = ()
            if rng.random() < 0.25:
                constraints = (OneOf("variant", (0, 1)),)
            validity.append(OpValidity(op, constraints, rng.choice(classes)))
    if not validity:
        validity.append(OpValidity(present[0], (), OpClass.FUSABLE))
    transitions = []
    for _ in range(rng.randrange(1, 4)):
        transitions.append(FusionTransition(rng.choice(classes),
                                            rng.choice(classes),
                                            rng.choice(classes)))
    return PatternRule(backend=backend, op_validity=tuple(validity),
                       fusion_transitions=tuple(transitions),
                       max_fusion_size=rng.choice((2, 3, 4, 16)))


# -- brute-force references ---------------------------------------------------


def brute_post_dominators(g: ComputationGraph, v: int) -> set[int]:
    """Nodes on every escape path from `v`, by literal path enumeration.

    A path escapes when it reaches an output node and takes the implicit
    edge to the sink; outputs with consumers also continue onward.
    """
    paths: list[frozenset[int]] = []
    acc: list[int] = []

    def walk(n: int) -> None:
        acc.append(n)
        if n in g.outputs:
            paths.append(frozenset(acc))
        for c in g.consumers(n):
            walk(c)
        acc.pop()

    walk(v)
    common = set(paths[0])
    for p in paths[1:]:
        common &= p
    return common


def brute_matches(g: ComputationGraph, pattern: OpPattern) -> set[tuple]:
    """All matches by exhaustive assignment of pattern positions to nodes.

    Returns {(root, frozenset(nodes), binding tuple)} for comparison against
    match_all. Every op-pattern position is assigned every node id and the
    assignment is checked from scratch.
    """
    positions: list[tuple[int, ...]] = []
    subtrees: dict[tuple[int, ...], OpPattern] = {}

    def collect(pat: OpPattern, pos: tuple[int, ...]) -> None:
        positions.append(pos)
        subtrees[pos] = pat
        for i, arg in enumerate(pat.args):
            if isinstance(arg, OpPattern):
                collect(arg, pos + (i,))

    collect(pattern, ())
    node_ids = sorted(g.nodes)
    found: set[tuple] = set()

    def assignments(i: int, mapping: dict) -> None:
        if i == len(positions):
            if check(mapping):
                binding = tuple(sorted(mapping.items()))
                found.add((mapping[()],
                           frozenset(mapping.values()), binding))
            return
        for nid in node_ids:
            mapping[positions[i]] = nid
            assignments(i + 1, mapping)
        del mapping[positions[i]]

    def check(mapping: dict) -> bool:
        for pos, pat in subtrees.items():
            node = g.nodes[mapping[pos]]
            if node.op_kind != pat.op_kind:
                return False
            if not all(c.matches(node.attrs) for c in pat.constraints):
                return False
            if pat.args and len(pat.args) != len(node.input_ids):
                return False
            for i, arg in enumerate(pat.args):
                if isinstance(arg, Wildcard):
                    continue
                producer = node.input_ids[i]
                if not isinstance(producer, int):
                    return False
                if producer != mapping[pos + (i,)]:
                    return False
        seen: dict[int, OpPattern] = {}
        for pos, nid in mapping.items():
            if nid in seen and seen[nid] != subtrees[pos]:
                return False
            seen[nid] = subtrees[pos]
        bound = set(mapping.values())
        root = mapping[()]
        for nid in bound:
            if nid == root:
                continue
            if nid in set(g.outputs):
                return False
            if any(c not in bound for c in g.consumers(nid)):
                return False
        return True

    assignments(0, {})
    return found


def singleton_placement(g: ComputationGraph, registry: PatternRegistry,
                        backend: str):
    """Placement assigning each node to its singleton pattern on `backend`."""
    from tensorplace import PlacementStrategy

    out = []
    for nid in sorted(g.nodes):
        chosen = None
        for bp, m in registry.candidates_at(g, nid):
            if bp.backend == backend and m.nodes.node_ids == frozenset([nid]):
                chosen = Assignment(frozenset([nid]), bp, nid)
                break
        assert chosen is not None, f"no singleton for node {nid} on {backend}"
        out.append(chosen)
    return PlacementStrategy(tuple(out))
