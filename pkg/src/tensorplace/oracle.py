"""Exhaustive reference implementations for verifying the optimizers.

Everything here trades efficiency for obviousness: placements are found by
backtracking over every registered match, fusion groups by direct recursion
over post-dominator jumps, and genomes by enumerating all bit vectors. Hard
size caps keep the blowup in check; callers asking past a cap get a
SearchLimitError rather than an open-ended wait.
"""

from __future__ import annotations

from typing import Sequence

from tensorplace.cost import Measurer, placement_cost_additive, \
    placement_cost_graphlevel, total_cost
from tensorplace.errors import SearchLimitError
from tensorplace.evolution import decode_genome, eligible_slots
from tensorplace.graph import ComputationGraph
from tensorplace.matching import Match
from tensorplace.placement import Assignment, PlacementStrategy, \
    placement_sort_key
from tensorplace.registry import BackendPattern, PatternRegistry
from tensorplace.rules import PatternRule

MAX_ORACLE_NODES = 12
MAX_ORACLE_GENOME = 16


def enumerate_placements(g: ComputationGraph, registry: PatternRegistry,
                         max_nodes: int = MAX_ORACLE_NODES) \
        -> list[PlacementStrategy]:
    """Every full disjoint cover of the graph by registered matches.

    Each placement is generated exactly once: the recursion always extends by
    the kernel containing the first uncovered node in topological order, and
    in a partition that kernel is unique.
    """
    if len(g.nodes) > max_nodes:
        raise SearchLimitError(
            f"graph has {len(g.nodes)} nodes; exhaustive placement "
            f"enumeration is capped at {max_nodes}")
    if not g.nodes:
        return [PlacementStrategy(())]

    by_member: dict[int, list[tuple[BackendPattern, Match]]] = {
        nid: [] for nid in g.nodes}
    for nid in sorted(g.nodes):
        for bp, m in registry.candidates_at(g, nid):
            for member in m.nodes.node_ids:
                by_member[member].append((bp, m))

    order = g.topo_order()
    total = len(g.nodes)
    results: list[PlacementStrategy] = []

    def extend(covered: frozenset[int], acc: list[Assignment]) -> None:
        if len(covered) == total:
            results.append(PlacementStrategy(tuple(acc)))
            return
        pivot = next(nid for nid in order if nid not in covered)
        for bp, m in by_member[pivot]:
            if m.nodes.node_ids & covered:
                continue
            acc.append(Assignment(m.nodes.node_ids, bp, m.root))
            extend(covered | m.nodes.node_ids, acc)
            acc.pop()

    extend(frozenset(), [])
    return results


def optimal_placement(g: ComputationGraph, registry: PatternRegistry,
                      measurer: Measurer, epsilon: float,
                      max_nodes: int = MAX_ORACLE_NODES) \
        -> tuple[PlacementStrategy, float] | None:
    """Cheapest full cover under the additive model, or None when the graph
    is uncoverable. Ties break on the canonical placement key, matching the
    operator-level search exactly."""
    candidates = enumerate_placements(g, registry, max_nodes=max_nodes)
    best: tuple[float, tuple, PlacementStrategy] | None = None
    for p in candidates:
        cost = placement_cost_additive(measurer, g, p, epsilon)
        key = (cost, placement_sort_key(p))
        if best is None or key < (best[0], best[1]):
            best = (cost, key[1], p)
    if best is None:
        return None
    return best[2], best[0]


def enumerate_fusion_groups(rule: PatternRule,
                            g: ComputationGraph) -> set[frozenset[int]]:
    """All fusion groups the rule admits, grown by direct recursion.

    Kept independent of the production generator: operator validity, path
    checks, and the first-matching-transition choice are restated here from
    the rule's data alone.
    """

    def entry(nid: int):
        kind = g.nodes[nid].op_kind
        for ov in rule.op_validity:
            if ov.op_kind == kind:
                return ov
        return None

    def valid(nid: int) -> bool:
        ov = entry(nid)
        if ov is None:
            return False
        return all(c.matches(g.nodes[nid].attrs) for c in ov.constraints)

    groups: set[frozenset[int]] = set()

    def grow(group: frozenset[int], group_class: str, frontier: int) -> None:
        groups.add(group)
        sink = g.post_dominator(frontier)
        if sink is None:
            return
        path_nodes = g.paths_between(frontier, sink) | {sink}
        for t in rule.fusion_transitions:
            if t.group_class != group_class:
                continue
            ok = all(valid(nid) and entry(nid).op_class == t.path_class
                     for nid in path_nodes)
            if not ok:
                continue
            enlarged = group | path_nodes
            if len(enlarged) <= rule.max_fusion_size:
                grow(enlarged, t.result_class, sink)
            return

    for nid in sorted(g.nodes):
        ov = entry(nid)
        if ov is None or not valid(nid):
            continue
        grow(frozenset([nid]), ov.op_class, nid)
    return groups


def enumerate_genomes(k: int) -> list[tuple[int, ...]]:
    """All bit vectors of length k in lexicographic order."""
    if k > MAX_ORACLE_GENOME:
        raise SearchLimitError(
            f"genome length {k} exceeds the exhaustive cap "
            f"{MAX_ORACLE_GENOME}")
    out = []
    for value in range(1 << k):
        out.append(tuple((value >> (k - 1 - i)) & 1 for i in range(k)))
    return out


def optimal_genome(g: ComputationGraph, registry: PatternRegistry,
                   measurer: Measurer, dp_placement: PlacementStrategy,
                   epsilon: float, graph_backend: str,
                   max_genome: int = MAX_ORACLE_GENOME) \
        -> tuple[tuple[int, ...], float]:
    """Exhaustively best offload genome and its graph-level cost.

    Ties go to the lexicographically first genome, so the result is
    deterministic; the all-zero genome guarantees at least one feasible
    candidate.
    """
    slots = eligible_slots(registry, dp_placement)
    k = len(slots)
    if k > max_genome:
        raise SearchLimitError(
            f"genome length {k} exceeds the exhaustive cap {max_genome}")
    graph_ids = registry.graph_backend_ids()
    best_bits: tuple[int, ...] | None = None
    best_cost = float("inf")
    for bits in enumerate_genomes(k):
        p = decode_genome(g, registry, dp_placement, bits, graph_backend)
        if p is None:
            continue
        cost = placement_cost_graphlevel(measurer, g, p, epsilon, graph_ids)
        if cost < best_cost:
            best_cost, best_bits = cost, bits
    assert best_bits is not None
    return best_bits, best_cost


__all__ = [
    "MAX_ORACLE_NODES",
    "MAX_ORACLE_GENOME",
    "enumerate_placements",
    "optimal_placement",
    "enumerate_fusion_groups",
    "enumerate_genomes",
    "optimal_genome",
    "total_cost",
]
