"""Operator-level placement search: dynamic programming over covered sets.

Nodes are popped from a priority queue keyed by (depth, node id), each node
exactly once; popping a node considers every registered pattern that matches
with its root anchored there. For each candidate match the DP relaxes over
all stored states that are disjoint from the match and whose union with it
stays downward closed (every external predecessor of the match already
covered). State value is the canonical total of its kernel costs plus one
context-switch epsilon per kernel; ties are broken by the canonical
placement key (backend registration index, then node-id sets).

Because a matched value may only leave a kernel through its root, every
prefix of an optimal placement (kernels ordered by root pop order) is itself
a downward-closed state, so the relaxation above reaches every valid
placement and the search is exactly optimal over the registry-expressible
space. Consumers of a popped node are enqueued unconditionally; a match is
not required for the frontier to advance, which keeps nodes reachable even
when their only cover is a fused match rooted deeper in the graph.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping

from tensorplace.cost import Measurer, total_cost
from tensorplace.errors import SearchLimitError, UncoverableGraphError
from tensorplace.graph import ComputationGraph, Subgraph
from tensorplace.placement import Assignment, PlacementStrategy, validate_placement
from tensorplace.registry import PatternRegistry

DEFAULT_MAX_STATES = 50_000


@dataclass
class DPStats:
    nodes: int = 0
    pops: int = 0
    candidates_total: int = 0
    max_candidates: int = 0
    max_new_frontiers: int = 0
    max_compatible_states: int = 0
    relaxations: int = 0
    improvements: int = 0
    measure_calls: int = 0
    cache_hits: int = 0
    computations: int = 0
    states_peak: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DPResult:
    placement: PlacementStrategy
    cost_ms: float
    stats: DPStats
    state_costs: Mapping[frozenset, float] = field(default_factory=dict)


@dataclass
class _State:
    cost: float
    terms: tuple[float, ...]
    assignments: tuple[Assignment, ...]
    key: tuple


def optimize(g: ComputationGraph, registry: PatternRegistry, measurer: Measurer,
             epsilon: float, max_states: int = DEFAULT_MAX_STATES) -> DPResult:
    """Find a cheapest full placement of `g` under `registry`.

    Raises UncoverableGraphError when no full cover exists (naming either the
    op kinds no pattern can root, or the first popped frontier with zero
    candidates) and SearchLimitError past `max_states` live states.
    """
    stats = DPStats(nodes=len(g.nodes))
    calls0, hits0, comps0 = measurer.calls, measurer.cache_hits, \
        measurer.computations

    if not g.nodes:
        return DPResult(PlacementStrategy(()), 0.0, stats, {frozenset(): 0.0})

    uncovered = registry.uncovered_op_kinds(g)
    if uncovered:
        raise UncoverableGraphError(
            f"no registered pattern can root op kind(s) {list(uncovered)}",
            op_kinds=uncovered)

    empty: frozenset[int] = frozenset()
    states: dict[frozenset[int], _State] = {
        empty: _State(0.0, (), (), ())}
    queue: list[tuple[int, int]] = []
    enqueued: set[int] = set()
    for nid in g.topo_order():
        if not g.node_predecessors(nid):
            heapq.heappush(queue, (g.depth(nid), nid))
            enqueued.add(nid)

    first_zero_candidate: int | None = None

    while queue:
        _depth, v = heapq.heappop(queue)
        stats.pops += 1

        new_frontiers = 0
        for c in g.consumers(v):
            if c not in enqueued:
                enqueued.add(c)
                heapq.heappush(queue, (g.depth(c), c))
                new_frontiers += 1
        stats.max_new_frontiers = max(stats.max_new_frontiers, new_frontiers)

        candidates = registry.candidates_at(g, v)
        stats.candidates_total += len(candidates)
        stats.max_candidates = max(stats.max_candidates, len(candidates))
        if not candidates and first_zero_candidate is None:
            first_zero_candidate = v

        for bp, match in candidates:
            gset = match.nodes.node_ids
            kernel_cost = measurer.measure_kernel(bp.backend, match.nodes)
            ext_preds = match.nodes.external_predecessors()
            assignment = Assignment(gset, bp, v)
            compatible = 0
            for s, entry in list(states.items()):
                if not gset.isdisjoint(s):
                    continue
                if not ext_preds <= s:
                    continue
                compatible += 1
                stats.relaxations += 1
                new_terms = entry.terms + (kernel_cost,)
                new_cost = total_cost(new_terms, epsilon)
                new_cover = s | gset
                current = states.get(new_cover)
                if current is not None and new_cost > current.cost:
                    continue
                new_assignments = entry.assignments + (assignment,)
                new_key = tuple(sorted(a.sort_key() for a in new_assignments))
                if current is None or new_cost < current.cost \
                        or new_key < current.key:
                    states[new_cover] = _State(new_cost, new_terms,
                                               new_assignments, new_key)
                    stats.improvements += 1
            stats.max_compatible_states = max(stats.max_compatible_states,
                                              compatible)
            if len(states) > max_states:
                raise SearchLimitError(
                    f"operator-level search exceeded {max_states} live "
                    f"states on a {len(g.nodes)}-node graph")
        stats.states_peak = max(stats.states_peak, len(states))

    stats.measure_calls = measurer.calls - calls0
    stats.cache_hits = measurer.cache_hits - hits0
    stats.computations = measurer.computations - comps0

    full = frozenset(g.nodes)
    final = states.get(full)
    if final is None:
        if first_zero_candidate is not None:
            node = g.nodes[first_zero_candidate]
            raise UncoverableGraphError(
                f"no full placement found; frontier node "
                f"{first_zero_candidate} (op '{node.op_kind}') had zero "
                f"candidate matches", op_kinds=(node.op_kind,),
                node_ids=(first_zero_candidate,))
        best_cover = max(states, key=len)
        missing = sorted(full - best_cover)
        raise UncoverableGraphError(
            f"no full placement found; node(s) {missing} could not be "
            f"covered compatibly", node_ids=tuple(missing))

    placement = PlacementStrategy(final.assignments)
    validate_placement(g, placement)
    state_costs = {cover: entry.cost for cover, entry in states.items()}
    return DPResult(placement, final.cost, stats, state_costs)
