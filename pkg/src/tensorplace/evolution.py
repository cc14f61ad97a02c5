"""Graph-level placement search: an evolutionary pass over offload genomes.

The operator-level DP ignores cross-kernel effects; this pass reconsiders its
placement under the graph-level cost model. A genome holds one bit per DP
kernel not already assigned to a graph inference library: 0 keeps the DP
decision, 1 offloads the kernel to the designated graph backend, either as a
registered pattern matching the same node set or, failing that, decomposed
into per-node singleton kernels. A kernel the graph backend cannot host at
all makes any genome that flips it infeasible (infinite fitness).

The population is seeded with the all-zero genome (the DP placement itself),
so with elitism the final cost never exceeds the seed cost. Selection is
tournament, crossover is two-point, mutation flips bits independently, and
all randomness comes from one seeded generator, making runs reproducible.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Sequence

from tensorplace.cost import Measurer, placement_cost_graphlevel
from tensorplace.errors import RegistryError
from tensorplace.graph import ComputationGraph
from tensorplace.placement import Assignment, PlacementStrategy
from tensorplace.registry import BackendKind, PatternRegistry

Bits = tuple[int, ...]


@dataclass(frozen=True)
class ESConfig:
    population_size: int = 32
    generations: int = 200
    mutation_rate: float | None = None  # defaults to 1/genome_length
    tournament_size: int = 4
    elitism: int = 1
    seed: int = 0
    time_budget_s: float | None = None

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 0:
            raise ValueError("population_size and generations must be positive")
        if self.mutation_rate is not None and not \
                (0.0 <= self.mutation_rate <= 1.0):
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.tournament_size < 1 or self.elitism < 0:
            raise ValueError("tournament_size and elitism must be positive")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ValueError("time_budget_s must be positive")


@dataclass
class ESResult:
    placement: PlacementStrategy
    cost_ms: float
    seed_cost_ms: float
    history: tuple[tuple[int, float], ...]  # (generation, best cost so far)
    evaluations: int
    genome_length: int


def eligible_slots(registry: PatternRegistry,
                   dp_placement: PlacementStrategy) -> list[int]:
    """Indices of DP kernels a genome may offload: those not already on a
    graph inference library backend, in canonical placement order."""
    slots = []
    for idx, a in enumerate(dp_placement.assignments):
        kind = registry.backend(a.backend_pattern.backend).kind
        if kind is not BackendKind.GRAPH_INFERENCE_LIBRARY:
            slots.append(idx)
    return slots


def _replacement_for(g: ComputationGraph, registry: PatternRegistry,
                     assignment: Assignment,
                     graph_backend: str) -> list[Assignment] | None:
    """Graph-backend assignments covering the kernel's node set: a single
    same-set match when one is registered, else per-node singletons, else
    None when some node is unsupported."""
    for bp, m in registry.candidates_at(g, assignment.root):
        if bp.backend == graph_backend and m.nodes.node_ids == assignment.nodes:
            return [Assignment(assignment.nodes, bp, assignment.root)]
    singles: list[Assignment] = []
    for nid in sorted(assignment.nodes):
        found = None
        for bp, m in registry.candidates_at(g, nid):
            if bp.backend == graph_backend and m.nodes.node_ids == \
                    frozenset([nid]):
                found = Assignment(frozenset([nid]), bp, nid)
                break
        if found is None:
            return None
        singles.append(found)
    return singles


def decode_genome(g: ComputationGraph, registry: PatternRegistry,
                  dp_placement: PlacementStrategy, bits: Sequence[int],
                  graph_backend: str) -> PlacementStrategy | None:
    """Decode an offload genome against the DP placement; None when a flipped
    kernel cannot be hosted by the graph backend."""
    slots = eligible_slots(registry, dp_placement)
    if len(bits) != len(slots):
        raise ValueError(f"genome length {len(bits)} does not match "
                         f"{len(slots)} eligible kernels")
    flipped = {slot for slot, bit in zip(slots, bits) if bit}
    out: list[Assignment] = []
    for idx, a in enumerate(dp_placement.assignments):
        if idx not in flipped:
            out.append(a)
            continue
        replacement = _replacement_for(g, registry, a, graph_backend)
        if replacement is None:
            return None
        out.extend(replacement)
    return PlacementStrategy(tuple(out))


def resolve_graph_backend(registry: PatternRegistry,
                          requested: str | None) -> str:
    """Pick the offload target: the named backend, or the unique graph
    inference library in the registry."""
    graph_ids = registry.graph_backend_ids()
    if requested is not None:
        if requested not in graph_ids:
            raise RegistryError(
                f"backend '{requested}' is not a registered graph inference "
                f"library (have: {list(graph_ids)})")
        return requested
    if not graph_ids:
        raise RegistryError("no graph inference library backend is registered")
    if len(graph_ids) > 1:
        raise RegistryError(
            f"multiple graph inference libraries registered "
            f"({list(graph_ids)}); a target must be named")
    return graph_ids[0]


def evolve(g: ComputationGraph, registry: PatternRegistry, measurer: Measurer,
           dp_placement: PlacementStrategy, epsilon: float, config: ESConfig,
           graph_backend: str | None = None) -> ESResult:
    """Run the evolutionary pass; see the module docstring.

    The returned cost is a graph-level cost and never exceeds the seed
    (all-zero genome) cost.
    """
    target = resolve_graph_backend(registry, graph_backend)
    graph_ids = registry.graph_backend_ids()

    def graph_cost(p: PlacementStrategy) -> float:
        return placement_cost_graphlevel(measurer, g, p, epsilon, graph_ids)

    slots = eligible_slots(registry, dp_placement)
    k = len(slots)
    seed_cost = graph_cost(dp_placement)
    if k == 0:
        return ESResult(dp_placement, seed_cost, seed_cost, (), 0, 0)

    replacements: dict[int, list[Assignment] | None] = {
        slot: _replacement_for(g, registry, dp_placement.assignments[slot],
                               target)
        for slot in slots}

    def decode(bits: Bits) -> PlacementStrategy | None:
        out: list[Assignment] = []
        flipped = {slot for slot, bit in zip(slots, bits) if bit}
        for idx, a in enumerate(dp_placement.assignments):
            if idx not in flipped:
                out.append(a)
                continue
            replacement = replacements[idx]
            if replacement is None:
                return None
            out.extend(replacement)
        return PlacementStrategy(tuple(out))

    fitness_cache: dict[Bits, float] = {}
    evaluations = 0

    def fitness(bits: Bits) -> float:
        nonlocal evaluations
        cached = fitness_cache.get(bits)
        if cached is not None:
            return cached
        evaluations += 1
        p = decode(bits)
        value = float("inf") if p is None else graph_cost(p)
        fitness_cache[bits] = value
        return value

    rng = random.Random(config.seed)
    mutation = config.mutation_rate if config.mutation_rate is not None \
        else 1.0 / k

    population: list[Bits] = [tuple([0] * k)]
    while len(population) < config.population_size:
        population.append(tuple(rng.randrange(2) for _ in range(k)))

    def evaluate(pop: list[Bits]) -> list[float]:
        return [fitness(bits) for bits in pop]

    def tournament(fits: list[float]) -> Bits:
        best_i = rng.randrange(len(population))
        for _ in range(config.tournament_size - 1):
            i = rng.randrange(len(population))
            if fits[i] < fits[best_i]:
                best_i = i
        return population[best_i]

    def crossover(a: Bits, b: Bits) -> Bits:
        if k < 2:
            return a
        i, j = sorted((rng.randrange(k + 1), rng.randrange(k + 1)))
        return a[:i] + b[i:j] + a[j:]

    def mutate(bits: Bits) -> Bits:
        return tuple(1 - v if rng.random() < mutation else v for v in bits)

    start = time.monotonic()
    best_bits: Bits = population[0]
    best_fit = float("inf")
    history: list[tuple[int, float]] = []

    fits = evaluate(population)
    for bits, fit in zip(population, fits):
        if fit < best_fit:
            best_fit, best_bits = fit, bits
    history.append((0, best_fit))

    for gen in range(1, config.generations + 1):
        if config.time_budget_s is not None and \
                time.monotonic() - start > config.time_budget_s:
            break
        ranked = sorted(range(len(population)), key=lambda i: (fits[i], i))
        next_pop: list[Bits] = [best_bits]
        for i in ranked[:max(0, config.elitism - 1)]:
            next_pop.append(population[i])
        while len(next_pop) < config.population_size:
            child = crossover(tournament(fits), tournament(fits))
            next_pop.append(mutate(child))
        population = next_pop[:config.population_size]
        fits = evaluate(population)
        for bits, fit in zip(population, fits):
            if fit < best_fit:
                best_fit, best_bits = fit, bits
        history.append((gen, best_fit))

    placement = decode(best_bits)
    assert placement is not None  # the all-zero seed is always feasible
    final_cost = fitness(best_bits)
    return ESResult(placement, final_cost, seed_cost, tuple(history),
                    evaluations, k)
