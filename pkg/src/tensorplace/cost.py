"""Simulated kernel cost measurement and placement cost evaluation.

A kernel's simulated cost is sum over its nodes of
(coeff[op] * prod(output_shape) + overhead[op]), scaled by
fusion_discount^(n-1) for an n-node kernel. Results are cached under a
position-independent kernel key so isomorphic kernels (same ops, attrs,
shapes, internal wiring) are priced once; the cache persists as a JSONL log.

Placement evaluation is additive: per-kernel cost plus a context-switch
constant epsilon per kernel. The graph-level evaluator additionally groups
kernels of the same graph-inference-library backend into maximal contiguous
regions, scales each region's kernel-cost sum by
r(n) = max(region_floor, 1 - region_alpha * (n - 1)) for an n-kernel region,
and charges one epsilon per region instead of one per kernel.

All cost sums use math.fsum, which is exactly rounded and therefore
order-independent: two evaluations of the same kernel multiset agree to the
last bit, which is what lets the optimizers and the brute-force oracle be
compared with zero tolerance.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from tensorplace.errors import (
    CacheFormatError,
    CoverageError,
    FileFormatError,
    OverlapError,
    ProfileError,
)
from tensorplace.graph import ComputationGraph, Subgraph
from tensorplace.placement import PlacementStrategy

COSTS_FORMAT_VERSION = "collage-costs/1"

logger = logging.getLogger(__name__)


# -- kernel keys -------------------------------------------------------------------

def kernel_key(backend_id: str, sub: Subgraph) -> str:
    """Canonical cache key: backend id plus a fingerprint of the subgraph
    with node ids replaced by traversal indices. Anchored at the kernel's
    internal roots, so isomorphic single-root kernels get equal keys
    regardless of their position in the graph."""
    g = sub.graph
    members = sub.node_ids

    def label(nid: int) -> tuple:
        n = g.nodes[nid]
        return (n.op_kind,
                json.dumps({k: n.attrs[k] for k in sorted(n.attrs)}),
                tuple(n.output_shape))

    index: dict[int, int] = {}

    def visit(nid: int) -> None:
        if nid in index:
            return
        index[nid] = len(index)
        for ref in g.nodes[nid].input_ids:
            if isinstance(ref, int) and ref in members:
                visit(ref)

    for root in sorted(sub.internal_roots(), key=lambda nid: (label(nid), nid)):
        visit(root)
    entries = []
    for nid in sorted(index, key=index.__getitem__):
        n = g.nodes[nid]
        ins: list[Any] = []
        for ref in n.input_ids:
            if isinstance(ref, int) and ref in members:
                ins.append(index[ref])
            else:
                ins.append("ext")
        entries.append([n.op_kind,
                        {k: n.attrs[k] for k in sorted(n.attrs)},
                        list(n.output_shape), ins])
    blob = json.dumps(entries, sort_keys=True, separators=(",", ":"))
    return f"{backend_id}|{blob}"


# -- profiles ----------------------------------------------------------------------

@dataclass(frozen=True)
class OpCost:
    coeff: float
    overhead: float


@dataclass(frozen=True)
class SimProfile:
    """Per-backend simulated cost table; see the module docstring for the
    formula. region_alpha/region_floor parameterize the graph-level
    cross-kernel discount when the backend is a graph inference library."""

    backend: str
    op_costs: Mapping[str, OpCost] = field(default_factory=dict)
    fusion_discount: float = 1.0
    region_alpha: float = 0.05
    region_floor: float = 0.7

    def __post_init__(self):
        if not (0.0 < self.fusion_discount <= 1.0):
            raise ProfileError("fusion_discount must be in (0, 1]")
        if self.region_alpha < 0.0:
            raise ProfileError("region_alpha must be non-negative")
        if not (0.0 < self.region_floor <= 1.0):
            raise ProfileError("region_floor must be in (0, 1]")
        for op, oc in self.op_costs.items():
            if oc.coeff < 0.0 or oc.overhead < 0.0:
                raise ProfileError(f"op '{op}' has negative cost parameters")

    def node_cost(self, g: ComputationGraph, nid: int) -> float:
        node = g.nodes[nid]
        oc = self.op_costs.get(node.op_kind)
        if oc is None:
            raise ProfileError(
                f"profile for backend '{self.backend}' has no entry for op "
                f"'{node.op_kind}'")
        volume = 1
        for d in node.output_shape:
            volume *= d
        return oc.coeff * volume + oc.overhead

    def kernel_cost(self, sub: Subgraph) -> float:
        base = math.fsum(self.node_cost(sub.graph, nid)
                         for nid in sorted(sub.node_ids))
        return base * self.fusion_discount ** (len(sub.node_ids) - 1)


# -- cache -------------------------------------------------------------------------

class CostCache:
    """Key -> cost_ms map persisted as an append-friendly JSONL log."""

    def __init__(self):
        self._data: dict[str, float] = {}
        self.load_warnings: tuple[str, ...] = ()

    def get(self, key: str) -> float | None:
        return self._data.get(key)

    def put(self, key: str, cost_ms: float) -> None:
        self._data[key] = cost_ms

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def items(self):
        return self._data.items()


def cache_load(path: str) -> CostCache:
    """Load a JSONL cache. Later records win on duplicate keys. Corrupt
    lines are reported (with their line numbers) on `load_warnings` and via
    logging, and loading continues."""
    cache = CostCache()
    warnings: list[str] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise CacheFormatError(f"cannot read cache file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                warnings.append(f"line {lineno}: not valid JSON")
                continue
            if (not isinstance(record, dict)
                    or set(record) != {"key", "cost_ms"}
                    or not isinstance(record.get("key"), str)
                    or not isinstance(record.get("cost_ms"), (int, float))
                    or isinstance(record.get("cost_ms"), bool)):
                warnings.append(f"line {lineno}: malformed cache record")
                continue
            cache.put(record["key"], float(record["cost_ms"]))
    for w in warnings:
        logger.warning("cost cache %s: %s", path, w)
    cache.load_warnings = tuple(warnings)
    return cache


def cache_save(cache: CostCache, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cache._data):
            fh.write(json.dumps({"key": key, "cost_ms": cache._data[key]})
                     + "\n")


# -- measurers ----------------------------------------------------------------------

class Measurer:
    """Kernel cost oracle interface with call accounting."""

    def __init__(self):
        self.calls = 0
        self.cache_hits = 0
        self.computations = 0

    def measure_kernel(self, backend_id: str, sub: Subgraph) -> float:
        raise NotImplementedError

    def region_params(self, backend_id: str) -> tuple[float, float]:
        """(region_alpha, region_floor) for the graph-level evaluator."""
        return (0.0, 1.0)

    def reset_counters(self) -> None:
        self.calls = 0
        self.cache_hits = 0
        self.computations = 0


class SimMeasurer(Measurer):
    """Prices kernels from per-backend SimProfiles through a shared cache.

    The cache-hit path performs no profile arithmetic; `computations` counts
    only actual formula evaluations, which is what the warm-cache acceptance
    check asserts on.
    """

    def __init__(self, profiles: Mapping[str, SimProfile],
                 cache: CostCache | None = None):
        super().__init__()
        self.profiles = dict(profiles)
        for backend_id, profile in self.profiles.items():
            if profile.backend != backend_id:
                raise ProfileError(
                    f"profile declared for backend '{profile.backend}' "
                    f"registered under '{backend_id}'")
        self.cache = cache if cache is not None else CostCache()
        self._lock = threading.Lock()

    def measure_kernel(self, backend_id: str, sub: Subgraph) -> float:
        key = kernel_key(backend_id, sub)
        with self._lock:
            self.calls += 1
            cached = self.cache.get(key)
            if cached is not None:
                self.cache_hits += 1
                return cached
        profile = self.profiles.get(backend_id)
        if profile is None:
            raise ProfileError(f"no cost profile for backend '{backend_id}'")
        cost = profile.kernel_cost(sub)
        with self._lock:
            self.computations += 1
            self.cache.put(key, cost)
        return cost

    def region_params(self, backend_id: str) -> tuple[float, float]:
        profile = self.profiles.get(backend_id)
        if profile is None:
            raise ProfileError(f"no cost profile for backend '{backend_id}'")
        return (profile.region_alpha, profile.region_floor)


# -- placement evaluation -------------------------------------------------------------

def _check_disjoint_cover(g: ComputationGraph,
                          placement: PlacementStrategy) -> None:
    seen: set[int] = set()
    for a in placement.assignments:
        dup = sorted(seen & a.nodes)
        if dup:
            raise OverlapError(
                f"node(s) {dup} are claimed by multiple kernels", tuple(dup))
        seen.update(a.nodes)
    missing = sorted(set(g.nodes) - seen)
    if missing:
        raise CoverageError(
            f"placement leaves node(s) {missing} uncovered", tuple(missing))
    extra = sorted(seen - set(g.nodes))
    if extra:
        raise CoverageError(
            f"placement references unknown node(s) {extra}", tuple(extra))


def measure_placement(m: Measurer, g: ComputationGraph,
                      placement: PlacementStrategy) -> list[float]:
    """Per-kernel costs aligned with placement.assignments."""
    return [m.measure_kernel(a.backend_pattern.backend, Subgraph(g, a.nodes))
            for a in placement.assignments]


def total_cost(kernel_costs: Iterable[float], epsilon: float) -> float:
    """Canonical total: exactly-rounded sum of the kernel costs plus one
    epsilon term per kernel. Order-independent, so every component that
    prices the same kernel multiset gets the identical float."""
    costs = list(kernel_costs)
    return math.fsum(costs + [epsilon] * len(costs))


def placement_cost_additive(m: Measurer, g: ComputationGraph,
                            placement: PlacementStrategy,
                            epsilon: float) -> float:
    """Sum of kernel costs plus epsilon per kernel."""
    _check_disjoint_cover(g, placement)
    return total_cost(measure_placement(m, g, placement), epsilon)


def region_discount(n_kernels: int, alpha: float, floor: float) -> float:
    return max(floor, 1.0 - alpha * (n_kernels - 1))


def placement_cost_graphlevel(m: Measurer, g: ComputationGraph,
                              placement: PlacementStrategy, epsilon: float,
                              graph_backend_ids: Iterable[str]) -> float:
    """Additive cost with graph-library kernels grouped into contiguous
    same-backend regions; each region is discounted by r(n) and charged a
    single epsilon."""
    _check_disjoint_cover(g, placement)
    graph_backends = set(graph_backend_ids)
    costs = measure_placement(m, g, placement)
    kernel_of: dict[int, int] = {}
    for idx, a in enumerate(placement.assignments):
        for nid in a.nodes:
            kernel_of[nid] = idx

    def backend_of(idx: int) -> str:
        return placement.assignments[idx].backend_pattern.backend

    # Union-find over graph-library kernels of the same backend that touch.
    parent = list(range(len(placement.assignments)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for nid, idx in kernel_of.items():
        if backend_of(idx) not in graph_backends:
            continue
        for pred in g.node_predecessors(nid):
            pidx = kernel_of[pred]
            if pidx != idx and backend_of(pidx) == backend_of(idx):
                union(pidx, idx)

    terms: list[float] = []
    regions: dict[int, list[int]] = {}
    for idx in range(len(placement.assignments)):
        if backend_of(idx) in graph_backends:
            regions.setdefault(find(idx), []).append(idx)
        else:
            terms.append(costs[idx])
            terms.append(epsilon)
    for _rep, members in sorted(regions.items()):
        backend = backend_of(members[0])
        alpha, floor = m.region_params(backend)
        base = math.fsum(costs[i] for i in members)
        terms.append(base * region_discount(len(members), alpha, floor))
        terms.append(epsilon)
    return math.fsum(terms)


# -- profile file -----------------------------------------------------------------------

_PROFILE_KEYS = {"version", "backend", "ops", "fusion_discount",
                 "region_alpha", "region_floor"}
_OP_COST_KEYS = {"coeff", "overhead"}


def profile_from_json(data: Any) -> SimProfile:
    if not isinstance(data, dict):
        raise FileFormatError("cost profile must be a JSON object")
    unknown = sorted(set(data) - _PROFILE_KEYS)
    if unknown:
        raise FileFormatError(f"unknown field(s) {unknown} in cost profile")
    if data.get("version") != COSTS_FORMAT_VERSION:
        raise FileFormatError(
            f"unsupported cost profile version {data.get('version')!r}; "
            f"expected {COSTS_FORMAT_VERSION!r}")
    if not isinstance(data.get("backend"), str) or not data["backend"]:
        raise FileFormatError("cost profile needs a non-empty backend id")
    ops = data.get("ops")
    if not isinstance(ops, dict) or not ops:
        raise FileFormatError("cost profile needs a non-empty ops table")
    table: dict[str, OpCost] = {}
    for op, entry in ops.items():
        if not isinstance(entry, dict) or set(entry) != _OP_COST_KEYS:
            raise FileFormatError(
                f"op '{op}' must map to an object with coeff and overhead")
        coeff, overhead = entry["coeff"], entry["overhead"]
        for v in (coeff, overhead):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise FileFormatError(f"op '{op}' has non-numeric cost fields")
        table[op] = OpCost(float(coeff), float(overhead))
    kwargs: dict[str, float] = {}
    for key in ("fusion_discount", "region_alpha", "region_floor"):
        if key in data:
            v = data[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise FileFormatError(f"'{key}' must be a number")
            kwargs[key] = float(v)
    try:
        return SimProfile(data["backend"], table, **kwargs)
    except ProfileError as exc:
        raise FileFormatError(str(exc)) from exc


def profile_to_json(profile: SimProfile) -> dict[str, Any]:
    return {
        "version": COSTS_FORMAT_VERSION,
        "backend": profile.backend,
        "ops": {
            op: {"coeff": oc.coeff, "overhead": oc.overhead}
            for op, oc in sorted(profile.op_costs.items())
        },
        "fusion_discount": profile.fusion_discount,
        "region_alpha": profile.region_alpha,
        "region_floor": profile.region_floor,
    }


def load_profile(path: str) -> SimProfile:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: not valid JSON: {exc}") from exc
    return profile_from_json(data)


def save_profile(profile: SimProfile, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile_to_json(profile), fh, indent=2)
        fh.write("\n")
