"""Placement strategies: full disjoint covers of a graph by backend kernels.

A placement assigns every graph node to exactly one kernel, where each kernel
is a valid match of the backend pattern it is priced under. Validation
checks, in order: full coverage, disjointness, per-kernel match validity, and
acyclicity of the kernel quotient graph (kernels must admit a topological
execution order). Each violated clause raises its own error type naming the
offending node ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Sequence

from tensorplace.errors import (
    CoverageError,
    FileFormatError,
    MatchMismatchError,
    OverlapError,
    QuotientCycleError,
)
from tensorplace.graph import ComputationGraph
from tensorplace.matching import match_at
from tensorplace.patterns import parse_pattern, pattern_to_text
from tensorplace.registry import BackendPattern, PatternSource

PLACEMENT_FORMAT_VERSION = "collage-placement/1"


@dataclass(frozen=True)
class Assignment:
    """One kernel: a node set priced as `backend_pattern` matched at `root`."""

    nodes: frozenset[int]
    backend_pattern: BackendPattern
    root: int

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        return (self.backend_pattern.order, tuple(sorted(self.nodes)))


class PlacementStrategy:
    """Immutable sequence of assignments in a canonical order."""

    def __init__(self, assignments: Sequence[Assignment]):
        self.assignments: tuple[Assignment, ...] = tuple(
            sorted(assignments, key=lambda a: tuple(sorted(a.nodes))))

    def covered_nodes(self) -> frozenset[int]:
        out: set[int] = set()
        for a in self.assignments:
            out.update(a.nodes)
        return frozenset(out)

    def identity(self) -> frozenset[tuple[frozenset[int], str, str]]:
        """Backend-and-nodes view used for placement equality."""
        return frozenset(
            (a.nodes, a.backend_pattern.backend, a.backend_pattern.text())
            for a in self.assignments)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlacementStrategy):
            return NotImplemented
        return self.identity() == other.identity()

    def __len__(self) -> int:
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments)

    def __repr__(self) -> str:
        return f"PlacementStrategy({len(self.assignments)} kernels)"


def placement_sort_key(placement: PlacementStrategy) -> tuple:
    """Canonical tie-breaking key: the sorted tuple of per-kernel
    (backend-registration index, sorted node ids) pairs, compared
    lexicographically. Lower keys win ties on cost."""
    return tuple(sorted(a.sort_key() for a in placement.assignments))


def validate_placement(g: ComputationGraph, placement: PlacementStrategy) -> None:
    """Raise the first violated clause's error; see the module docstring."""
    all_nodes = frozenset(g.nodes)
    seen: dict[int, int] = {}
    overlapping: set[int] = set()
    for idx, a in enumerate(placement.assignments):
        for nid in a.nodes:
            if nid in seen and seen[nid] != idx:
                overlapping.add(nid)
            seen[nid] = idx
    missing = sorted(all_nodes - set(seen))
    if missing:
        raise CoverageError(
            f"placement leaves node(s) {missing} uncovered", tuple(missing))
    extra = sorted(set(seen) - all_nodes)
    if extra:
        raise CoverageError(
            f"placement references unknown node(s) {extra}", tuple(extra))
    if overlapping:
        bad = tuple(sorted(overlapping))
        raise OverlapError(f"node(s) {sorted(overlapping)} are claimed by "
                           f"multiple kernels", bad)
    for a in placement.assignments:
        nodes = tuple(sorted(a.nodes))
        if a.root not in a.nodes:
            raise MatchMismatchError(
                f"kernel root {a.root} is outside its node set {list(nodes)}",
                nodes)
        m = match_at(g, a.root, a.backend_pattern.pattern)
        if m is None or m.nodes.node_ids != a.nodes:
            raise MatchMismatchError(
                f"node set {list(nodes)} is not a valid match of pattern "
                f"'{a.backend_pattern.text()}' rooted at node {a.root}", nodes)
    _check_quotient_acyclic(g, placement)


def _check_quotient_acyclic(g: ComputationGraph,
                            placement: PlacementStrategy) -> None:
    kernel_of: dict[int, int] = {}
    for idx, a in enumerate(placement.assignments):
        for nid in a.nodes:
            kernel_of[nid] = idx
    edges: dict[int, set[int]] = {i: set() for i in
                                  range(len(placement.assignments))}
    indegree = {i: 0 for i in edges}
    for nid, idx in kernel_of.items():
        for pred in g.node_predecessors(nid):
            pidx = kernel_of[pred]
            if pidx != idx and idx not in edges[pidx]:
                edges[pidx].add(idx)
                indegree[idx] += 1
    ready = [i for i, d in indegree.items() if d == 0]
    done = 0
    while ready:
        i = ready.pop()
        done += 1
        for j in edges[i]:
            indegree[j] -= 1
            if indegree[j] == 0:
                ready.append(j)
    if done != len(placement.assignments):
        stuck = sorted(i for i, d in indegree.items() if d > 0)
        roots = tuple(placement.assignments[i].root for i in stuck)
        raise QuotientCycleError(
            f"kernels rooted at node(s) {sorted(roots)} form a cycle and "
            f"cannot be ordered", tuple(sorted(roots)))


# -- reporting ---------------------------------------------------------------------

def build_report(g: ComputationGraph, placement: PlacementStrategy,
                 kernel_costs: Sequence[float], epsilon: float) -> dict[str, Any]:
    """Per-kernel rows plus totals. `kernel_costs[i]` prices
    `placement.assignments[i]`; total = sum + epsilon per kernel."""
    import math

    if len(kernel_costs) != len(placement.assignments):
        raise ValueError("kernel_costs must align with placement assignments")
    order = sorted(range(len(placement.assignments)),
                   key=lambda i: (g.depth(placement.assignments[i].root),
                                  placement.assignments[i].root))
    rows = []
    for i in order:
        a = placement.assignments[i]
        nodes = sorted(a.nodes)
        rows.append({
            "backend": a.backend_pattern.backend,
            "nodes": nodes,
            "ops": [g.nodes[nid].op_kind for nid in nodes],
            "pattern": a.backend_pattern.text(),
            "cost_ms": kernel_costs[i],
        })
    total_kernel = math.fsum(kernel_costs)
    return {
        "kernels": rows,
        "kernel_count": len(rows),
        "total_kernel_cost_ms": total_kernel,
        "epsilon_ms": epsilon,
        "total_cost_ms": math.fsum(list(kernel_costs) + [epsilon] * len(rows)),
    }


def format_report(report: dict[str, Any]) -> str:
    """Human-readable aligned table for a report dict."""
    headers = ("BACKEND", "NODES", "OPS", "PATTERN", "COST_MS")
    table = []
    for row in report["kernels"]:
        table.append((
            row["backend"],
            ",".join(str(n) for n in row["nodes"]),
            "+".join(row["ops"]),
            row["pattern"],
            f"{row['cost_ms']:.6f}",
        ))
    widths = [max(len(h), *(len(r[i]) for r in table)) if table else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for r in table:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
    lines.append("")
    lines.append(f"kernels: {report['kernel_count']}")
    lines.append(f"kernel cost total: {report['total_kernel_cost_ms']:.6f} ms")
    lines.append(f"epsilon per kernel: {report['epsilon_ms']:.6f} ms")
    lines.append(f"total cost: {report['total_cost_ms']:.6f} ms")
    return "\n".join(lines) + "\n"


# -- placement file -----------------------------------------------------------------

_PLACEMENT_KEYS = {"version", "assignments"}
_ASSIGNMENT_KEYS = {"nodes", "root", "backend", "pattern", "source"}


def placement_to_json(placement: PlacementStrategy) -> dict[str, Any]:
    return {
        "version": PLACEMENT_FORMAT_VERSION,
        "assignments": [
            {
                "nodes": sorted(a.nodes),
                "root": a.root,
                "backend": a.backend_pattern.backend,
                "pattern": a.backend_pattern.text(),
                "source": a.backend_pattern.source.value,
            }
            for a in placement.assignments
        ],
    }


def placement_from_json(data: Any) -> PlacementStrategy:
    if not isinstance(data, dict):
        raise FileFormatError("placement document must be a JSON object")
    unknown = sorted(set(data) - _PLACEMENT_KEYS)
    if unknown:
        raise FileFormatError(f"unknown field(s) {unknown} in placement document")
    if data.get("version") != PLACEMENT_FORMAT_VERSION:
        raise FileFormatError(
            f"unsupported placement format version {data.get('version')!r}; "
            f"expected {PLACEMENT_FORMAT_VERSION!r}")
    if not isinstance(data.get("assignments"), list):
        raise FileFormatError("placement document needs an assignments list")
    assignments = []
    for order, entry in enumerate(data["assignments"]):
        if not isinstance(entry, dict):
            raise FileFormatError("assignment entries must be objects")
        unknown = sorted(set(entry) - _ASSIGNMENT_KEYS)
        if unknown:
            raise FileFormatError(f"unknown field(s) {unknown} in assignment")
        for key in ("nodes", "root", "backend", "pattern"):
            if key not in entry:
                raise FileFormatError(f"assignment is missing '{key}'")
        nodes = entry["nodes"]
        if not isinstance(nodes, list) or not nodes or not all(
                isinstance(n, int) and not isinstance(n, bool) for n in nodes):
            raise FileFormatError("assignment nodes must be a non-empty list "
                                  "of node ids")
        if not isinstance(entry["root"], int) or isinstance(entry["root"], bool):
            raise FileFormatError("assignment root must be a node id")
        try:
            source = PatternSource(entry.get("source", "explicit"))
        except ValueError:
            raise FileFormatError(
                f"unknown assignment source {entry.get('source')!r}") from None
        bp = BackendPattern(entry["backend"], parse_pattern(entry["pattern"]),
                            source, order)
        assignments.append(Assignment(frozenset(nodes), bp, entry["root"]))
    return PlacementStrategy(assignments)


def load_placement(path: str) -> PlacementStrategy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: not valid JSON: {exc}") from exc
    return placement_from_json(data)


def save_placement(placement: PlacementStrategy, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(placement_to_json(placement), fh, indent=2)
        fh.write("\n")
