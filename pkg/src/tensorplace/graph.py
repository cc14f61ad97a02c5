"""Graph IR: immutable operator dataflow graphs plus the structural queries
(topological order, depths, post-dominators, path interiors) that the pattern
generator and the placement optimizers are built on.

Graphs are DAGs of operator nodes. Node inputs reference either another node
by id or a named graph input. A node's depth is the length of the longest
path from any graph input to it. Post-dominance is computed against a virtual
sink that joins all graph outputs, so `post_dominator` returns None exactly
when no real node post-dominates the query node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from tensorplace.errors import GraphFormatError, GraphValidationError

GRAPH_FORMAT_VERSION = "collage-graph/1"

AttrValue = Any  # int | float | str | bool | list[int]

# Sentinel successor used by the post-dominance pass; never a real node id.
_VIRTUAL_SINK = object()


@dataclass(frozen=True)
class InputRef:
    """Reference from a node input slot to a named graph input."""

    name: str


@dataclass(frozen=True)
class GraphInput:
    """Named external input tensor with its shape."""

    name: str
    shape: tuple[int, ...]


@dataclass(frozen=True)
class OperatorNode:
    """Single operator: kind, attributes, ordered inputs, output shape."""

    id: int
    op_kind: str
    attrs: Mapping[str, AttrValue]
    input_ids: tuple[int | InputRef, ...]
    output_shape: tuple[int, ...]


def _check_attr_value(value: Any) -> bool:
    if isinstance(value, bool):
        return True
    if isinstance(value, (int, float, str)):
        return True
    if isinstance(value, (list, tuple)):
        return all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    return False


def _check_shape(shape: Iterable[Any]) -> bool:
    dims = list(shape)
    return len(dims) > 0 and all(
        isinstance(d, int) and not isinstance(d, bool) and d > 0 for d in dims
    )


class ComputationGraph:
    """Validated immutable operator DAG.

    Construction performs full validation: unique node ids, no dangling
    references, no cycles, positive shapes, every node reachable from a graph
    input and reaching a graph output. Structural queries are cached.
    """

    def __init__(self, inputs: Iterable[GraphInput], nodes: Iterable[OperatorNode],
                 outputs: Iterable[int]):
        self.inputs: tuple[GraphInput, ...] = tuple(inputs)
        node_list = sorted(nodes, key=lambda n: n.id)
        self.nodes: dict[int, OperatorNode] = {n.id: n for n in node_list}
        self.outputs: tuple[int, ...] = tuple(outputs)
        self._validate_structure(node_list)
        self._consumers = self._build_consumers()
        self._topo = self._compute_topo()
        self._topo_index = {nid: i for i, nid in enumerate(self._topo)}
        self._depths = self._compute_depths()
        self._validate_reachability()
        self._pdom_sets: dict[int, frozenset] | None = None
        self._ipdom: dict[int, int | None] | None = None

    # -- construction checks ------------------------------------------------

    def _validate_structure(self, node_list: list[OperatorNode]) -> None:
        input_names = [gi.name for gi in self.inputs]
        if len(set(input_names)) != len(input_names):
            raise GraphValidationError("duplicate graph input names")
        for gi in self.inputs:
            if not _check_shape(gi.shape):
                raise GraphValidationError(
                    f"graph input '{gi.name}' has a non-positive or empty shape")
        if len(node_list) != len(self.nodes):
            seen: set[int] = set()
            for n in node_list:
                if n.id in seen:
                    raise GraphValidationError(f"duplicate node id {n.id}", n.id)
                seen.add(n.id)
        names = set(input_names)
        for n in node_list:
            if not isinstance(n.id, int) or isinstance(n.id, bool):
                raise GraphValidationError(f"node id {n.id!r} is not an integer")
            if not n.op_kind or not isinstance(n.op_kind, str):
                raise GraphValidationError(
                    f"node {n.id} has an empty or non-string op kind", n.id)
            if not _check_shape(n.output_shape):
                raise GraphValidationError(
                    f"node {n.id} has a non-positive or empty shape", n.id)
            for key, value in n.attrs.items():
                if not isinstance(key, str) or not _check_attr_value(value):
                    raise GraphValidationError(
                        f"node {n.id} has unsupported attr {key!r}", n.id)
            for ref in n.input_ids:
                if isinstance(ref, InputRef):
                    if ref.name not in names:
                        raise GraphValidationError(
                            f"node {n.id} references unknown graph input "
                            f"'{ref.name}'", n.id)
                elif isinstance(ref, int) and not isinstance(ref, bool):
                    if ref not in self.nodes:
                        raise GraphValidationError(
                            f"node {n.id} references unknown node {ref}", n.id)
                else:
                    raise GraphValidationError(
                        f"node {n.id} has a malformed input reference "
                        f"{ref!r}", n.id)
        out_seen: set[int] = set()
        for out in self.outputs:
            if out not in self.nodes:
                raise GraphValidationError(f"output references unknown node {out}")
            if out in out_seen:
                raise GraphValidationError(f"node {out} listed as output twice", out)
            out_seen.add(out)
        if self.nodes and not self.outputs:
            raise GraphValidationError("non-empty graph declares no outputs")

    def _build_consumers(self) -> dict[int, tuple[int, ...]]:
        consumers: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for n in self.nodes.values():
            for ref in n.input_ids:
                if isinstance(ref, int):
                    consumers[ref].append(n.id)
        return {nid: tuple(sorted(set(c))) for nid, c in consumers.items()}

    def _compute_topo(self) -> tuple[int, ...]:
        import heapq

        pending = {nid: len(set(self.node_predecessors(nid))) for nid in self.nodes}
        ready = [nid for nid, k in pending.items() if k == 0]
        heapq.heapify(ready)
        order: list[int] = []
        remaining_preds = dict(pending)
        while ready:
            nid = heapq.heappop(ready)
            order.append(nid)
            for c in self._consumers[nid]:
                remaining_preds[c] -= 1
                if remaining_preds[c] == 0:
                    heapq.heappush(ready, c)
        if len(order) != len(self.nodes):
            stuck = min(nid for nid in self.nodes if remaining_preds[nid] > 0)
            raise GraphValidationError(
                f"graph contains a cycle through node {stuck}", stuck)
        return tuple(order)

    def _compute_depths(self) -> dict[int, int]:
        depths: dict[int, int] = {}
        for nid in self._topo:
            preds = set(self.node_predecessors(nid))
            depths[nid] = 1 + max(depths[p] for p in preds) if preds else 0
        return depths

    def _validate_reachability(self) -> None:
        for nid in self._topo:
            node = self.nodes[nid]
            if not node.input_ids:
                raise GraphValidationError(
                    f"node {nid} consumes no inputs (unreachable from graph "
                    f"inputs)", nid)
        reaches_out = {out for out in self.outputs}
        for nid in reversed(self._topo):
            if nid in reaches_out:
                continue
            if any(c in reaches_out for c in self._consumers[nid]):
                reaches_out.add(nid)
        for nid in self._topo:
            if nid not in reaches_out:
                raise GraphValidationError(
                    f"node {nid} reaches no graph output", nid)

    # -- structural queries ---------------------------------------------------

    def node_predecessors(self, nid: int) -> tuple[int, ...]:
        """Node-valued inputs of `nid`, in input order (duplicates kept)."""
        return tuple(r for r in self.nodes[nid].input_ids if isinstance(r, int))

    def consumers(self, nid: int) -> tuple[int, ...]:
        return self._consumers[nid]

    def topo_order(self) -> tuple[int, ...]:
        """Deterministic topological order, ties broken by ascending node id."""
        return self._topo

    def topo_index(self, nid: int) -> int:
        return self._topo_index[nid]

    def depth(self, nid: int) -> int:
        return self._depths[nid]

    def depths(self) -> dict[int, int]:
        return dict(self._depths)

    def _pdom(self) -> dict[int, frozenset]:
        if self._pdom_sets is None:
            sets: dict[Any, frozenset] = {_VIRTUAL_SINK: frozenset([_VIRTUAL_SINK])}
            out_set = set(self.outputs)
            for nid in reversed(self._topo):
                succs: list[Any] = list(self._consumers[nid])
                if nid in out_set:
                    succs.append(_VIRTUAL_SINK)
                common = frozenset.intersection(*(sets[s] for s in succs))
                sets[nid] = common | {nid}
            del sets[_VIRTUAL_SINK]
            self._pdom_sets = sets
        return self._pdom_sets

    def post_dominates(self, dominator: int, nid: int) -> bool:
        """True iff every path from `nid` to any output passes `dominator`."""
        return dominator in self._pdom()[nid]

    def post_dominator(self, nid: int) -> int | None:
        """Immediate post-dominator of `nid`, or None when only the virtual
        sink post-dominates it (e.g. `nid` is a graph output)."""
        if self._ipdom is None:
            self._ipdom = {}
            pdom = self._pdom()
            for node_id in self._topo:
                strict = [p for p in pdom[node_id]
                          if p is not _VIRTUAL_SINK and p != node_id]
                if strict:
                    self._ipdom[node_id] = min(strict, key=self._topo_index.__getitem__)
                else:
                    self._ipdom[node_id] = None
        return self._ipdom[nid]

    def paths_between(self, src: int, sink: int) -> frozenset[int]:
        """Nodes strictly between `src` and `sink` on any directed path.

        Requires `sink` to post-dominate `src`.
        """
        if src == sink or not self.post_dominates(sink, src):
            raise ValueError(f"node {sink} does not strictly post-dominate {src}")
        from_src: set[int] = set()
        stack = [c for c in self._consumers[src]]
        while stack:
            nid = stack.pop()
            if nid in from_src or nid == sink:
                continue
            from_src.add(nid)
            stack.extend(self._consumers[nid])
        to_sink: set[int] = set()
        stack = list(self.node_predecessors(sink))
        while stack:
            nid = stack.pop()
            if nid in to_sink or nid == src:
                continue
            to_sink.add(nid)
            stack.extend(self.node_predecessors(nid))
        return frozenset(from_src & to_sink)

    # -- misc -----------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComputationGraph):
            return NotImplemented
        return (self.inputs == other.inputs and self.outputs == other.outputs
                and self.nodes == other.nodes)

    def __repr__(self) -> str:
        return (f"ComputationGraph({len(self.inputs)} inputs, "
                f"{len(self.nodes)} nodes, {len(self.outputs)} outputs)")


@dataclass(frozen=True)
class Subgraph:
    """A set of node ids interpreted against an owning graph."""

    graph: ComputationGraph = field(compare=False)
    node_ids: frozenset[int] = frozenset()

    def __len__(self) -> int:
        return len(self.node_ids)

    def is_connected(self) -> bool:
        """Connectivity over edges between members, direction ignored."""
        if not self.node_ids:
            return True
        todo = {next(iter(sorted(self.node_ids)))}
        seen: set[int] = set()
        while todo:
            nid = todo.pop()
            seen.add(nid)
            neighbors = set(self.graph.node_predecessors(nid))
            neighbors.update(self.graph.consumers(nid))
            todo.update((neighbors & self.node_ids) - seen)
        return seen == self.node_ids

    def internal_roots(self) -> tuple[int, ...]:
        """Members with no consumer inside the set, ascending by id."""
        return tuple(sorted(
            nid for nid in self.node_ids
            if not any(c in self.node_ids for c in self.graph.consumers(nid))))

    def exits(self) -> tuple[int, ...]:
        """Members whose value escapes the set (external consumer or graph
        output), ascending by id."""
        out = set(self.graph.outputs)
        return tuple(sorted(
            nid for nid in self.node_ids
            if nid in out
            or any(c not in self.node_ids for c in self.graph.consumers(nid))))

    def external_predecessors(self) -> frozenset[int]:
        """Node-valued predecessors of members that lie outside the set."""
        preds: set[int] = set()
        for nid in self.node_ids:
            preds.update(self.graph.node_predecessors(nid))
        return frozenset(preds - self.node_ids)


# -- JSON serialization --------------------------------------------------------

_TOP_KEYS = {"version", "inputs", "nodes", "outputs"}
_INPUT_KEYS = {"name", "shape"}
_NODE_KEYS = {"id", "op", "attrs", "inputs", "shape"}


def _reject_unknown(obj: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise GraphFormatError(f"unknown field(s) {unknown} in {where}")


def graph_from_json(data: Any) -> ComputationGraph:
    if not isinstance(data, dict):
        raise GraphFormatError("graph document must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "graph document")
    if data.get("version") != GRAPH_FORMAT_VERSION:
        raise GraphFormatError(
            f"unsupported graph format version {data.get('version')!r}; "
            f"expected {GRAPH_FORMAT_VERSION!r}")
    for key in ("inputs", "nodes", "outputs"):
        if not isinstance(data.get(key), list):
            raise GraphFormatError(f"'{key}' must be a list")
    inputs = []
    for entry in data["inputs"]:
        if not isinstance(entry, dict):
            raise GraphFormatError("graph input entries must be objects")
        _reject_unknown(entry, _INPUT_KEYS, "graph input")
        if not isinstance(entry.get("name"), str) or not isinstance(
                entry.get("shape"), list):
            raise GraphFormatError("graph inputs need a string name and a shape")
        inputs.append(GraphInput(entry["name"], tuple(entry["shape"])))
    nodes = []
    for entry in data["nodes"]:
        if not isinstance(entry, dict):
            raise GraphFormatError("node entries must be objects")
        _reject_unknown(entry, _NODE_KEYS, f"node {entry.get('id')}")
        nid = entry.get("id")
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise GraphFormatError(f"node id {nid!r} is not an integer")
        for key in ("op", "inputs", "shape"):
            if key not in entry:
                raise GraphFormatError(f"node {nid} is missing '{key}'")
        attrs = entry.get("attrs", {})
        if not isinstance(attrs, dict):
            raise GraphFormatError(f"node {nid} attrs must be an object")
        if not isinstance(entry["inputs"], list) or not isinstance(
                entry["shape"], list):
            raise GraphFormatError(f"node {nid} inputs and shape must be lists")
        refs: list[int | InputRef] = []
        for ref in entry["inputs"]:
            if isinstance(ref, dict):
                _reject_unknown(ref, {"input"}, f"node {nid} input reference")
                if not isinstance(ref.get("input"), str):
                    raise GraphFormatError(
                        f"node {nid} has a malformed graph-input reference")
                refs.append(InputRef(ref["input"]))
            elif isinstance(ref, int) and not isinstance(ref, bool):
                refs.append(ref)
            else:
                raise GraphFormatError(
                    f"node {nid} has a malformed input reference {ref!r}")
        attrs_norm = {k: (list(v) if isinstance(v, list) else v)
                      for k, v in sorted(attrs.items())}
        nodes.append(OperatorNode(nid, entry["op"], attrs_norm, tuple(refs),
                                  tuple(entry["shape"])))
    for out in data["outputs"]:
        if not isinstance(out, int) or isinstance(out, bool):
            raise GraphFormatError(f"output reference {out!r} is not a node id")
    return ComputationGraph(inputs, nodes, data["outputs"])


def graph_to_json(g: ComputationGraph) -> dict[str, Any]:
    return {
        "version": GRAPH_FORMAT_VERSION,
        "inputs": [{"name": gi.name, "shape": list(gi.shape)} for gi in g.inputs],
        "nodes": [
            {
                "id": n.id,
                "op": n.op_kind,
                "attrs": {k: n.attrs[k] for k in sorted(n.attrs)},
                "inputs": [
                    {"input": r.name} if isinstance(r, InputRef) else r
                    for r in n.input_ids
                ],
                "shape": list(n.output_shape),
            }
            for n in (g.nodes[nid] for nid in sorted(g.nodes))
        ],
        "outputs": list(g.outputs),
    }


def load_graph(path: str) -> ComputationGraph:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"{path}: not valid JSON: {exc}") from exc
    return graph_from_json(data)


def save_graph(g: ComputationGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_json(g), fh, indent=2)
        fh.write("\n")
