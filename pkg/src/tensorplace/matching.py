"""Structural pattern matching over computation graphs.

A match anchors the pattern root at a graph node and descends positionally:
pattern argument i is matched against the producer of the node's i-th input.
There are no choice points, so a (node, pattern) pair yields at most one
match and matching is deterministic.

Binding is keyed by pattern position (the path of argument indices from the
root). Two positions may bind the same graph node only when their pattern
subtrees are structurally identical; this is how a tree-shaped pattern
expresses a re-converging producer (a diamond) while staying injective across
structurally distinct subpatterns. Sharing is permitted, not forced: equal
subtrees may still bind distinct nodes.

A matched value may leave the match only through the root: any non-root
matched node that is a graph output or has a consumer outside the match
rejects the match, since fusing it would force recomputation or a second
kernel output.
"""

from __future__ import annotations

from dataclasses import dataclass

from tensorplace.errors import PatternError
from tensorplace.graph import ComputationGraph, Subgraph
from tensorplace.patterns import OpPattern, Pattern, Wildcard

Position = tuple[int, ...]


@dataclass(frozen=True)
class Match:
    """Result of anchoring a pattern at `root`.

    `nodes` covers every graph node bound by an op pattern (wildcards bind
    edges, not nodes). `binding` maps each op-pattern position to the node it
    bound; the empty position is the root.
    """

    root: int
    nodes: Subgraph
    binding: tuple[tuple[Position, int], ...]

    def binding_map(self) -> dict[Position, int]:
        return dict(self.binding)


def _constraints_hold(pattern: OpPattern, attrs) -> bool:
    return all(c.matches(attrs) for c in pattern.constraints)


def match_at(g: ComputationGraph, root_id: int, pattern: Pattern) -> Match | None:
    """Match `pattern` with its root anchored at node `root_id`.

    Returns None when the pattern does not match there. Raises PatternError
    for a bare-wildcard pattern and KeyError for an unknown node id.
    """
    if isinstance(pattern, Wildcard):
        raise PatternError("cannot match a bare wildcard as a full pattern")
    if root_id not in g.nodes:
        raise KeyError(f"unknown node id {root_id}")

    binding: dict[Position, int] = {}
    bound_subtree: dict[int, OpPattern] = {}

    def walk(pat: OpPattern, nid: int, pos: Position) -> bool:
        node = g.nodes[nid]
        if node.op_kind != pat.op_kind:
            return False
        if not _constraints_hold(pat, node.attrs):
            return False
        if pat.args and len(pat.args) != len(node.input_ids):
            return False
        prior = bound_subtree.get(nid)
        if prior is not None and prior != pat:
            return False
        bound_subtree[nid] = pat
        binding[pos] = nid
        for i, arg in enumerate(pat.args):
            if isinstance(arg, Wildcard):
                continue
            producer = node.input_ids[i]
            if not isinstance(producer, int):
                return False
            if not walk(arg, producer, pos + (i,)):
                return False
        return True

    if not walk(pattern, root_id, ()):
        return None

    nodes = frozenset(binding.values())
    outputs = set(g.outputs)
    for nid in nodes:
        if nid == root_id:
            continue
        if nid in outputs:
            return None
        if any(c not in nodes for c in g.consumers(nid)):
            return None
    ordered = tuple(sorted(binding.items()))
    return Match(root=root_id, nodes=Subgraph(g, nodes), binding=ordered)


def match_all(g: ComputationGraph, pattern: Pattern) -> list[Match]:
    """All matches of `pattern` in `g`, ordered by ascending root node id."""
    if isinstance(pattern, Wildcard):
        raise PatternError("cannot match a bare wildcard as a full pattern")
    out: list[Match] = []
    for nid in sorted(g.nodes):
        m = match_at(g, nid, pattern)
        if m is not None:
            out.append(m)
    return out
