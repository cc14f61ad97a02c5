"""Generative pattern rules: per-backend op validity plus fusion transitions.

A rule declares which operators a backend supports (with attr constraints),
assigns each supported op kind a fusion class, and lists transitions
(group_class, path_class, result_class). Pattern generation seeds a group at
every individually valid node and repeatedly enlarges it to the frontier's
immediate post-dominator: the jump is legal when some transition's group
class matches the group's current class and every node strictly between the
frontier and the post-dominator, plus the post-dominator itself, is valid
with class equal to the transition's path class. Each successful enlargement
emits a pattern; growth stops when no transition applies, the frontier has no
post-dominator, or the group would exceed max_fusion_size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterator, Mapping

from tensorplace.errors import RuleError, TensorPlaceError
from tensorplace.graph import ComputationGraph, OperatorNode
from tensorplace.matching import match_at
from tensorplace.patterns import (
    AttrConstraint,
    Equals,
    IntRange,
    OneOf,
    OpPattern,
    Pattern,
    Wildcard,
)

RULE_FORMAT_VERSION = "collage-rules/1"


class OpClass:
    """Standard fusion class names. Rule files may add their own."""

    FUSABLE = "kFusable"
    ELEMWISE = "kElemwise"
    BROADCAST = "kBroadcast"
    INJECTIVE = "kInjective"
    OPAQUE = "kOpaque"

    STANDARD = (FUSABLE, ELEMWISE, BROADCAST, INJECTIVE, OPAQUE)


@dataclass(frozen=True)
class OpValidity:
    op_kind: str
    constraints: tuple[AttrConstraint, ...]
    op_class: str


@dataclass(frozen=True)
class FusionTransition:
    group_class: str
    path_class: str
    result_class: str


@dataclass(frozen=True)
class PatternRule:
    """Backend-specific generative rule; see the module docstring."""

    backend: str
    op_validity: tuple[OpValidity, ...]
    fusion_transitions: tuple[FusionTransition, ...]
    max_fusion_size: int = 16

    def __post_init__(self):
        if self.max_fusion_size < 1:
            raise RuleError("max_fusion_size must be at least 1")
        kinds = [v.op_kind for v in self.op_validity]
        if len(set(kinds)) != len(kinds):
            dup = sorted(k for k in set(kinds) if kinds.count(k) > 1)
            raise RuleError(f"duplicate op entries for {dup} in rule for "
                            f"backend '{self.backend}'")
        allowed = set(OpClass.STANDARD) | {v.op_class for v in self.op_validity}
        for t in self.fusion_transitions:
            for cls in (t.group_class, t.path_class, t.result_class):
                if cls not in allowed:
                    raise RuleError(
                        f"transition references undeclared class '{cls}'")

    def entry_for(self, op_kind: str) -> OpValidity | None:
        for v in self.op_validity:
            if v.op_kind == op_kind:
                return v
        return None

    def class_of(self, op_kind: str) -> str | None:
        entry = self.entry_for(op_kind)
        return entry.op_class if entry else None


def op_valid(rule: PatternRule, node: OperatorNode) -> bool:
    """True when the rule supports the node's op kind and every attr
    constraint holds on the node."""
    entry = rule.entry_for(node.op_kind)
    if entry is None:
        return False
    return all(c.matches(node.attrs) for c in entry.constraints)


def fusion_valid(rule: PatternRule, g: ComputationGraph,
                 group: frozenset[int], group_class: str,
                 src: int, sink: int) -> tuple[bool, str]:
    """Check whether the group may absorb everything between `src` and
    `sink` (plus `sink`). Returns (True, result_class) for the first
    transition, in file order, whose group class matches and whose path nodes
    all validate; otherwise (False, group_class)."""
    if src not in group:
        raise ValueError(f"src node {src} is not in the group")
    path_nodes = set(g.paths_between(src, sink)) | {sink}
    for t in rule.fusion_transitions:
        if t.group_class != group_class:
            continue
        ok = True
        for nid in path_nodes:
            node = g.nodes[nid]
            if not op_valid(rule, node) or rule.class_of(node.op_kind) != t.path_class:
                ok = False
                break
        if ok:
            return True, t.result_class
    return False, group_class


def _grow_from_seed(rule: PatternRule, g: ComputationGraph,
                    seed: int) -> Iterator[tuple[frozenset[int], int]]:
    """Yield (group, root) for the seed singleton and every successful
    post-dominator enlargement, in growth order."""
    group = frozenset([seed])
    yield group, seed
    cls = rule.class_of(g.nodes[seed].op_kind)
    assert cls is not None
    src = seed
    while True:
        sink = g.post_dominator(src)
        if sink is None:
            return
        ok, new_cls = fusion_valid(rule, g, group, cls, src, sink)
        if not ok:
            return
        enlarged = group | g.paths_between(src, sink) | {sink}
        if len(enlarged) > rule.max_fusion_size:
            return
        group = enlarged
        yield group, sink
        cls = new_cls
        src = sink


def fusion_groups(rule: PatternRule, g: ComputationGraph) -> set[frozenset[int]]:
    """All node groups the rule can form on `g` (seeds plus enlargements)."""
    out: set[frozenset[int]] = set()
    for v in sorted(g.nodes):
        if op_valid(rule, g.nodes[v]):
            for group, _root in _grow_from_seed(rule, g, v):
                out.add(group)
    return out


@dataclass(frozen=True)
class GeneratedPattern:
    """A pattern emitted by rule-driven generation, with its provenance."""

    pattern: OpPattern
    backend: str
    origin: str
    source_nodes: frozenset[int]


def group_to_pattern(rule: PatternRule, g: ComputationGraph,
                     group: frozenset[int], root: int) -> OpPattern:
    """Render a grown group as a tree pattern rooted at its exit node.

    Producers outside the group become wildcards; attr constraints are baked
    in from the rule's op_validity entries so the pattern only matches nodes
    the rule actually supports.
    """
    def build(nid: int) -> OpPattern:
        node = g.nodes[nid]
        entry = rule.entry_for(node.op_kind)
        assert entry is not None
        args: list[Pattern] = []
        for ref in node.input_ids:
            if isinstance(ref, int) and ref in group:
                args.append(build(ref))
            else:
                args.append(Wildcard())
        return OpPattern(node.op_kind, tuple(args), entry.constraints)

    return build(root)


def generate_patterns(rule: PatternRule,
                      g: ComputationGraph) -> list[GeneratedPattern]:
    """Generate deduplicated patterns for `g` under `rule`.

    Every returned pattern is self-checked to match its originating group.
    Structurally identical patterns from different seeds are emitted once,
    keeping the first origin.
    """
    emitted: dict[OpPattern, GeneratedPattern] = {}
    for v in sorted(g.nodes):
        if not op_valid(rule, g.nodes[v]):
            continue
        for group, root in _grow_from_seed(rule, g, v):
            pattern = group_to_pattern(rule, g, group, root)
            if pattern in emitted:
                continue
            check = match_at(g, root, pattern)
            if check is None or check.nodes.node_ids != group:
                raise TensorPlaceError(
                    f"internal: generated pattern {pattern!r} failed its "
                    f"self-check against nodes {sorted(group)}")
            origin = (f"rule:{rule.backend} seed={v} root={root} "
                      f"size={len(group)}")
            emitted[pattern] = GeneratedPattern(pattern, rule.backend, origin,
                                                group)
    return list(emitted.values())


# -- rule file IO ---------------------------------------------------------------

_RULE_KEYS = {"version", "backend", "ops", "transitions", "max_fusion_size"}
_OP_KEYS = {"op", "constraints", "class"}
_TRANSITION_KEYS = {"group", "path", "result"}


def _constraint_from_json(key: str, value: Any) -> AttrConstraint:
    if isinstance(value, (str, int, float)) and not isinstance(value, bool):
        return Equals(key, value)
    if isinstance(value, bool):
        raise RuleError(f"constraint '{key}': booleans are not supported")
    if isinstance(value, list):
        for v in value:
            if not isinstance(v, (str, int, float)) or isinstance(v, bool):
                raise RuleError(
                    f"constraint '{key}': list members must be scalars")
        return OneOf(key, tuple(value))
    if isinstance(value, dict):
        if set(value) != {"lo", "hi"}:
            raise RuleError(
                f"constraint '{key}': range objects need exactly lo and hi")
        lo, hi = value["lo"], value["hi"]
        if not isinstance(lo, int) or not isinstance(hi, int) \
                or isinstance(lo, bool) or isinstance(hi, bool) or lo > hi:
            raise RuleError(f"constraint '{key}': bad integer range")
        return IntRange(key, lo, hi)
    raise RuleError(f"constraint '{key}': unsupported value {value!r}")


def _constraint_to_json(c: AttrConstraint) -> Any:
    if isinstance(c, Equals):
        return c.value
    if isinstance(c, OneOf):
        return list(c.values)
    return {"lo": c.lo, "hi": c.hi}


def rule_from_json(data: Any) -> PatternRule:
    if not isinstance(data, dict):
        raise RuleError("rule document must be a JSON object")
    unknown = sorted(set(data) - _RULE_KEYS)
    if unknown:
        raise RuleError(f"unknown field(s) {unknown} in rule document")
    if data.get("version") != RULE_FORMAT_VERSION:
        raise RuleError(f"unsupported rule format version "
                        f"{data.get('version')!r}; expected "
                        f"{RULE_FORMAT_VERSION!r}")
    if not isinstance(data.get("backend"), str) or not data["backend"]:
        raise RuleError("rule document needs a non-empty backend id")
    ops = data.get("ops")
    transitions = data.get("transitions", [])
    if not isinstance(ops, list) or not ops:
        raise RuleError("rule document needs a non-empty ops list")
    if not isinstance(transitions, list):
        raise RuleError("transitions must be a list")
    validity = []
    for entry in ops:
        if not isinstance(entry, dict):
            raise RuleError("ops entries must be objects")
        unknown = sorted(set(entry) - _OP_KEYS)
        if unknown:
            raise RuleError(f"unknown field(s) {unknown} in ops entry")
        op = entry.get("op")
        cls = entry.get("class")
        if not isinstance(op, str) or not op:
            raise RuleError("ops entries need a non-empty op kind")
        if not isinstance(cls, str) or not cls:
            raise RuleError(f"op '{op}' needs a non-empty class")
        raw = entry.get("constraints", {})
        if not isinstance(raw, dict):
            raise RuleError(f"op '{op}' constraints must be an object")
        constraints = tuple(_constraint_from_json(k, raw[k]) for k in sorted(raw))
        validity.append(OpValidity(op, constraints, cls))
    parsed = []
    for entry in transitions:
        if not isinstance(entry, dict):
            raise RuleError("transitions entries must be objects")
        unknown = sorted(set(entry) - _TRANSITION_KEYS)
        if unknown:
            raise RuleError(f"unknown field(s) {unknown} in transition")
        for key in _TRANSITION_KEYS:
            if not isinstance(entry.get(key), str) or not entry[key]:
                raise RuleError(f"transition '{key}' must be a non-empty string")
        parsed.append(FusionTransition(entry["group"], entry["path"],
                                       entry["result"]))
    size = data.get("max_fusion_size", 16)
    if not isinstance(size, int) or isinstance(size, bool):
        raise RuleError("max_fusion_size must be an integer")
    return PatternRule(data["backend"], tuple(validity), tuple(parsed), size)


def rule_to_json(rule: PatternRule) -> dict[str, Any]:
    return {
        "version": RULE_FORMAT_VERSION,
        "backend": rule.backend,
        "ops": [
            {
                "op": v.op_kind,
                "constraints": {c.key: _constraint_to_json(c)
                                for c in v.constraints},
                "class": v.op_class,
            }
            for v in rule.op_validity
        ],
        "transitions": [
            {"group": t.group_class, "path": t.path_class, "result": t.result_class}
            for t in rule.fusion_transitions
        ],
        "max_fusion_size": rule.max_fusion_size,
    }


def load_rule_file(path: str) -> PatternRule:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RuleError(f"{path}: not valid JSON: {exc}") from exc
    return rule_from_json(data)


def save_rule_file(rule: PatternRule, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rule_to_json(rule), fh, indent=2)
        fh.write("\n")
