"""Backend capability registry.

Backends come in two kinds: op kernel libraries (per-kernel invocation) and
graph inference libraries (whole-subgraph engines, eligible for the
graph-level optimizer's region discount). Capabilities are registered either
as explicit DSL patterns or by running a generative fusion rule against a
target graph. The registry indexes patterns by root op kind and hands the
optimizers their candidate (pattern, match) pairs per node.

Every backend should register singleton patterns for the ops it supports so
full graph coverage stays expressible; `uncovered_op_kinds` reports graph op
kinds that no registered pattern can root.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from typing import Any, Iterable

from tensorplace.errors import FileFormatError, RegistryError
from tensorplace.graph import ComputationGraph
from tensorplace.matching import Match, match_at
from tensorplace.patterns import OpPattern, parse_pattern, pattern_to_text
from tensorplace.rules import PatternRule, generate_patterns, load_rule_file

BACKENDS_FORMAT_VERSION = "collage-backends/1"
REGISTRY_FORMAT_VERSION = "tensorplace-registry/1"


class BackendKind(enum.Enum):
    OP_KERNEL_LIBRARY = "op_kernel_library"
    GRAPH_INFERENCE_LIBRARY = "graph_inference_library"


class PatternSource(enum.Enum):
    EXPLICIT = "explicit"
    GENERATED = "generated"


@dataclass(frozen=True)
class BackendDescriptor:
    id: str
    kind: BackendKind
    cost_profile: str | None = None


@dataclass(frozen=True)
class BackendPattern:
    """A pattern registered for a backend; `order` is the global
    registration index used for deterministic tie-breaking."""

    backend: str
    pattern: OpPattern
    source: PatternSource
    order: int

    def text(self) -> str:
        return pattern_to_text(self.pattern)


class PatternRegistry:
    def __init__(self):
        self._backends: dict[str, BackendDescriptor] = {}
        self._patterns: list[BackendPattern] = []
        self._by_root: dict[str, list[BackendPattern]] = {}
        self._seen: set[tuple[str, OpPattern]] = set()

    # -- registration -----------------------------------------------------

    def add_backend(self, desc: BackendDescriptor) -> None:
        if desc.id in self._backends:
            raise RegistryError(f"backend '{desc.id}' is already registered")
        if not desc.id:
            raise RegistryError("backend id must be non-empty")
        self._backends[desc.id] = desc

    def add_pattern(self, backend_id: str, pattern: OpPattern | str,
                    source: PatternSource = PatternSource.EXPLICIT) -> bool:
        """Register one pattern. Returns False (and does nothing) when the
        same (backend, pattern) pair is already present."""
        if backend_id not in self._backends:
            raise RegistryError(f"unknown backend '{backend_id}'")
        if isinstance(pattern, str):
            pattern = parse_pattern(pattern)
        key = (backend_id, pattern)
        if key in self._seen:
            return False
        self._seen.add(key)
        bp = BackendPattern(backend_id, pattern, source, len(self._patterns))
        self._patterns.append(bp)
        self._by_root.setdefault(pattern.op_kind, []).append(bp)
        return True

    def add_pattern_rule(self, backend_id: str, rule: PatternRule,
                         g: ComputationGraph) -> int:
        """Generate patterns for `g` under `rule` and register the new ones.
        Returns how many were added after deduplication."""
        if backend_id not in self._backends:
            raise RegistryError(f"unknown backend '{backend_id}'")
        if rule.backend != backend_id:
            raise RegistryError(
                f"rule is declared for backend '{rule.backend}', not "
                f"'{backend_id}'")
        generated = generate_patterns(rule, g)
        added = 0
        for gp in sorted(generated, key=lambda gp: pattern_to_text(gp.pattern)):
            if self.add_pattern(backend_id, gp.pattern,
                                PatternSource.GENERATED):
                added += 1
        return added

    # -- queries ------------------------------------------------------------

    @property
    def backends(self) -> dict[str, BackendDescriptor]:
        return dict(self._backends)

    @property
    def patterns(self) -> tuple[BackendPattern, ...]:
        return tuple(self._patterns)

    def backend(self, backend_id: str) -> BackendDescriptor:
        try:
            return self._backends[backend_id]
        except KeyError:
            raise RegistryError(f"unknown backend '{backend_id}'") from None

    def graph_backend_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self._backends.values()
                     if b.kind is BackendKind.GRAPH_INFERENCE_LIBRARY)

    def candidates_at(self, g: ComputationGraph,
                      node_id: int) -> list[tuple[BackendPattern, Match]]:
        """(pattern, match) pairs for patterns rooting at `node_id`, in
        registration order."""
        op_kind = g.nodes[node_id].op_kind
        out: list[tuple[BackendPattern, Match]] = []
        for bp in self._by_root.get(op_kind, ()):
            m = match_at(g, node_id, bp.pattern)
            if m is not None:
                out.append((bp, m))
        return out

    def uncovered_op_kinds(self, g: ComputationGraph) -> tuple[str, ...]:
        """Graph op kinds no registered pattern can root, sorted."""
        covered = set(self._by_root)
        present = {n.op_kind for n in g.nodes.values()}
        return tuple(sorted(present - covered))

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        return {
            "version": REGISTRY_FORMAT_VERSION,
            "backends": [
                {"id": b.id, "kind": b.kind.value, "cost_profile": b.cost_profile}
                for b in self._backends.values()
            ],
            "patterns": [
                {"backend": bp.backend, "pattern": bp.text(),
                 "source": bp.source.value}
                for bp in self._patterns
            ],
        }

    @classmethod
    def from_json(cls, data: Any) -> "PatternRegistry":
        if not isinstance(data, dict) or data.get("version") != \
                REGISTRY_FORMAT_VERSION:
            raise FileFormatError("not a registry document")
        reg = cls()
        for entry in data.get("backends", []):
            reg.add_backend(BackendDescriptor(
                entry["id"], BackendKind(entry["kind"]),
                entry.get("cost_profile")))
        for entry in data.get("patterns", []):
            reg.add_pattern(entry["backend"], entry["pattern"],
                            PatternSource(entry["source"]))
        return reg


# -- backends config file ---------------------------------------------------------

_CONFIG_KEYS = {"version", "backends"}
_BACKEND_KEYS = {"id", "kind", "cost_profile", "patterns", "rules"}


@dataclass(frozen=True)
class BackendConfig:
    descriptor: BackendDescriptor
    pattern_texts: tuple[str, ...]
    rule_paths: tuple[str, ...]
    profile_source: Any  # path string, inline profile object, or None


@dataclass(frozen=True)
class BackendsConfig:
    entries: tuple[BackendConfig, ...]

    def entry(self, backend_id: str) -> BackendConfig:
        for e in self.entries:
            if e.descriptor.id == backend_id:
                return e
        raise RegistryError(f"unknown backend '{backend_id}'")


def load_backend_config(path: str) -> BackendsConfig:
    """Load a backends config; `cost_profile` and rule paths are resolved
    relative to the config file's directory."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise FileFormatError(f"{path}: backends config must be a JSON object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise FileFormatError(f"{path}: unknown field(s) {unknown}")
    if data.get("version") != BACKENDS_FORMAT_VERSION:
        raise FileFormatError(
            f"{path}: unsupported backends format version "
            f"{data.get('version')!r}; expected {BACKENDS_FORMAT_VERSION!r}")
    backends = data.get("backends")
    if not isinstance(backends, list) or not backends:
        raise FileFormatError(f"{path}: config needs a non-empty backends list")
    base = os.path.dirname(os.path.abspath(path))
    entries: list[BackendConfig] = []
    seen_ids: set[str] = set()
    for entry in backends:
        if not isinstance(entry, dict):
            raise FileFormatError(f"{path}: backend entries must be objects")
        unknown = sorted(set(entry) - _BACKEND_KEYS)
        if unknown:
            raise FileFormatError(f"{path}: unknown field(s) {unknown} in "
                                  f"backend entry")
        bid = entry.get("id")
        if not isinstance(bid, str) or not bid:
            raise FileFormatError(f"{path}: backend entries need a non-empty id")
        if bid in seen_ids:
            raise FileFormatError(f"{path}: duplicate backend id '{bid}'")
        seen_ids.add(bid)
        try:
            kind = BackendKind(entry.get("kind"))
        except ValueError:
            raise FileFormatError(
                f"{path}: backend '{bid}' has unknown kind "
                f"{entry.get('kind')!r}") from None
        profile = entry.get("cost_profile")
        if isinstance(profile, str):
            profile_source: Any = os.path.join(base, profile)
        elif isinstance(profile, dict) or profile is None:
            profile_source = profile
        else:
            raise FileFormatError(
                f"{path}: backend '{bid}' cost_profile must be a path or an "
                f"inline object")
        patterns = entry.get("patterns", [])
        rule_paths = entry.get("rules", [])
        if not isinstance(patterns, list) or not all(
                isinstance(p, str) for p in patterns):
            raise FileFormatError(
                f"{path}: backend '{bid}' patterns must be DSL strings")
        if not isinstance(rule_paths, list) or not all(
                isinstance(p, str) for p in rule_paths):
            raise FileFormatError(
                f"{path}: backend '{bid}' rules must be file paths")
        desc = BackendDescriptor(
            bid, kind, profile if isinstance(profile, str) else None)
        entries.append(BackendConfig(
            desc, tuple(patterns),
            tuple(os.path.join(base, p) for p in rule_paths), profile_source))
    return BackendsConfig(tuple(entries))


def build_registry(config: BackendsConfig, g: ComputationGraph,
                   backend_ids: Iterable[str] | None = None) -> PatternRegistry:
    """Build a registry for `g` from a config, optionally restricted to a
    subset of its backends (used by the ablation command)."""
    wanted = tuple(backend_ids) if backend_ids is not None else tuple(
        e.descriptor.id for e in config.entries)
    reg = PatternRegistry()
    for bid in wanted:
        entry = config.entry(bid)
        reg.add_backend(entry.descriptor)
        for text in entry.pattern_texts:
            reg.add_pattern(bid, text)
        for rule_path in entry.rule_paths:
            rule = load_rule_file(rule_path)
            reg.add_pattern_rule(bid, rule, g)
    return reg
