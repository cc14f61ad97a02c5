"""Exception hierarchy shared across the package."""

from __future__ import annotations


class TensorPlaceError(Exception):
    """Base class for all errors raised by this package."""


class FileFormatError(TensorPlaceError):
    """A config or data file is malformed (bad JSON, version, or schema)."""


class GraphFormatError(FileFormatError):
    """A graph file does not conform to the graph JSON schema."""


class GraphValidationError(TensorPlaceError):
    """A structurally well-formed graph violates a semantic invariant."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class PatternSyntaxError(TensorPlaceError):
    """Pattern DSL text failed to parse; carries line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class PatternError(TensorPlaceError):
    """A pattern is semantically unusable (e.g. bare wildcard root)."""


class RuleError(FileFormatError):
    """A fusion rule definition is inconsistent or malformed."""


class RegistryError(TensorPlaceError):
    """Backend registration misuse (duplicate id, unknown backend)."""


class ProfileError(TensorPlaceError):
    """A simulated cost profile cannot price the requested kernel."""


class CacheFormatError(FileFormatError):
    """A cost cache file is unreadable as a whole (not a mere bad line)."""


class PlacementError(TensorPlaceError):
    """Base class for placement validation failures."""

    def __init__(self, message: str, node_ids: tuple[int, ...] = ()):
        super().__init__(message)
        self.node_ids = node_ids


class CoverageError(PlacementError):
    """The placement leaves graph nodes uncovered."""


class OverlapError(PlacementError):
    """Two kernels claim the same graph node."""


class MatchMismatchError(PlacementError):
    """A kernel's node set is not a valid match of its backend pattern."""


class QuotientCycleError(PlacementError):
    """Kernels cannot be topologically ordered (cyclic quotient graph)."""


class UncoverableGraphError(TensorPlaceError):
    """No full placement exists for the graph under the current registry."""

    def __init__(self, message: str, op_kinds: tuple[str, ...] = (),
                 node_ids: tuple[int, ...] = ()):
        super().__init__(message)
        self.op_kinds = op_kinds
        self.node_ids = node_ids


class SearchLimitError(TensorPlaceError):
    """A configured search resource cap was exceeded."""
