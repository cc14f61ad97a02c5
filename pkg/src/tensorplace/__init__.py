"""Backend placement optimizer for tensor computation graphs.

Splits a dataflow graph into kernels, assigns each kernel to a registered
backend via pattern matching, and searches for the cheapest full placement
with an operator-level dynamic program followed by an optional graph-level
evolutionary pass.
"""

from tensorplace.errors import (
    CacheFormatError,
    CoverageError,
    FileFormatError,
    GraphFormatError,
    GraphValidationError,
    MatchMismatchError,
    OverlapError,
    PatternError,
    PatternSyntaxError,
    PlacementError,
    ProfileError,
    QuotientCycleError,
    RegistryError,
    RuleError,
    SearchLimitError,
    TensorPlaceError,
    UncoverableGraphError,
)
from tensorplace.graph import (
    ComputationGraph,
    GraphInput,
    InputRef,
    OperatorNode,
    Subgraph,
    load_graph,
    save_graph,
)
from tensorplace.patterns import (
    AttrConstraint,
    Equals,
    IntRange,
    OneOf,
    OpPattern,
    Wildcard,
    load_pattern_file,
    parse_pattern,
    pattern_to_text,
    save_pattern_file,
)
from tensorplace.matching import Match, match_all, match_at
from tensorplace.rules import (
    FusionTransition,
    GeneratedPattern,
    OpClass,
    PatternRule,
    fusion_groups,
    fusion_valid,
    generate_patterns,
    load_rule_file,
    op_valid,
)
from tensorplace.registry import (
    BackendDescriptor,
    BackendKind,
    BackendPattern,
    PatternRegistry,
    PatternSource,
    load_backend_config,
)
from tensorplace.cost import (
    CostCache,
    Measurer,
    OpCost,
    SimMeasurer,
    SimProfile,
    cache_load,
    cache_save,
    kernel_key,
    load_profile,
    measure_placement,
    placement_cost_additive,
    placement_cost_graphlevel,
    save_profile,
    total_cost,
)
from tensorplace.placement import (
    Assignment,
    PlacementStrategy,
    build_report,
    format_report,
    load_placement,
    placement_sort_key,
    save_placement,
    validate_placement,
)
from tensorplace.dp import DPResult, DPStats, optimize
from tensorplace.evolution import ESConfig, ESResult, decode_genome, evolve

__version__ = "0.1.0"
