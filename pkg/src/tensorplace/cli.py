"""Command line entry points.

Subcommands:
  optimize      place a graph across backends and write the result files
  ablate        re-optimize under growing backend prefixes, write a CSV
  gen-patterns  run a fusion rule against a graph, emit the pattern file
  verify        cross-check the optimizers against exhaustive references

Exit codes: 0 success; 1 the graph cannot be fully covered; 2 bad usage,
unreadable or malformed inputs, or an exhaustive-check size cap; 3 an
internal invariant failed (verification mismatch, non-monotone ablation).
Failures print one JSON object to stderr: {"error": code, "message": text}.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Any

from tensorplace import oracle
from tensorplace.cost import CostCache, SimMeasurer, cache_load, cache_save, \
    load_profile, measure_placement, profile_from_json
from tensorplace.dp import DPResult, optimize as dp_optimize
from tensorplace.errors import FileFormatError, GraphValidationError, \
    PatternError, PatternSyntaxError, ProfileError, RegistryError, \
    SearchLimitError, TensorPlaceError, UncoverableGraphError
from tensorplace.evolution import ESConfig, ESResult, eligible_slots, evolve, \
    resolve_graph_backend
from tensorplace.graph import ComputationGraph, load_graph
from tensorplace.placement import build_report, format_report, save_placement
from tensorplace.registry import BackendsConfig, PatternRegistry, \
    build_registry, load_backend_config
from tensorplace.rules import fusion_groups, generate_patterns, load_rule_file

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _error(code: str, message: str, **extra: Any) -> None:
    payload: dict[str, Any] = {"error": code, "message": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as the JSON error object."""

    def error(self, message: str) -> None:  # type: ignore[override]
        _error("usage", message)
        raise SystemExit(EXIT_CONFIG)


def _build_measurer(config: BackendsConfig, cache_path: str | None) \
        -> tuple[SimMeasurer, CostCache | None]:
    profiles = {}
    for entry in config.entries:
        bid = entry.descriptor.id
        src = entry.profile_source
        if src is None:
            raise ProfileError(
                f"backend '{bid}' has no cost_profile; simulated "
                f"measurement needs one per backend")
        profile = load_profile(src) if isinstance(src, str) \
            else profile_from_json(src)
        profiles[bid] = profile
    cache: CostCache | None = None
    if cache_path is not None:
        if os.path.exists(cache_path):
            cache = cache_load(cache_path)
            for note in cache.load_warnings:
                _warn(f"cost cache {cache_path}: {note}")
        else:
            cache = CostCache()
    return SimMeasurer(profiles, cache=cache), cache


def _setup(args: argparse.Namespace) \
        -> tuple[ComputationGraph, BackendsConfig, PatternRegistry]:
    g = load_graph(args.graph)
    config = load_backend_config(args.backends)
    registry = build_registry(config, g)
    uncovered = registry.uncovered_op_kinds(g)
    if uncovered:
        _warn(f"no registered pattern roots op kind(s): "
              f"{', '.join(uncovered)}; the graph cannot be fully covered")
    return g, config, registry


def _write_history_csv(path: str, es: ESResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_cost_ms"])
        for gen, cost in es.history:
            writer.writerow([gen, repr(cost)])


def _cmd_optimize(args: argparse.Namespace) -> int:
    g, config, registry = _setup(args)
    measurer, cache = _build_measurer(config, args.cache)

    dp_result: DPResult = dp_optimize(g, registry, measurer, args.epsilon)
    es_result: ESResult | None = None
    if args.level == "graph":
        target = resolve_graph_backend(registry, args.graph_backend)
        es_config = ESConfig(
            population_size=args.es_pop, generations=args.es_gens,
            seed=args.seed, time_budget_s=args.es_budget_s)
        es_result = evolve(g, registry, measurer, dp_result.placement,
                           args.epsilon, es_config, graph_backend=target)
        placement = es_result.placement
        final_cost = es_result.cost_ms
    else:
        placement = dp_result.placement
        final_cost = dp_result.cost_ms

    os.makedirs(args.out, exist_ok=True)
    save_placement(placement, os.path.join(args.out, "placement.json"))
    kernel_costs = measure_placement(measurer, g, placement)
    report = build_report(g, placement, kernel_costs, args.epsilon)
    with open(os.path.join(args.out, "report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(format_report(report))

    stats: dict[str, Any] = {
        "level": args.level,
        "epsilon_ms": args.epsilon,
        "dp_cost_ms": dp_result.cost_ms,
        "final_cost_ms": final_cost,
        "dp": dp_result.stats.to_json(),
        "es": None,
        "measurer": {
            "calls": measurer.calls,
            "cache_hits": measurer.cache_hits,
            "computations": measurer.computations,
        },
        "report": report,
    }
    if es_result is not None:
        stats["es"] = {
            "seed_cost_ms": es_result.seed_cost_ms,
            "final_cost_ms": es_result.cost_ms,
            "generations_run": max(0, len(es_result.history) - 1),
            "evaluations": es_result.evaluations,
            "genome_length": es_result.genome_length,
        }
        _write_history_csv(os.path.join(args.out, "es_history.csv"),
                           es_result)
    with open(os.path.join(args.out, "stats.json"), "w",
              encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if args.cache is not None and cache is not None:
        cache_save(cache, args.cache)
    print(f"placed {len(g.nodes)} node(s) into "
          f"{len(placement.assignments)} kernel(s); "
          f"cost {final_cost!r} ms; outputs in {args.out}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    g, config, _unused = _setup(args)
    measurer, cache = _build_measurer(config, args.cache)
    ids = [e.descriptor.id for e in config.entries]

    rows: list[tuple[str, float]] = []
    for i in range(1, len(ids) + 1):
        subset = ids[:i]
        registry = build_registry(config, g, subset)
        try:
            cost = dp_optimize(g, registry, measurer, args.epsilon).cost_ms
        except UncoverableGraphError:
            cost = float("inf")
        rows.append(("+".join(subset), cost))

    if rows and rows[-1][1] == float("inf"):
        raise UncoverableGraphError(
            "no full cover exists even with every backend enabled",
            op_kinds=(), node_ids=())

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "ablation.csv")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["backends", "cost_ms"])
        for name, cost in rows:
            writer.writerow([name, "inf" if cost == float("inf")
                             else repr(cost)])

    for name, cost in rows:
        shown = "infeasible" if cost == float("inf") else f"{cost!r} ms"
        print(f"{name}: {shown}")

    if args.cache is not None and cache is not None:
        cache_save(cache, args.cache)

    for prev, cur in zip(rows, rows[1:]):
        if cur[1] > prev[1]:
            _error("ablation_violation",
                   f"cost increased when adding a backend: "
                   f"{prev[0]} -> {cur[0]} went {prev[1]!r} -> {cur[1]!r}",
                   rows=[[name, cost] for name, cost in rows])
            return EXIT_INTERNAL
    print(f"ablation monotone over {len(rows)} subset(s); wrote {out_path}")
    return EXIT_OK


def _cmd_gen_patterns(args: argparse.Namespace) -> int:
    g = load_graph(args.graph)
    rule = load_rule_file(args.rules)
    generated = generate_patterns(rule, g)
    patterns = [gp.pattern for gp in generated]
    comments = [gp.origin for gp in generated]
    if args.out is not None:
        from tensorplace.patterns import save_pattern_file
        save_pattern_file(patterns, args.out, comments)
        print(f"wrote {len(patterns)} pattern(s) to {args.out}")
    else:
        from tensorplace.patterns import pattern_to_text
        for p, origin in zip(patterns, comments):
            print(f"{pattern_to_text(p)}  # {origin}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    g, config, registry = _setup(args)
    measurer, _cache = _build_measurer(config, None)
    failures: list[str] = []

    dp_result: DPResult | None
    try:
        dp_result = dp_optimize(g, registry, measurer, args.epsilon)
    except UncoverableGraphError:
        dp_result = None
    reference = oracle.optimal_placement(g, registry, measurer, args.epsilon,
                                         max_nodes=args.max_nodes)
    if (dp_result is None) != (reference is None):
        failures.append(
            "placement: search and enumeration disagree on feasibility "
            f"(search={'infeasible' if dp_result is None else 'feasible'})")
    elif dp_result is not None and reference is not None:
        ref_placement, ref_cost = reference
        if dp_result.cost_ms != ref_cost:
            failures.append(
                f"placement: cost mismatch, search {dp_result.cost_ms!r} "
                f"vs exhaustive {ref_cost!r}")
        elif dp_result.placement != ref_placement:
            failures.append("placement: equal cost but different kernels "
                            "after canonical tie-breaking")
        else:
            print(f"ok: operator-level search matches exhaustive optimum "
                  f"({ref_cost!r} ms)")
    if dp_result is None and reference is None:
        print("ok: both search and enumeration report the graph uncoverable")

    rule_count = 0
    for entry in config.entries:
        for rule_path in entry.rule_paths:
            rule = load_rule_file(rule_path)
            produced = fusion_groups(rule, g)
            expected = oracle.enumerate_fusion_groups(rule, g)
            rule_count += 1
            if produced != expected:
                missing = sorted(tuple(sorted(s)) for s in expected - produced)
                extra = sorted(tuple(sorted(s)) for s in produced - expected)
                failures.append(
                    f"fusion groups: {rule_path} mismatch "
                    f"(missing={missing}, extra={extra})")
            else:
                print(f"ok: {rule_path}: {len(produced)} fusion group(s) "
                      f"match the exhaustive enumeration")
    if rule_count == 0:
        print("ok: no fusion rules configured; group check skipped")

    if dp_result is not None and registry.graph_backend_ids():
        target = resolve_graph_backend(registry, args.graph_backend)
        k = len(eligible_slots(registry, dp_result.placement))
        if k > oracle.MAX_ORACLE_GENOME:
            print(f"ok: genome check skipped ({k} eligible kernels exceeds "
                  f"the exhaustive cap {oracle.MAX_ORACLE_GENOME})")
        else:
            es_config = ESConfig(population_size=args.es_pop,
                                 generations=args.es_gens, seed=args.seed)
            es = evolve(g, registry, measurer, dp_result.placement,
                        args.epsilon, es_config, graph_backend=target)
            _bits, best_cost = oracle.optimal_genome(
                g, registry, measurer, dp_result.placement, args.epsilon,
                target)
            if es.cost_ms != best_cost:
                failures.append(
                    f"genome: evolutionary result {es.cost_ms!r} does not "
                    f"reach the exhaustive optimum {best_cost!r}")
            else:
                print(f"ok: evolutionary search reaches the exhaustive "
                      f"genome optimum ({best_cost!r} ms over {k} bit(s))")
    elif dp_result is not None:
        print("ok: no graph inference library registered; "
              "genome check skipped")

    if failures:
        _error("verify_failed", "; ".join(failures), checks=failures)
        return EXIT_INTERNAL
    print("verify: all checks passed")
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser, backends: bool = True) -> None:
    sub.add_argument("graph", help="computation graph JSON file")
    if backends:
        sub.add_argument("--backends", required=True,
                         help="backends config JSON file")
        sub.add_argument("--epsilon", type=float, default=0.01,
                         help="per-kernel launch overhead in ms "
                              "(default 0.01)")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tensorplace",
                     description="Backend placement optimizer for tensor "
                                 "computation graphs.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_opt = subs.add_parser("optimize", help="optimize a graph's placement")
    _add_common(p_opt)
    p_opt.add_argument("--level", choices=("op", "graph"), default="op",
                       help="stop after the operator-level search (op) or "
                            "run the graph-level pass too (graph)")
    p_opt.add_argument("--cache", default=None,
                       help="cost cache JSONL file, read if present and "
                            "written back on success")
    p_opt.add_argument("--seed", type=int, default=0,
                       help="random seed for the graph-level search")
    p_opt.add_argument("--es-pop", type=int, default=32,
                       help="population size (default 32)")
    p_opt.add_argument("--es-gens", type=int, default=200,
                       help="generations (default 200)")
    p_opt.add_argument("--es-budget-s", type=float, default=None,
                       help="optional wall-clock budget in seconds")
    p_opt.add_argument("--graph-backend", default=None,
                       help="offload target; defaults to the unique graph "
                            "inference library in the config")
    p_opt.add_argument("--out", default="tp-out",
                       help="output directory (default tp-out)")
    p_opt.set_defaults(func=_cmd_optimize)

    p_abl = subs.add_parser(
        "ablate", help="optimize under growing backend prefixes")
    _add_common(p_abl)
    p_abl.add_argument("--cache", default=None,
                       help="cost cache JSONL file, shared across subsets")
    p_abl.add_argument("--out", default="tp-out",
                       help="output directory (default tp-out)")
    p_abl.set_defaults(func=_cmd_ablate)

    p_gen = subs.add_parser(
        "gen-patterns", help="expand a fusion rule against a graph")
    p_gen.add_argument("graph", help="computation graph JSON file")
    p_gen.add_argument("--rules", required=True, help="fusion rule JSON file")
    p_gen.add_argument("--out", default=None,
                       help="pattern file to write; stdout when omitted")
    p_gen.set_defaults(func=_cmd_gen_patterns)

    p_ver = subs.add_parser(
        "verify", help="cross-check optimizers against exhaustive references")
    _add_common(p_ver)
    p_ver.add_argument("--max-nodes", type=int, default=oracle.MAX_ORACLE_NODES,
                       help="cap for exhaustive placement enumeration")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--es-pop", type=int, default=32)
    p_ver.add_argument("--es-gens", type=int, default=200)
    p_ver.add_argument("--graph-backend", default=None)
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_CONFIG
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _error("file_not_found", str(exc))
        return EXIT_CONFIG
    except UncoverableGraphError as exc:
        _error("uncoverable", str(exc), op_kinds=list(exc.op_kinds),
               node_ids=list(exc.node_ids))
        return EXIT_INFEASIBLE
    except SearchLimitError as exc:
        _error("limit_exceeded", str(exc))
        return EXIT_CONFIG
    except PatternSyntaxError as exc:
        _error("pattern_syntax", str(exc))
        return EXIT_CONFIG
    except GraphValidationError as exc:
        _error("graph_invalid", str(exc))
        return EXIT_CONFIG
    except (FileFormatError, ProfileError, RegistryError, PatternError,
            ValueError) as exc:
        _error("bad_input", str(exc))
        return EXIT_CONFIG
    except TensorPlaceError as exc:
        _error("internal", str(exc))
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last-resort guard
        _error("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
