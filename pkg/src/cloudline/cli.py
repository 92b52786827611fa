"""Command-line entry point.

Subcommands: validate, enumerate, select, simulate, trace. Machine-parseable
JSON goes to stdout and diagnostics to stderr. Exit codes: 0 success/valid,
2 domain negative (invalid configuration, no provider, unsatisfiable),
1 input or system error.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .common import DocumentError, load_json_file
from .feature_model import (
    configuration_to_doc,
    enumerate_configurations,
    parse_configuration,
    parse_feature_model,
    validate_configuration,
)
from .goal_model import parse_goal_model, parse_predicate
from .knowledge import load_catalog, parse_events, query_trace, trace_entry_to_doc
from .mape import load_adaptation_rules
from .mapping import parse_mapping_rules, parse_requirement_set
from .selection import Objective, select_environment
from .simulation import SimulationError, parse_consumer, run_simulation

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DOMAIN = 2


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False))


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudline",
        description="Feature-model driven cloud service selection, configuration, and runtime adaptation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a configuration against its feature model")
    p.add_argument("--model", required=True, help="feature model JSON file")
    p.add_argument("--config", required=True, help="configuration JSON file")

    p = sub.add_parser("enumerate", help="list valid configurations in canonical order")
    p.add_argument("--model", required=True)
    p.add_argument("--limit", type=int, default=1000)

    p = sub.add_parser("select", help="match providers and optimize a configuration")
    p.add_argument("--catalog", required=True, help="directory of feature model JSON files")
    p.add_argument("--requirements", required=True, help="requirement set JSON file")
    p.add_argument("--w-cost", type=_fraction, default=Fraction(1))
    p.add_argument("--w-csl", type=_fraction, default=Fraction(1))

    p = sub.add_parser("simulate", help="run the autonomic loop over an event stream")
    p.add_argument("--catalog", required=True)
    p.add_argument("--consumer", required=True, help="consumer context/objective JSON file")
    p.add_argument("--goals", required=True, help="goal model JSON file")
    p.add_argument("--mapping", required=True, help="mapping rules JSON file")
    p.add_argument("--rules", required=True, help="adaptation rules JSON file")
    p.add_argument("--events", required=True, help="event stream JSON file")
    p.add_argument("--trace", required=True, help="trace log output path")
    p.add_argument("--dump-messages", default=None, help="optional agent message dump path")

    p = sub.add_parser("trace", help="query a trace log")
    p.add_argument("--log", required=True)
    p.add_argument("--filter", default=None, help='predicate over entry fields, e.g. "outcome == applied"')

    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code not in (0, None) else EXIT_OK

    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "enumerate":
            return _cmd_enumerate(args)
        if args.command == "select":
            return _cmd_select(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_trace(args)
    except DocumentError as exc:
        return _fail(str(exc))
    except (ValueError, KeyError, OSError) as exc:
        return _fail(str(exc))


def _cmd_validate(args) -> int:
    fm = parse_feature_model(load_json_file(args.model), source=args.model)
    cfg = parse_configuration(load_json_file(args.config), source=args.config)
    report = validate_configuration(fm, cfg)
    _emit(report.to_doc())
    return EXIT_OK if report.ok else EXIT_DOMAIN


def _cmd_enumerate(args) -> int:
    fm = parse_feature_model(load_json_file(args.model), source=args.model)
    if args.limit < 1:
        return _fail("--limit must be >= 1")
    result = enumerate_configurations(fm, args.limit)
    _emit(
        {
            "configurations": [configuration_to_doc(c) for c in result.configurations],
            "truncated": result.truncated,
        }
    )
    return EXIT_OK if result.configurations else EXIT_DOMAIN


def _cmd_select(args) -> int:
    catalog = load_catalog(args.catalog)
    req = parse_requirement_set(load_json_file(args.requirements), source=args.requirements)
    obj = Objective(w_cost=args.w_cost, w_csl=args.w_csl)
    scored = select_environment(req, catalog, obj)
    if scored is None:
        print("no match")
        return EXIT_DOMAIN
    _emit(scored.to_doc())
    return EXIT_OK


def _cmd_simulate(args) -> int:
    catalog = load_catalog(args.catalog)
    consumer = parse_consumer(load_json_file(args.consumer), source=args.consumer)
    gm = parse_goal_model(load_json_file(args.goals), source=args.goals)
    mapping_rules = parse_mapping_rules(load_json_file(args.mapping), source=args.mapping)
    adaptation_rules = load_adaptation_rules(load_json_file(args.rules), catalog, source=args.rules)
    events = parse_events(load_json_file(args.events), source=args.events)
    try:
        result = run_simulation(
            catalog,
            consumer,
            gm,
            mapping_rules,
            adaptation_rules,
            events,
            trace_path=args.trace,
            dump_path=args.dump_messages,
        )
    except SimulationError as exc:
        print(f"{exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for diagnostic in result.diagnostics:
        print(
            f"{diagnostic.severity}: rule {diagnostic.rule_id}: {diagnostic.message}",
            file=sys.stderr,
        )
    _emit(result.to_doc())
    return EXIT_OK


def _cmd_trace(args) -> int:
    entry_filter = None
    if args.filter is not None:
        entry_filter = parse_predicate(args.filter, source="--filter")
    entries = query_trace(Path(args.log), entry_filter)
    for entry in entries:
        print(json.dumps(trace_entry_to_doc(entry), sort_keys=True, ensure_ascii=False))
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())
