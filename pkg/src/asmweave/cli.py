"""Command-line entry point.

Exit status contract: 0 on success or a passing check, 1 on a semantic
failure (failed assertion, refinement failure, inconsistent update set,
violated safety assertion), 2 on usage, parse, or resolution errors.
Human-readable output goes to stdout, diagnostics to stderr, and
machine-readable artifacts are only written when asked for explicitly.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional

from .errors import AsmError, ManifestError, ParseError, ResolveError
from .interp import Resolver, export_trace_jsonl, run
from .multiagent import Interleaving, Synchronous, explore, ma_run
from .normalform import classify_pga, equivalence_check, normalize
from .parser import parse_machine, parse_term, pp_rule_expr, pretty_print
from .refine import BudgetExhausted, Fail, Pass, check_chain
from .scenario import run_scenario, run_suite, skeleton
from .state import FunctionKind, Location
from .values import BoolV, IntV, UNDEF, show_value

EXIT_OK = 0
EXIT_SEMANTIC = 1
EXIT_USAGE = 2


def _default_seed() -> int:
    env = os.environ.get("ASMWEAVE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        return 0


def _load_machine(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_machine(text)


def _print_state(state) -> None:
    lines = []
    for loc, val in state.content.items():
        decl = state.sig.get(loc.fname)
        if decl is not None and decl.auto:
            continue
        lines.append(f"{loc.show()} = {show_value(val)}")
    for line in sorted(lines):
        print(line)


def cmd_run(args) -> int:
    machine = _load_machine(args.machine)
    resolver = Resolver.seeded(args.seed)
    if machine.agents and args.agents != "single":
        scheduler = Synchronous() if args.agents == "sync" else Interleaving()
        trace = ma_run(machine, scheduler, args.steps, resolver)
    else:
        trace = run(machine, args.steps, resolver, rule=args.rule)
    if args.trace:
        Path(args.trace).write_text(export_trace_jsonl(trace), encoding="utf-8")
    _print_state(trace.final_state)
    if trace.outcome == "inconsistent":
        print("run ended inconsistent:", file=sys.stderr)
        for loc, vals in trace.clashes:
            vals_text = ", ".join(sorted(show_value(v) for v in vals))
            print(f"  {loc.show()} <- {{{vals_text}}}", file=sys.stderr)
        return EXIT_SEMANTIC
    return EXIT_OK


def cmd_normalize(args) -> int:
    machine = _load_machine(args.machine)
    rule = args.rule or machine.main
    if rule not in machine.declarations:
        print(f"rule {rule!r} is not declared", file=sys.stderr)
        return EXIT_USAGE
    verdict = classify_pga(machine, rule)
    if not verdict.is_pga:
        print(f"rule {rule} is not a parallel guarded assignment; offending constructs:")
        for pos, name in verdict.offending:
            where = f"{pos[0]}:{pos[1]}" if pos else "?"
            print(f"  {where}: {name}")
        return EXIT_SEMANTIC
    nf = normalize(machine, rule)
    print(f"rule {rule} is a parallel guarded assignment; normal form:")
    print(pp_rule_expr(nf.to_rule(), 1))
    space = _machine_space(machine)
    result = equivalence_check(machine, rule, nf, space)
    print(f"equivalence over {result.states_checked} states: "
          f"{'pass' if result.passed else 'FAIL'}")
    if not result.passed:
        print(f"  witness: {result.witness!r}", file=sys.stderr)
        return EXIT_SEMANTIC
    return EXIT_OK


def _machine_space(machine):
    """Small default space: every 0-ary dynamic location over booleans and 0..2."""
    values = [BoolV(True), BoolV(False), IntV(0), IntV(1), IntV(2), UNDEF]
    space = []
    for decl in machine.sig.entries:
        if decl.auto or decl.arity != 0:
            continue
        if decl.kind in (FunctionKind.CONTROLLED, FunctionKind.MONITORED):
            space.append((Location(decl.name), list(values)))
    return space


def cmd_check_refine(args) -> int:
    results = check_chain(args.manifest)
    status = EXIT_OK
    for name, verdict in results:
        if isinstance(verdict, Pass):
            print(f"PASS  {name}  (abstract runs: {verdict.stats.abstract_runs}, "
                  f"refined runs: {verdict.stats.refined_runs})")
        elif isinstance(verdict, BudgetExhausted):
            print(f"BUDGET  {name}  (enumeration truncated; verdict undecided)")
            status = EXIT_SEMANTIC
        else:
            assert isinstance(verdict, Fail)
            print(f"FAIL  {name}")
            print(f"  refined observations: {verdict.observed.pretty()}")
            for near in verdict.nearest_abstract:
                print(f"  nearest abstract:    {near.pretty()}")
            if args.trace:
                Path(args.trace).write_text(
                    export_trace_jsonl(verdict.counterexample), encoding="utf-8")
            status = EXIT_SEMANTIC
    if not results:
        print("manifest contains no steps; nothing to check")
    return status


def cmd_scenario(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        suite = run_suite(path)
        for w in suite.warnings:
            print(f"warning: {w}", file=sys.stderr)
        for report in suite.reports:
            _print_scenario_report(report)
        if args.json:
            print(json.dumps(suite.summary()))
        return suite.exit_status
    report = run_scenario(path)
    _print_scenario_report(report)
    if args.json:
        print(json.dumps({"scenario": report.name, "passed": report.passed,
                          "failures": [r.text for r in report.results if not r.passed]}))
    return EXIT_OK if report.passed else EXIT_SEMANTIC


def _print_scenario_report(report) -> None:
    mark = "PASS" if report.passed else "FAIL"
    print(f"{mark}  scenario {report.name}")
    if report.error:
        print(f"  error: {report.error}", file=sys.stderr)
    for w in report.warnings:
        print(f"  warning: {w}", file=sys.stderr)
    for r in report.results:
        if r.passed:
            continue
        where = f"after step {r.index}" if r.kind == "step" else "final state"
        print(f"  failed {where}: {r.text}")
        if r.detail:
            print(f"    {r.detail}")


def cmd_explore(args) -> int:
    machine = _load_machine(args.machine)
    assertion = None
    if args.assertion:
        assertion = parse_term(args.assertion, machine.sig)
    report = explore(machine, args.depth, args.budget, assertion)
    print(f"distinct states: {report.states_visited}"
          + (" (complete)" if report.complete else ""))
    if report.inconsistent_branches:
        print(f"inconsistent branches: {report.inconsistent_branches}")
    if report.counterexample is not None:
        print(f"assertion violated after {len(report.counterexample.steps)} step(s):")
        _print_state(report.violating_state)
        if args.trace:
            Path(args.trace).write_text(
                export_trace_jsonl(report.counterexample), encoding="utf-8")
        return EXIT_SEMANTIC
    if assertion is not None:
        print("assertion holds on every visited state")
    return EXIT_OK


def cmd_fmt(args) -> int:
    path = Path(args.machine)
    machine = parse_machine(path.read_text(encoding="utf-8"))
    text = pretty_print(machine)
    if args.stdout:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_skeleton(args) -> int:
    sys.stdout.write(skeleton(args.machine))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="asmweave",
        description="Run, normalize, validate, and refinement-check abstract "
                    "state machines.")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a machine and print its final state")
    run_p.add_argument("machine")
    run_p.add_argument("--steps", type=int, default=10)
    run_p.add_argument("--seed", type=int, default=_default_seed())
    run_p.add_argument("--rule", default=None, help="rule to loop (default: main)")
    run_p.add_argument("--agents", choices=["sync", "interleave", "single"],
                       default="sync", help="scheduler for multi-agent machines")
    run_p.add_argument("--trace", default=None, help="write a JSON-lines trace here")
    run_p.set_defaults(fn=cmd_run)

    norm_p = sub.add_parser("normalize",
                            help="classify a rule and print its guarded-assignment form")
    norm_p.add_argument("machine")
    norm_p.add_argument("--rule", default=None)
    norm_p.set_defaults(fn=cmd_normalize)

    ref_p = sub.add_parser("check-refine", help="check a refinement chain manifest")
    ref_p.add_argument("manifest")
    ref_p.add_argument("--trace", default=None,
                       help="write the first counterexample trace here")
    ref_p.set_defaults(fn=cmd_check_refine)

    sc_p = sub.add_parser("scenario", help="run a scenario file or suite directory")
    sc_p.add_argument("path")
    sc_p.add_argument("--json", action="store_true",
                      help="print a machine-readable summary line")
    sc_p.set_defaults(fn=cmd_scenario)

    ex_p = sub.add_parser("explore",
                          help="breadth-first exploration of all interleavings")
    ex_p.add_argument("machine")
    ex_p.add_argument("--depth", type=int, default=10)
    ex_p.add_argument("--budget", type=int, default=10_000)
    ex_p.add_argument("--assert", dest="assertion", default=None,
                      help="safety condition to check in every state")
    ex_p.add_argument("--trace", default=None,
                      help="write the counterexample trace here")
    ex_p.set_defaults(fn=cmd_explore)

    fmt_p = sub.add_parser("fmt", help="rewrite a machine file in canonical form")
    fmt_p.add_argument("machine")
    fmt_p.add_argument("--stdout", action="store_true",
                       help="print instead of rewriting the file")
    fmt_p.set_defaults(fn=cmd_fmt)

    sk_p = sub.add_parser("skeleton", help="emit a scenario template for a machine")
    sk_p.add_argument("machine")
    sk_p.set_defaults(fn=cmd_skeleton)
    return p


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ResolveError, ManifestError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except AsmError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SEMANTIC


if __name__ == "__main__":
    sys.exit(main())
