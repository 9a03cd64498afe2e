"""Scenario runner: scripted environment inputs with step-indexed assertions.

A scenario file is line-oriented and readable without knowing the machine
language internals:

    scenario swap_basic
    machine ../swap.asm
    seed 1
    steps 2
    init a := 5
    step 1: in := 3; choose Main.choose1 = 2; schedule m1
    assert 1: a = 2 and b = 1
    final: a = 1

`step k:` entries feed monitored bindings, choice-script entries, and the
scheduled agent for the k-th step (1-based). `assert k:` conditions are
evaluated in the state reached after step k (`assert 0:` checks the
initial state); `final:` conditions are evaluated in the last state. Every
assertion is evaluated even after failures, and the report carries the
values that witnessed each failure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .errors import AsmError, ManifestError
from .interp import (
    ResEntry,
    Resolver,
    Trace,
    eval_term,
    initial_state,
    override_state,
    run,
)
from .multiagent import ScriptedOrder, Synchronous, ma_run
from .parser import App, MachineDef, Term, Var, parse_machine, parse_term, pp_term
from .state import FunctionKind, Location, State
from .values import BoolV, Value, show_value


@dataclass
class Scenario:
    name: str
    machine_path: str
    seed: int = 0
    max_steps: Optional[int] = None
    init_entries: List[str] = field(default_factory=list)
    step_cmds: Dict[int, List[str]] = field(default_factory=dict)
    assertions: List[Tuple[int, str]] = field(default_factory=list)
    finals: List[str] = field(default_factory=list)
    source_path: Optional[Path] = None


@dataclass
class AssertionResult:
    kind: str  # step | final
    index: Optional[int]
    text: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioReport:
    name: str
    results: List[AssertionResult]
    warnings: List[str]
    error: Optional[str] = None
    trace: Optional[Trace] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(r.passed for r in self.results)


def parse_scenario(text: str, source_path: Optional[Path] = None) -> Scenario:
    name = None
    machine_path = None
    sc = Scenario("", "")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "scenario":
            name = rest
        elif head == "machine":
            machine_path = rest
        elif head == "seed":
            sc.seed = int(rest)
        elif head == "steps":
            sc.max_steps = int(rest)
        elif head == "init":
            if ":=" not in rest:
                raise ManifestError(f"line {lineno}: init needs '<loc> := <value>'")
            sc.init_entries.append(rest)
        elif head == "step":
            idx_text, colon, cmds = rest.partition(":")
            if not colon:
                raise ManifestError(f"line {lineno}: expected 'step <k>: <commands>'")
            try:
                k = int(idx_text.strip())
            except ValueError:
                raise ManifestError(f"line {lineno}: bad step index {idx_text!r}") from None
            if k < 1:
                raise ManifestError(f"line {lineno}: step indices are 1-based")
            sc.step_cmds.setdefault(k, []).extend(
                c.strip() for c in cmds.split(";") if c.strip())
        elif head == "assert":
            idx_text, colon, cond = rest.partition(":")
            if not colon:
                raise ManifestError(f"line {lineno}: expected 'assert <k>: <condition>'")
            try:
                k = int(idx_text.strip())
            except ValueError:
                raise ManifestError(f"line {lineno}: bad assert index {idx_text!r}") from None
            sc.assertions.append((k, cond.strip()))
        elif head.startswith("final"):
            cond = rest
            if head == "final:":
                pass
            elif rest.startswith(":"):
                cond = rest[1:].strip()
            else:
                raise ManifestError(f"line {lineno}: expected 'final: <condition>'")
            sc.finals.append(cond)
        else:
            raise ManifestError(f"line {lineno}: unknown directive {head!r}")
    if name is None:
        raise ManifestError("scenario file lacks a 'scenario <name>' line")
    if machine_path is None:
        raise ManifestError(f"scenario {name!r} lacks a 'machine <path>' line")
    sc.name = name
    sc.machine_path = machine_path
    sc.source_path = source_path
    return sc


def _parse_override(text: str, machine: MachineDef) -> Tuple[App, Term]:
    lhs_text, rhs_text = text.split(":=", 1)
    lhs = parse_term(lhs_text.strip(), machine.sig)
    if isinstance(lhs, Var):  # unreachable after resolution, kept for clarity
        lhs = App(lhs.name, ())
    if not isinstance(lhs, App):
        raise ManifestError(f"init target {lhs_text.strip()!r} is not a location")
    return lhs, parse_term(rhs_text.strip(), machine.sig)


def _literal_value(text: str, machine: MachineDef) -> Value:
    term = parse_term(text.strip(), machine.sig)
    return eval_term(term, State(machine.sig))


def _step_location(text: str, machine: MachineDef) -> Location:
    empty = State(machine.sig)
    t = parse_term(text.strip(), machine.sig)
    if not isinstance(t, App):
        raise ManifestError(f"{text.strip()!r} is not a location")
    args = tuple(eval_term(a, empty) for a in t.args)
    return Location(t.fname, args)


@dataclass
class _Script:
    monitored: List[Dict[Location, Value]]
    entries: List[List[ResEntry]]
    schedule: Dict[int, str]  # 1-based step -> agent


def _compile_steps(sc: Scenario, machine: MachineDef, n_steps: int) -> _Script:
    monitored: List[Dict[Location, Value]] = [{} for _ in range(n_steps)]
    entries: List[List[ResEntry]] = [[] for _ in range(n_steps)]
    schedule: Dict[int, str] = {}
    for k, cmds in sc.step_cmds.items():
        if k > n_steps:
            raise ManifestError(f"step {k} is beyond the run length {n_steps}")
        for cmd in cmds:
            if cmd.startswith("choose "):
                rest = cmd[len("choose "):]
                label, eq, val_text = rest.partition("=")
                if not eq:
                    raise ManifestError(f"expected 'choose <label> = <value>': {cmd!r}")
                entries[k - 1].append(ResEntry(
                    "choose", label.strip(), "", _literal_value(val_text, machine)))
            elif cmd.startswith("abstract "):
                rest = cmd[len("abstract "):]
                fn_text, eq, val_text = rest.partition("=")
                if not eq:
                    raise ManifestError(f"expected 'abstract <f(args)> = <value>': {cmd!r}")
                loc = _step_location(fn_text, machine)
                entries[k - 1].append(ResEntry(
                    "abstract", loc.show(), "", _literal_value(val_text, machine)))
            elif cmd.startswith("schedule "):
                aid = cmd[len("schedule "):].strip()
                if k in schedule:
                    raise ManifestError(f"step {k} schedules two agents")
                schedule[k] = aid
            elif ":=" in cmd:
                loc_text, val_text = cmd.split(":=", 1)
                loc = _step_location(loc_text, machine)
                monitored[k - 1][loc] = _literal_value(val_text, machine)
            else:
                raise ManifestError(f"cannot parse step command {cmd!r}")
    return _Script(monitored, entries, schedule)


def _witnesses(term: Term, state: State, machine: MachineDef) -> str:
    """Values of the maximal signature applications inside an assertion."""
    found: List[str] = []
    seen = set()

    def walk(t: Term) -> None:
        if isinstance(t, App):
            if machine.sig.get(t.fname) is not None:
                try:
                    shown = f"{pp_term(t)} = {show_value(eval_term(t, state))}"
                except AsmError:
                    shown = f"{pp_term(t)} = <error>"
                if shown not in seen:
                    seen.add(shown)
                    found.append(shown)
                return
            for a in t.args:
                walk(a)

    walk(term)
    return ", ".join(found)


def run_scenario(source: Union[Scenario, str, Path], base_dir: Optional[Path] = None) -> ScenarioReport:
    """Execute one scenario and report every assertion outcome."""
    if isinstance(source, Scenario):
        sc = source
    else:
        path = Path(source)
        sc = parse_scenario(path.read_text(encoding="utf-8"), path)
    if base_dir is None:
        base_dir = sc.source_path.parent if sc.source_path else Path(".")

    warnings: List[str] = []
    machine_file = (base_dir / sc.machine_path).resolve()
    try:
        machine = parse_machine(machine_file.read_text(encoding="utf-8"))
    except (OSError, AsmError) as e:
        return ScenarioReport(sc.name, [], [], error=f"cannot load machine: {e}")

    try:
        indices = [k for k, _ in sc.assertions]
        n_steps = sc.max_steps
        if n_steps is None:
            n_steps = max([*indices, *sc.step_cmds.keys(), 0])
        script = _compile_steps(sc, machine, n_steps)
        start = override_state(
            machine, initial_state(machine),
            [_parse_override(t, machine) for t in sc.init_entries])
        resolver = Resolver.scripted(script.entries, fallback_seed=sc.seed,
                                     monitored=script.monitored)
        if script.schedule:
            order = []
            for k in range(1, max(script.schedule) + 1):
                if k not in script.schedule:
                    raise ManifestError(f"step {k} lacks a schedule entry")
                order.append(script.schedule[k])
            trace = ma_run(machine, ScriptedOrder(tuple(order)), n_steps,
                           resolver, start)
        elif machine.agents:
            trace = ma_run(machine, Synchronous(), n_steps, resolver, start)
        else:
            trace = run(machine, n_steps, resolver, start=start)
    except (AsmError, OSError) as e:
        return ScenarioReport(sc.name, [], warnings, error=str(e))

    if not sc.assertions and not sc.finals:
        warnings.append("scenario declares no assertions; it passes vacuously")

    results: List[AssertionResult] = []
    for k, cond in sc.assertions:
        results.append(_evaluate(cond, "step", k, trace, machine))
    for cond in sc.finals:
        results.append(_evaluate(cond, "final", None, trace, machine))
    return ScenarioReport(sc.name, results, warnings, trace=trace)


def _evaluate(cond: str, kind: str, index: Optional[int], trace: Trace,
              machine: MachineDef) -> AssertionResult:
    try:
        term = parse_term(cond, machine.sig)
    except AsmError as e:
        return AssertionResult(kind, index, cond, False, f"parse error: {e}")
    if kind == "step":
        if index >= len(trace.states):
            return AssertionResult(
                kind, index, cond, False,
                f"run ended after {len(trace.states) - 1} step(s) ({trace.outcome})")
        state = trace.states[index]
    else:
        state = trace.final_state
    try:
        value = eval_term(term, state)
    except AsmError as e:
        return AssertionResult(kind, index, cond, False, f"evaluation error: {e}")
    if not isinstance(value, BoolV):
        return AssertionResult(kind, index, cond, False,
                               f"condition evaluated to {show_value(value)}")
    if value.b:
        return AssertionResult(kind, index, cond, True)
    return AssertionResult(kind, index, cond, False,
                           f"witness: {_witnesses(term, state, machine)}")


# ---------------------------------------------------------------------------
# Suites


@dataclass
class SuiteReport:
    reports: List[ScenarioReport]
    warnings: List[str]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1

    def summary(self) -> dict:
        return {
            "scenarios": len(self.reports),
            "failed": [r.name for r in self.reports if not r.passed],
            "warnings": self.warnings + [w for r in self.reports for w in r.warnings],
            "passed": self.passed,
        }


def run_suite(directory: Union[str, Path]) -> SuiteReport:
    """Run every *.scn file in a directory; any failure makes the suite fail."""
    d = Path(directory)
    files = sorted(d.glob("*.scn"))
    warnings = []
    if not files:
        warnings.append(f"no scenario files (*.scn) found in {d}")
    reports = []
    for f in files:
        try:
            reports.append(run_scenario(f))
        except (OSError, AsmError) as e:
            reports.append(ScenarioReport(f.name, [], [], error=str(e)))
    return SuiteReport(reports, warnings)


# ---------------------------------------------------------------------------
# Authoring aid


def skeleton(machine_path: Union[str, Path]) -> str:
    """Emit a scenario template for a machine: every monitored and abstract
    function that may need bindings, plus an empty assertion block."""
    path = Path(machine_path)
    machine = parse_machine(path.read_text(encoding="utf-8"))
    lines = [
        f"// scenario template for machine {machine.name}",
        f"scenario {machine.name.lower()}_example",
        f"machine {path.name}",
        "seed 0",
        "steps 3",
        "",
    ]
    monitored = [d for d in machine.sig.of_kind(FunctionKind.MONITORED) if not d.auto]
    if monitored:
        lines.append("// monitored inputs to bind per step:")
        for d in monitored:
            example = f"{d.name}({', '.join(['0'] * d.arity)})" if d.arity else d.name
            lines.append(f"// step 1: {example} := undef")
        lines.append("")
    abstracts = machine.sig.of_kind(FunctionKind.ABSTRACT)
    if abstracts:
        lines.append("// abstract functions drawn by the resolver:")
        for d in abstracts:
            hint = show_value(d.codomain) if d.codomain else "{false, true}"
            example = f"{d.name}({', '.join(['0'] * d.arity)})" if d.arity else d.name
            lines.append(f"// step 1: abstract {example} = ...   // from {hint}")
        lines.append("")
    if machine.agents:
        lines.append("// agents (scripted order):")
        for aid, rname in machine.agents:
            lines.append(f"// step 1: schedule {aid}   // runs {rname}")
        lines.append("")
    lines.append("// assertions:")
    lines.append("// assert 1: <condition on the state after step 1>")
    lines.append("// final: <condition on the last state>")
    return "\n".join(lines) + "\n"
