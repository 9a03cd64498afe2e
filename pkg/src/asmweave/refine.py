"""Bounded checking that a refined machine implements an abstract one.

Both machines are run exhaustively up to their step and branch bounds.
Each run is projected onto the observation terms of its side, consecutive
duplicate observations are collapsed (so machines at different step
granularities compare), and the check passes when every refined
observation sequence is accounted for by some abstract one. A refined run
cut off by its step bound only needs to be a prefix of an abstract
sequence; a run that genuinely stalled must be matched exactly.

Verdicts are three-valued. When the abstract side was truncated in a way
that could still hide a match, the result is BudgetExhausted rather than
Fail; a Pass is only reported when every refined run was enumerated.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

from .errors import BranchBudgetExceeded, ManifestError
from .interp import (
    Progressed,
    Stalled,
    Trace,
    TraceStep,
    enumerate_steps,
    eval_term,
    initial_state,
    override_state,
    state_digest,
)
from .multiagent import agent_successors
from .parser import App, MachineDef, Term, parse_machine, parse_term
from .state import State, fire
from .values import Value


@dataclass
class RefinementSpec:
    abstract: MachineDef
    refined: MachineDef
    # (label, term over the abstract signature, term over the refined signature)
    observations: Tuple[Tuple[str, Term, Term], ...]
    bounds: Tuple[int, int, int]  # max abstract steps, max refined steps, branch budget
    abstract_init: Tuple[Tuple[App, Term], ...] = ()
    refined_init: Tuple[Tuple[App, Term], ...] = ()


@dataclass(frozen=True)
class ObservationSeq:
    tuples: Tuple[Tuple[Value, ...], ...]
    marker: str  # stalled | budget | inconsistent

    def pretty(self) -> str:
        from .values import show_value

        shown = " -> ".join(
            "(" + ", ".join(show_value(v) for v in t) + ")" for t in self.tuples
        )
        return f"{shown} [{self.marker}]"


@dataclass
class RefineStats:
    abstract_runs: int
    refined_runs: int
    abstract_truncated: bool
    refined_truncated: bool


@dataclass
class Pass:
    stats: RefineStats


@dataclass
class Fail:
    stats: RefineStats
    counterexample: Trace
    observed: ObservationSeq
    nearest_abstract: List[ObservationSeq]


@dataclass
class BudgetExhausted:
    stats: RefineStats


RefinementVerdict = Union[Pass, Fail, BudgetExhausted]


# ---------------------------------------------------------------------------
# Run enumeration


@dataclass
class Run:
    states: List[State]
    steps: List[TraceStep]
    marker: str

    def to_trace(self, name: str) -> Trace:
        outcome = {"stalled": "stalled", "budget": "budget",
                   "inconsistent": "inconsistent"}[self.marker]
        return Trace(name, "scripted", list(self.steps), list(self.states), outcome)


class _Truncated(Exception):
    pass


def _successors(machine: MachineDef, state: State, budget: int):
    """(progressed successors, stall reachable, inconsistent branch records)."""
    progressed = []
    stalled = False
    inconsistent = []
    if machine.agents:
        any_updates = False
        for aid, rule in machine.agents:
            succs, bad = agent_successors(machine, state, aid, rule, budget)
            for us, resolutions in succs:
                any_updates = True
                progressed.append(((aid,), fire(state, us), us, resolutions))
            # an inconsistent single-agent update set ends a run
            inconsistent.extend(((aid,), res) for res in bad)
        stalled = not any_updates and not inconsistent
    else:
        for res in enumerate_steps(state, machine, machine.main, budget):
            if isinstance(res, Progressed):
                if len(res.fired) == 0:
                    stalled = True
                else:
                    progressed.append(((), res.next_state, res.fired, res.resolutions))
            elif isinstance(res, Stalled):
                stalled = True
            else:
                inconsistent.append(((), res))
    return progressed, stalled, inconsistent


def enumerate_runs(
    machine: MachineDef,
    max_steps: int,
    budget: int,
    start: Optional[State] = None,
) -> Tuple[List[Run], bool]:
    """Depth-first enumeration of all runs up to `max_steps`.

    The second component reports truncation: the branch budget cut the
    enumeration short, so the run list is incomplete.
    """
    init = start if start is not None else initial_state(machine)
    runs: List[Run] = []
    spent = [0]

    def charge(n: int) -> None:
        spent[0] += n
        if spent[0] > budget:
            raise _Truncated()

    stack: List[Tuple[State, List[State], List[TraceStep]]] = [(init, [init], [])]
    try:
        while stack:
            state, states, steps = stack.pop()
            if len(steps) >= max_steps:
                runs.append(Run(states, steps, "budget"))
                continue
            try:
                progressed, stalled, inconsistent = _successors(machine, state, budget)
            except BranchBudgetExceeded:
                raise _Truncated() from None
            charge(len(progressed) + len(inconsistent))
            if stalled or (not progressed and not inconsistent):
                runs.append(Run(states, steps, "stalled"))
            for sched, res in inconsistent:
                bad = steps + [TraceStep(state_digest(state), res.attempted,
                                         res.resolutions, sched)]
                runs.append(Run(states, bad, "inconsistent"))
            for sched, nxt, us, resolutions in progressed:
                ext = steps + [TraceStep(state_digest(state), us, resolutions, sched)]
                stack.append((nxt, states + [nxt], ext))
    except _Truncated:
        return runs, True
    return runs, False


# ---------------------------------------------------------------------------
# Observation


def observe(trace_or_run: Union[Trace, Run], spec: RefinementSpec, side: str) -> ObservationSeq:
    """Project a run onto the side's observation terms, stutter-compressed."""
    if side == "abstract":
        terms = [abs_t for _, abs_t, _ in spec.observations]
    elif side == "refined":
        terms = [ref_t for _, _, ref_t in spec.observations]
    else:
        raise ValueError(f"side must be abstract or refined, not {side!r}")
    if isinstance(trace_or_run, Trace):
        states = trace_or_run.states
        marker = {"stalled": "stalled", "budget": "budget",
                  "inconsistent": "inconsistent",
                  "violation": "budget"}[trace_or_run.outcome]
    else:
        states = trace_or_run.states
        marker = trace_or_run.marker
    seq: List[Tuple[Value, ...]] = []
    for s in states:
        obs = tuple(eval_term(t, s) for t in terms)
        if not seq or seq[-1] != obs:
            seq.append(obs)
    return ObservationSeq(tuple(seq), marker)


def _is_prefix(shorter: tuple, longer: tuple) -> bool:
    return len(shorter) <= len(longer) and longer[: len(shorter)] == shorter


def _common_prefix_len(a: tuple, b: tuple) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


# ---------------------------------------------------------------------------
# The check


def check_refinement(spec: RefinementSpec) -> RefinementVerdict:
    a_steps, r_steps, budget = spec.bounds
    a_start = override_state(spec.abstract, initial_state(spec.abstract),
                             spec.abstract_init)
    r_start = override_state(spec.refined, initial_state(spec.refined),
                             spec.refined_init)
    abs_runs, abs_trunc = enumerate_runs(spec.abstract, a_steps, budget, a_start)
    ref_runs, ref_trunc = enumerate_runs(spec.refined, r_steps, budget, r_start)
    abstract_seqs = [observe(r, spec, "abstract") for r in abs_runs]
    stats = RefineStats(len(abs_runs), len(ref_runs), abs_trunc, ref_trunc)

    first_fail: Optional[Tuple[Run, ObservationSeq]] = None
    undecided = False
    for r in ref_runs:
        o = observe(r, spec, "refined")
        if o.marker == "budget":
            matched = any(_is_prefix(o.tuples, a.tuples) for a in abstract_seqs)
        else:
            matched = any(a.marker == o.marker and a.tuples == o.tuples
                          for a in abstract_seqs)
        if matched:
            continue
        # a truncated abstract run whose observations are a prefix of this
        # one could still extend to a match at larger abstract bounds
        possible = abs_trunc or any(
            a.marker == "budget" and _is_prefix(a.tuples, o.tuples)
            for a in abstract_seqs
        )
        if possible:
            undecided = True
        elif first_fail is None:
            first_fail = (r, o)

    if first_fail is not None:
        r, o = first_fail
        nearest = sorted(abstract_seqs,
                         key=lambda a: -_common_prefix_len(a.tuples, o.tuples))[:3]
        return Fail(stats, r.to_trace(spec.refined.name), o, nearest)
    if undecided or ref_trunc:
        return BudgetExhausted(stats)
    return Pass(stats)


# ---------------------------------------------------------------------------
# Manifests and chains


@dataclass
class RefinementStep:
    name: str
    spec: RefinementSpec
    abstract_path: Path
    refined_path: Path


def parse_manifest(text: str, base_dir: Path) -> List[RefinementStep]:
    """Parse a chain manifest; see the documented format in the README."""
    steps: List[RefinementStep] = []
    current: Optional[dict] = None

    def finish() -> None:
        if current is None:
            return
        for required in ("abstract", "refined"):
            if required not in current:
                raise ManifestError(
                    f"step {current['name']!r} is missing a {required} machine")
        if not current["observe"]:
            raise ManifestError(f"step {current['name']!r} declares no observations")
        abstract = parse_machine(current["abstract"][1])
        refined = parse_machine(current["refined"][1])
        observations = []
        for label, abs_text, ref_text in current["observe"]:
            observations.append((label,
                                 parse_term(abs_text, abstract.sig),
                                 parse_term(ref_text, refined.sig)))
        a_init = tuple(_parse_override(t, abstract) for t in current["init"]["abstract"])
        r_init = tuple(_parse_override(t, refined) for t in current["init"]["refined"])
        steps.append(RefinementStep(
            current["name"],
            RefinementSpec(abstract, refined, tuple(observations),
                           current["bounds"], a_init, r_init),
            current["abstract"][0], current["refined"][0]))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        words = line.split(None, 1)
        head, rest = words[0], (words[1].strip() if len(words) > 1 else "")
        if head == "step":
            finish()
            current = {"name": rest, "observe": [], "bounds": (3, 3, 10_000),
                       "init": {"abstract": [], "refined": []}}
            continue
        if current is None:
            raise ManifestError(f"line {lineno}: {head!r} before any 'step'")
        if head in ("abstract", "refined"):
            path = (base_dir / rest).resolve()
            try:
                current[head] = (path, path.read_text(encoding="utf-8"))
            except OSError as e:
                raise ManifestError(f"line {lineno}: cannot read {path}: {e}") from None
        elif head == "observe":
            if ":" not in rest or "~" not in rest:
                raise ManifestError(
                    f"line {lineno}: expected 'observe <label> : <abstract> ~ <refined>'")
            label, terms = rest.split(":", 1)
            abs_text, ref_text = terms.split("~", 1)
            current["observe"].append((label.strip(), abs_text.strip(), ref_text.strip()))
        elif head == "bounds":
            parts = rest.split()
            if len(parts) != 3:
                raise ManifestError(f"line {lineno}: bounds needs three integers")
            try:
                current["bounds"] = (int(parts[0]), int(parts[1]), int(parts[2]))
            except ValueError:
                raise ManifestError(f"line {lineno}: bounds needs three integers") from None
        elif head == "init_link":
            side, _, assignment = rest.partition(" ")
            if side not in ("abstract", "refined") or ":=" not in assignment:
                raise ManifestError(
                    f"line {lineno}: expected 'init_link <side> <loc> := <term>'")
            current["init"][side].append(assignment)
        else:
            raise ManifestError(f"line {lineno}: unknown directive {head!r}")
    finish()
    return steps


def _parse_override(text: str, machine: MachineDef) -> Tuple[App, Term]:
    lhs_text, rhs_text = text.split(":=", 1)
    lhs = parse_term(lhs_text.strip(), machine.sig)
    if not isinstance(lhs, App):
        raise ManifestError(f"override target {lhs_text.strip()!r} is not a location")
    return lhs, parse_term(rhs_text.strip(), machine.sig)


def check_chain(manifest_path: Union[str, Path]) -> List[Tuple[str, RefinementVerdict]]:
    """Check every step of a refinement chain manifest, in order."""
    path = Path(manifest_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from None
    steps = parse_manifest(text, path.parent)
    return [(s.name, check_refinement(s.spec)) for s in steps]
