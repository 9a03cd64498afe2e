"""Concurrent runs of agent sets over one shared state.

Each agent loops its own rule with the implicit `self` input bound to its
id. Three schedulers are provided: synchronous (all agents step against
the same pre-state and their update sets are unioned), interleaving (one
schedulable agent per step, picked through the resolver), and a scripted
order for scenario-driven runs. `explore` walks every interleaving and
resolution breadth-first, deduplicating states, and reports the shortest
trace to a state violating a safety assertion.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import EvalError, GuardNotBoolean
from .interp import (
    DEFAULT_CALL_DEPTH,
    Env,
    Inconsistent,
    Progressed,
    ResEntry,
    Resolver,
    Stalled,
    StepResult,
    Trace,
    TraceStep,
    _Fork,
    _update_set,
    enumerate_steps,
    eval_term,
    initial_state,
    rule_body,
)
from .parser import MachineDef, Term
from .state import (
    Location,
    State,
    UpdateSet,
    conflicts,
    controlled_digest,
    fire,
    state_digest,
)
from .values import BoolV, SymV, Value, show_value

SELF_LOC = Location("self", ())


@dataclass(frozen=True)
class AgentSet:
    machine: MachineDef
    agents: Tuple[Tuple[str, str], ...]  # (agent id, rule name)

    @staticmethod
    def of(machine: MachineDef) -> "AgentSet":
        agents = machine.agents or (("main", machine.main),)
        return AgentSet(machine, agents)


@dataclass(frozen=True)
class Synchronous:
    pass


@dataclass(frozen=True)
class Interleaving:
    pass


@dataclass(frozen=True)
class ScriptedOrder:
    order: Tuple[str, ...]


Scheduler = object  # Synchronous | Interleaving | ScriptedOrder


@dataclass
class MaStepResult:
    result: StepResult
    scheduled: Tuple[str, ...]
    # per-agent writers of each clashing location, filled on inconsistency
    provenance: Dict[Location, List[Tuple[str, Value]]] = field(default_factory=dict)


def _agent_state(state: State, aid: str) -> State:
    return state.with_content({SELF_LOC: SymV(aid)})


def _agent_update_set(machine, state, aid, rule, resolver, max_call_depth) -> UpdateSet:
    resolver.set_agent(aid)
    try:
        return _update_set(rule_body(machine, rule), _agent_state(state, aid),
                           Env.empty(), resolver, machine, max_call_depth, 0)
    finally:
        resolver.set_agent("")


def _can_progress(machine, state, aid, rule, budget: int = 4096) -> bool:
    """True when some resolution of this agent's rule yields updates."""
    body = rule_body(machine, rule)
    eval_state = _agent_state(state, aid)
    pending: List[Dict[str, Value]] = [{}]
    seen = 0
    while pending and seen < budget:
        script = pending.pop()
        resolver = Resolver(probe=script)
        resolver.set_agent(aid)
        resolver.begin_step(eval_state)
        try:
            us = _update_set(body, eval_state, Env.empty(), resolver, machine,
                             DEFAULT_CALL_DEPTH, 0)
        except _Fork as f:
            for v in f.candidates:
                child = dict(script)
                child[f.key] = v
                pending.append(child)
            continue
        seen += 1
        if len(us) > 0:
            return True
    return bool(pending)  # budget ran out: assume schedulable


def ma_step(
    machine: MachineDef,
    state: State,
    scheduler: Scheduler,
    resolver: Resolver,
    step_index: int = 0,
    max_call_depth: int = DEFAULT_CALL_DEPTH,
    agents: Optional[Tuple[Tuple[str, str], ...]] = None,
) -> MaStepResult:
    if agents is None:
        agents = AgentSet.of(machine).agents
    injections = resolver.begin_step(state)
    eval_state = state.with_content(injections) if injections else state
    moved = eval_state.content != state.content

    if isinstance(scheduler, Synchronous):
        union = UpdateSet.empty()
        writers: Dict[Location, List[Tuple[str, Value]]] = {}
        for aid, rule in agents:
            us = _agent_update_set(machine, eval_state, aid, rule, resolver,
                                   max_call_depth)
            for u in us.updates:
                writers.setdefault(u.loc, []).append((aid, u.val))
            union = union.union(us)
        resolutions = resolver.end_step()
        clashes = conflicts(union)
        if clashes:
            prov = {loc: writers[loc] for loc, _ in clashes}
            return MaStepResult(Inconsistent(tuple(clashes), union, resolutions),
                                tuple(a for a, _ in agents), prov)
        if len(union) == 0 and not moved:
            return MaStepResult(Stalled(resolutions), ())
        return MaStepResult(Progressed(fire(eval_state, union), union, resolutions),
                            tuple(a for a, _ in agents))

    if isinstance(scheduler, ScriptedOrder):
        if step_index >= len(scheduler.order):
            return MaStepResult(Stalled(resolver.end_step()), ())
        aid = scheduler.order[step_index]
        by_id = dict(agents)
        if aid not in by_id:
            raise EvalError(f"scheduled agent {aid!r} does not exist")
        us = _agent_update_set(machine, eval_state, aid, by_id[aid], resolver,
                               max_call_depth)
        resolutions = resolver.end_step()
        clashes = conflicts(us)
        if clashes:
            return MaStepResult(Inconsistent(tuple(clashes), us, resolutions), (aid,))
        # an explicitly scripted agent may stutter with no updates
        return MaStepResult(Progressed(fire(eval_state, us), us, resolutions), (aid,))

    if isinstance(scheduler, Interleaving):
        schedulable = [
            (aid, rule) for aid, rule in agents
            if _can_progress(machine, eval_state, aid, rule)
        ]
        if not schedulable and not moved:
            return MaStepResult(Stalled(resolver.end_step()), ())
        if not schedulable:
            resolutions = resolver.end_step()
            return MaStepResult(Progressed(eval_state, UpdateSet.empty(), resolutions), ())
        aid = resolver.schedule([a for a, _ in schedulable])
        rule = dict(schedulable)[aid]
        us = _agent_update_set(machine, eval_state, aid, rule, resolver,
                               max_call_depth)
        resolutions = resolver.end_step()
        clashes = conflicts(us)
        if clashes:
            return MaStepResult(Inconsistent(tuple(clashes), us, resolutions), (aid,))
        return MaStepResult(Progressed(fire(eval_state, us), us, resolutions), (aid,))

    raise TypeError(f"unknown scheduler: {scheduler!r}")


def ma_run(
    machine: MachineDef,
    scheduler: Scheduler,
    max_steps: int,
    resolver: Optional[Resolver] = None,
    start: Optional[State] = None,
    max_call_depth: int = DEFAULT_CALL_DEPTH,
    agents: Optional[Tuple[Tuple[str, str], ...]] = None,
) -> Trace:
    resolver = resolver if resolver is not None else Resolver.seeded(0)
    state = start if start is not None else initial_state(machine)
    provenance = f"seed:{resolver.seed}" if resolver.script is None else "scripted"
    trace = Trace(machine.name, provenance, [], [state], "budget")
    for k in range(max_steps):
        out = ma_step(machine, state, scheduler, resolver, k, max_call_depth, agents)
        if isinstance(out.result, Stalled):
            trace.outcome = "stalled"
            trace.tail_resolutions = out.result.resolutions
            return trace
        if isinstance(out.result, Inconsistent):
            trace.steps.append(TraceStep(state_digest(state), out.result.attempted,
                                         out.result.resolutions, out.scheduled))
            trace.outcome = "inconsistent"
            trace.clashes = out.result.clashes
            return trace
        trace.steps.append(TraceStep(state_digest(state), out.result.fired,
                                     out.result.resolutions, out.scheduled))
        state = out.result.next_state
        trace.states.append(state)
    return trace


# ---------------------------------------------------------------------------
# Bounded exploration


@dataclass
class ExploreReport:
    states_visited: int
    counterexample: Optional[Trace]
    violating_state: Optional[State]
    inconsistent_branches: int
    complete: bool = False  # frontier emptied before the depth bound
    visited_digests: frozenset = frozenset()


def agent_successors(
    machine: MachineDef,
    state: State,
    aid: str,
    rule: str,
    budget: int,
) -> Tuple[List[Tuple[UpdateSet, Tuple[ResEntry, ...]]], List[Inconsistent]]:
    """Distinct non-empty update sets one agent can produce from a state,
    plus any inconsistent resolution branches."""
    out = []
    bad: List[Inconsistent] = []
    for res in enumerate_steps(_agent_state(state, aid), machine, rule, budget,
                               agent=aid):
        if isinstance(res, Progressed) and len(res.fired) > 0:
            out.append((res.fired, res.resolutions))
        elif isinstance(res, Inconsistent):
            bad.append(res)
    return out, bad


def _check_assertion(assertion: Term, state: State) -> bool:
    v = eval_term(assertion, state)
    if not isinstance(v, BoolV):
        raise GuardNotBoolean(f"assertion evaluated to {show_value(v)}")
    return v.b


def explore(
    machine: MachineDef,
    depth: int,
    branch_budget: int = 10_000,
    assertion: Optional[Term] = None,
    start: Optional[State] = None,
) -> ExploreReport:
    """Breadth-first search over all interleavings and resolutions.

    States are deduplicated by their controlled content. The first
    violation found is the shortest, by BFS order.
    """
    agents = AgentSet.of(machine).agents
    init = start if start is not None else initial_state(machine)

    # parallel arrays indexed by discovery order
    states: List[State] = [init]
    parents: List[int] = [-1]
    via: List[Optional[Tuple[str, UpdateSet, Tuple[ResEntry, ...]]]] = [None]
    index: Dict[str, int] = {controlled_digest(init): 0}
    inconsistent = 0

    def build_trace(idx: int) -> Trace:
        chain = []
        while parents[idx] != -1:
            chain.append(idx)
            idx = parents[idx]
        chain.reverse()
        trace = Trace(machine.name, "explore", [], [states[0]], "violation")
        cur = 0
        for node in chain:
            aid, us, resolutions = via[node]
            trace.steps.append(
                TraceStep(state_digest(states[cur]), us, resolutions, (aid,)))
            trace.states.append(states[node])
            cur = node
        return trace

    if assertion is not None and not _check_assertion(assertion, init):
        return ExploreReport(1, build_trace(0), init, 0)

    frontier = [0]
    for _ in range(depth):
        if not frontier:
            break
        next_frontier: List[int] = []
        for idx in frontier:
            state = states[idx]
            for aid, rule in agents:
                succs, bad = agent_successors(machine, state, aid, rule, branch_budget)
                inconsistent += len(bad)
                for us, resolutions in succs:
                    nxt = fire(state, us)
                    digest = controlled_digest(nxt)
                    if digest in index:
                        continue
                    states.append(nxt)
                    parents.append(idx)
                    via.append((aid, us, resolutions))
                    new_idx = len(states) - 1
                    index[digest] = new_idx
                    if assertion is not None and not _check_assertion(assertion, nxt):
                        return ExploreReport(len(states), build_trace(new_idx),
                                             nxt, inconsistent)
                    next_frontier.append(new_idx)
        frontier = next_frontier
    return ExploreReport(len(states), None, None, inconsistent,
                         complete=not frontier, visited_digests=frozenset(index))
