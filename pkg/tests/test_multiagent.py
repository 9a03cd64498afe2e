import itertools

from conftest import load_model
from asmweave.interp import Inconsistent, Progressed, Resolver, initial_state
from asmweave.multiagent import (
    Interleaving,
    ScriptedOrder,
    Synchronous,
    explore,
    ma_run,
    ma_step,
)
from asmweave.parser import parse_machine, parse_term
from asmweave.state import Location, controlled_digest
from asmweave.values import FALSE, TRUE, IntV, SymV

RING = load_model("ring3.asm")
RING_MUTANT = load_model("ring3_mutant.asm")
SWAP = load_model("swap.asm")

SAFETY = ("detected implies (active('m0) = false and active('m1) = false "
          "and active('m2) = false)")

TWO_AGENTS = parse_machine("""
machine Two
  controlled x, y
  rule A = x := 1
  rule B = y := 2
  main A
  agent a1 runs A
  agent a2 runs B
""")

SELF_CLASH = parse_machine("""
machine Clash
  controlled x
  rule C = x := self
  main C
  agent a1 runs C
  agent a2 runs C
""")


def test_synchronous_disjoint_union():
    out = ma_step(TWO_AGENTS, initial_state(TWO_AGENTS), Synchronous(),
                  Resolver.seeded(0))
    assert isinstance(out.result, Progressed)
    s = out.result.next_state
    assert s.content[Location("x")] == IntV(1)
    assert s.content[Location("y")] == IntV(2)
    assert out.scheduled == ("a1", "a2")


def test_synchronous_cross_agent_clash_with_provenance():
    out = ma_step(SELF_CLASH, initial_state(SELF_CLASH), Synchronous(),
                  Resolver.seeded(0))
    assert isinstance(out.result, Inconsistent)
    (loc, vals), = out.result.clashes
    assert loc == Location("x")
    assert vals == {SymV("a1"), SymV("a2")}
    writers = out.provenance[loc]
    assert sorted(aid for aid, _ in writers) == ["a1", "a2"]


def test_interleaving_fires_one_agent():
    for seed in range(8):
        out = ma_step(SELF_CLASH, initial_state(SELF_CLASH), Interleaving(),
                      Resolver.seeded(seed))
        assert isinstance(out.result, Progressed)
        (aid,) = out.scheduled
        assert out.result.next_state.content[Location("x")] == SymV(aid)


def test_synchronous_agent_order_invariance():
    agents = tuple(TWO_AGENTS.agents)
    results = []
    for perm in itertools.permutations(agents):
        out = ma_step(TWO_AGENTS, initial_state(TWO_AGENTS), Synchronous(),
                      Resolver.seeded(1), agents=perm)
        results.append(out.result.fired)
    assert all(r == results[0] for r in results)


def test_zero_agents_stall_immediately():
    t = ma_run(SWAP, Synchronous(), 5, agents=())
    assert t.outcome == "stalled" and t.steps == []


def test_interleaving_replay_is_identical():
    t = ma_run(SELF_CLASH, Interleaving(), 4, Resolver.seeded(5))
    order = tuple(st.schedule[0] for st in t.steps)
    t2 = ma_run(SELF_CLASH, ScriptedOrder(order), 4,
                Resolver.scripted(t.as_script()))
    assert t.digests() == t2.digests()


def test_scripted_order_runs_ring_to_detection():
    from asmweave.interp import ResEntry

    order = ("m1", "m1", "m0", "m2", "m2", "m1", "m0", "m2", "m1", "m0")
    script = [[] for _ in order]
    script[0] = [ResEntry("choose", "Step.choose1", "", SymV("send")),
                 ResEntry("choose", "Step.choose2", "", SymV("m2"))]
    script[1] = [ResEntry("choose", "Step.choose1", "", SymV("stop"))]
    script[3] = [ResEntry("choose", "Step.choose1", "", SymV("stop"))]
    t = ma_run(RING, ScriptedOrder(order), len(order),
               Resolver.scripted(script, fallback_seed=0))
    final = t.final_state
    assert final.content[Location("detected")] == TRUE
    for aid in ("m0", "m1", "m2"):
        assert final.content[Location("active", (SymV(aid),))] == FALSE


def test_scripted_order_beyond_script_stalls():
    t = ma_run(TWO_AGENTS, ScriptedOrder(("a1",)), 5, Resolver.seeded(0))
    assert t.outcome == "stalled"
    assert len(t.steps) == 1


# ---------------------------------------------------------------------------
# Exploration


def test_explore_swap_two_states():
    rep = explore(SWAP, 2)
    assert rep.states_visited == 2


def test_explore_assertion_holds_on_swap():
    rep = explore(SWAP, 2, assertion=parse_term("a = 1 or a = 2", SWAP.sig))
    assert rep.counterexample is None


def test_explore_finds_shortest_counterexample():
    rep = explore(SWAP, 4, assertion=parse_term("a = 1", SWAP.sig))
    assert rep.counterexample is not None
    assert len(rep.counterexample.steps) == 1


def test_explore_determinism():
    a = explore(RING, 6, assertion=parse_term(SAFETY, RING.sig))
    b = explore(RING, 6, assertion=parse_term(SAFETY, RING.sig))
    assert a.states_visited == b.states_visited
    assert (a.counterexample is None) == (b.counterexample is None)


def test_explore_ring_safety_and_mutant_violation():
    ok = explore(RING, 12, assertion=parse_term(SAFETY, RING.sig))
    assert ok.counterexample is None
    bad = explore(RING_MUTANT, 12, assertion=parse_term(SAFETY, RING_MUTANT.sig))
    assert bad.counterexample is not None
    # the violating state has detection declared while some agent is active
    final = bad.violating_state
    assert final.content[Location("detected")] == TRUE
    assert any(final.content.get(Location("active", (SymV(a),))) == TRUE
               for a in ("m0", "m1", "m2"))


def test_explore_full_reachability_of_ring_is_safe():
    rep = explore(RING, 100, assertion=parse_term(SAFETY, RING.sig))
    assert rep.complete, "state space should reach a fixpoint"
    assert rep.counterexample is None


def test_ring_of_five_safe_within_bounded_depth():
    ring5 = load_model("ring5.asm")
    safety5 = ("detected implies (" + " and ".join(
        f"active('m{i}) = false" for i in range(5)) + ")")
    rep = explore(ring5, 5, assertion=parse_term(safety5, ring5.sig))
    assert rep.counterexample is None
    assert rep.states_visited > 100


def test_explore_subsumes_seeded_sampling():
    depth = 5
    rep = explore(RING, depth)
    for seed in range(10):
        t = ma_run(RING, Interleaving(), depth, Resolver.seeded(seed))
        for s in t.states:
            assert controlled_digest(s) in rep.visited_digests


def test_explore_counterexample_replays():
    rep = explore(RING_MUTANT, 12,
                  assertion=parse_term(SAFETY, RING_MUTANT.sig))
    trace = rep.counterexample
    order = tuple(st.schedule[0] for st in trace.steps)
    replay = ma_run(RING_MUTANT, ScriptedOrder(order), len(order),
                    Resolver.scripted(trace.as_script()))
    assert controlled_digest(replay.final_state) == controlled_digest(rep.violating_state)
