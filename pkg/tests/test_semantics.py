import numpy as np
import pytest

from qracp import quantum as q
from qracp import sampling as smp
from qracp.config import Limits
from qracp.semantics import (
    FWD, REV, Configuration, Label, Semantics, SemanticsError, build_lts, process_lts,
    roundtrip, skeleton_lts,
)
from qracp.term import (
    TICK, Atom, Encap, History, RecVar, Rename, parse_model, parse_term,
    print_term,
)


def steps(model, text, reversal="snapshot"):
    sem = Semantics(model, reversal)
    conf = sem.initial(parse_term(text))
    return [(str(lab), print_term(c.term)) for lab, c in sem.forward_steps(conf)]


def test_single_action(small_model):
    sem = Semantics(small_model)
    conf = sem.initial(Atom("a"))
    [(lab, nxt)] = sem.forward_steps(conf)
    assert lab == Label(FWD, "a", 1)
    assert nxt.term == History("a", 1)
    expected = q.apply(small_model.ops["a"], small_model.initial)
    assert q.trace_distance(nxt.state, expected) == 0.0


def test_choice_offers_both_branches(small_model):
    assert steps(small_model, "a + b") == [("a", "a[1] + b"), ("b", "a + b[1]")]


def test_deadlock_has_no_moves(small_model):
    assert steps(small_model, "delta") == []


def test_communication_shares_one_key(small_model):
    assert steps(small_model, "c <> d") == [("k", "c[1] <> d[1]")]
    assert ("k", "c[1] || d[1]") in steps(small_model, "c || d")


def test_undefined_communication_deadlocks(small_model):
    assert steps(small_model, "c <> c") == []


def test_encapsulation_blocks(small_model):
    assert steps(small_model, "encap({c}, c)") == []
    assert steps(small_model, "encap({c, d}, c || d)") == [("k", "encap({c, d}, c[1] || d[1])")]


def test_abstraction_and_renaming(small_model):
    assert steps(small_model, "abstract({a}, a)") == [("tau", "tick")]
    assert steps(small_model, "rename({c -> d}, c)") == [("d", "rename({c -> d}, c[1])")]


def test_sequence_reversal_is_gated(small_model):
    sem = Semantics(small_model)
    c0 = sem.initial(parse_term("a . b"))
    c1 = sem.forward_steps(c0)[0][1]
    c2 = sem.forward_steps(c1)[0][1]
    assert [str(lab) for lab, _ in sem.reverse_steps(c2)] == ["b[2]~rev"]
    [(lab, back)] = sem.reverse_steps(c1)
    assert lab == Label(REV, "a", 1)
    assert back.term == c0.term and back.state == c0.state


def test_lts_of_two_step_sequence(small_model):
    ts = process_lts(small_model, "P")
    assert (len(ts.nodes), len(ts.edges)) == (3, 4)
    assert sorted(str(lab) for _, lab, _ in ts.edges) == ["a", "a[1]~rev", "b", "b[2]~rev"]


def test_skeleton_of_linear_spec():
    m = parse_model("actions:\n  classical a, b\nspec S:\n  X = a . X + b\n")
    ts = skeleton_lts(RecVar("X", "S"), m)
    assert len(ts.nodes) == 2
    fwd = sorted((s, str(lab), d) for s, lab, d in ts.edges if lab.direction == FWD)
    assert fwd == [(0, "a", 0), (0, "b", 1)]
    assert len(ts.edges) == 4


def test_skeleton_rejects_unguarded():
    m = parse_model("actions:\n  classical a\nspec S:\n  X = tau . X\n")
    with pytest.raises(SemanticsError):
        skeleton_lts(RecVar("X", "S"), m)


def test_unbounded_recursion_truncates(small_model):
    ts = process_lts(small_model, "L", limits=Limits(max_nodes=1000, max_depth=4))
    assert ts.truncated
    assert "depth" in ts.reason


def test_node_budget_truncates(small_model):
    ts = process_lts(small_model, "L", limits=Limits(max_nodes=3, max_depth=64))
    assert ts.truncated and len(ts.nodes) == 3


def test_inverse_mode_matches_snapshot_for_unitaries(small_model):
    t = parse_term("a . b + b | a")
    for mode in ("snapshot", "inverse"):
        assert roundtrip(t, small_model, reversal=mode).ok


def test_zero_trace_branches_are_skipped():
    m = parse_model("actions:\n  quantum p1, x\nquantum:\n  dim 2\n"
                    "  p1 = [[(0,0),(0,0)],[(0,0),(1,0)]] branch\n  x = X\n")
    assert steps(m, "p1 + x") == [("x", "p1 + x[1]")]


def test_json_and_dot_exports(small_model):
    ts = process_lts(small_model, "P")
    data = ts.to_json()
    assert set(data) >= {"nodes", "edges", "root", "truncated"}
    assert {"id", "term", "state-fingerprint"} <= set(data["nodes"][0])
    assert {"src", "label", "dir", "key", "dst"} <= set(data["edges"][0])
    dot = ts.to_dot("P")
    assert 'label="a[1]~rev"' in dot and "style=dashed" in dot


def test_build_order_is_deterministic(small_model):
    t = parse_term("(a + b) || (c . d)")
    one = build_lts(Configuration.initial(t, small_model.initial), small_model)
    two = build_lts(Configuration.initial(t, small_model.initial), small_model)
    assert one.dumps() == two.dumps()


def test_random_terms_reverse_exactly():
    rng = smp.rng_for(1, "semantics-roundtrip")
    for _ in range(60):
        m = smp.random_model(rng)
        t = smp.random_term(rng, smp.ALL_ACTIONS, ("+", ".", "|", "<>", "||"), depth=3)
        if rng.random() < 0.3:
            t = Encap(smp.random_action_set(rng, smp.ALL_ACTIONS), t)
        elif rng.random() < 0.3:
            t = Rename(smp.alias_mapping(rng, smp.ALL_ACTIONS), t)
        report = roundtrip(t, m)
        assert report.ok, (print_term(t), report.failures[:1])


def test_hidden_spent_step_is_irreversible(small_model):
    sem = Semantics(small_model)
    [(lab, done)] = sem.forward_steps(sem.initial(parse_term("abstract({a}, a)")))
    assert done.term == TICK
    assert sem.reverse_steps(done) == []


def test_recursion_unfolds_at_the_root():
    m = parse_model("actions:\n  classical a\nspec S:\n  X = a . X\n")
    ts = build_lts(Configuration.initial(m.recursion_rhs(RecVar("X", "S")), m.initial), m,
                   Limits(max_nodes=50, max_depth=3))
    assert ts.truncated
    assert print_term(ts.term_of(0)) == "a . X@S"
    assert np.isclose(ts.state_of(0).weight, 1.0)
