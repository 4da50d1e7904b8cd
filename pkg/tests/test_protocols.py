import pytest

from qracp import equiv as E
from qracp import protocols as P
from qracp.rewrite import linear_skeleton
from qracp.term import QUANTUM, check_guarded_linear, linear_form

CHAIN = ["receive_A", "Rand", "Rand", "Set", "H", "c_Q", "Rand", "M", "c_P", "c_P", "cmp",
         "cmp", "send_B"]


def test_model_shape():
    m = P.build_bb84()
    assert len(m.specs[P.SPEC].equations) == 16
    assert len(m.gamma) == 3
    blocked, hidden, _, _ = P.system_sets(m)
    assert not any(m.kinds[s] == QUANTUM for s in blocked)
    assert {"c_Q(q)", "c_P(B_b)", "c_P(B_a)", "cmp(K_ab)"} <= hidden
    assert set(P.QUANTUM_OPS) <= hidden


def test_data_sets_expand_to_sums():
    m = P.build_bb84(2, 2)
    assert [a for a, _ in linear_form(m.specs[P.SPEC].rhs("A"))] == ["receive_A(d1)",
                                                                      "receive_A(d2)"]
    assert [a for a, _ in linear_form(m.specs[P.SPEC].rhs("B6"))] == ["send_B(o1)", "send_B(o2)"]


@pytest.mark.parametrize("binding", P.BINDINGS)
def test_composition_matches_the_expected_chain(binding):
    comp = P.derive_composition(P.build_bb84(binding=binding))
    assert comp.spec.variables == [f"X{i}" for i in range(1, 14)]
    assert comp.chain() == CHAIN
    report = check_guarded_linear(comp.spec)
    assert report.linear and report.guarded
    assert not comp.deadlocks


def test_larger_data_sets_keep_thirteen_variables():
    comp = P.derive_composition(P.build_bb84(2, 2))
    assert len(comp.spec.variables) == 13
    assert len(linear_form(comp.spec.rhs("X1"))) == 2


def test_removed_communication_deadlocks_at_x9():
    m = P.build_bb84(omit=("c_P(B_b)",))
    comp = P.derive_composition(m)
    assert comp.deadlocks == ["X9"]
    v = P.verify_bb84(m)
    assert not v.related
    assert v.equivalence.counterexample


@pytest.mark.parametrize("binding", P.BINDINGS)
@pytest.mark.parametrize("sizes", [(1, 1), (2, 1)])
def test_joint_target_holds_for_one_output(binding, sizes):
    v = P.verify_bb84(P.build_bb84(*sizes, binding=binding))
    assert v.related
    assert v.variables == 13
    assert v.eliminations == 11


@pytest.mark.parametrize("sizes", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_factored_target_holds_for_all_sizes(sizes):
    for binding in P.BINDINGS:
        assert P.verify_bb84(P.build_bb84(*sizes, binding=binding), target="factored").related


def test_joint_target_commits_output_on_input():
    # a . (b + c) against a . b + a . c: the derived system keeps both outputs open
    v = P.verify_bb84(P.build_bb84(1, 2))
    assert not v.related
    assert v.equivalence.counterexample[0]["label"] == "receive_A(d1)"


def test_only_external_actions_survive_hiding():
    m = P.build_bb84(2, 2)
    comp = P.derive_composition(m)
    _, hidden, _, _ = P.system_sets(m)
    ts = linear_skeleton("X1", comp.spec, hidden)
    visible = {lab.symbol for _, lab, _ in ts.edges} - {"tau"}
    assert visible == set(P.inputs(2) + P.outputs(2))


def test_free_interleaving_breaks_the_loop():
    v = P.verify_bb84(P.build_bb84(), schedule="interleaving")
    assert v.variables > 13
    assert not v.related


def test_transcript_and_state_trace():
    v = P.verify_bb84(P.build_bb84())
    assert len(v.trace) == 14
    assert v.trace[0].startswith("tau_I(<X1|E>) = (receive_A(d1))")
    assert [s["action"] for s in v.state_trace] == [
        "Rand(B_a)", "Rand(K_a)", "Set(K_a)", "H(B_a)", "Rand(B_b)", "M(K_b)"]
    for s in v.state_trace:
        assert sum(s["diagonal"]) == pytest.approx(1.0)


def test_bindings_differ_in_state_only():
    one, two = (P.verify_bb84(P.build_bb84(binding=b)) for b in P.BINDINGS)
    assert one.chain == two.chain
    assert len(one.state_trace[0]["diagonal"]) != len(two.state_trace[0]["diagonal"])


def test_verdict_serialisation_is_stable():
    a = P.verify_bb84(P.build_bb84(2, 2), target="factored").dumps()
    b = P.verify_bb84(P.build_bb84(2, 2), target="factored").dumps()
    assert a == b


def test_targets_are_linear():
    for form in P.TARGETS:
        spec = P.target_spec(2, 2, form)
        r = check_guarded_linear(spec)
        assert r.linear and r.guarded
    with pytest.raises(ValueError):
        P.target_spec(1, 1, "other")


def test_checker_used_is_rooted():
    assert P.verify_bb84(P.build_bb84()).equivalence.flavor == E.ROOTED
