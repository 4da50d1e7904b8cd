import pytest
from hypothesis import given, settings, strategies as st

from qracp.term import (
    CLASSICAL, DELTA_T, TAU_T, TICK, Abstract, Atom, Choice, CommMerge, Encap, History, Model,
    Parallel, ParseError, RecVar, RecursiveSpec, Rename, Seq, StaticPar, check_guarded_linear,
    gamma, is_history_complete, linear_form, occurs, parse_model, parse_term, print_model,
    print_term, tokenize,
)

a, b, c = Atom("a"), Atom("b"), Atom("c")


def model_with(body, extra="quantum a, b\n  classical c"):
    return parse_model(f"actions:\n  {extra}\nquantum:\n  dim 2\n  a = X\n  b = H\n"
                       f"process:\n  {body}\n")


def test_precedence_of_sequence_over_choice():
    assert model_with("P = a . b + c").specs[""].rhs("P") == Choice(Seq(a, b), c)


def test_parallel_operator_parses():
    assert model_with("P = a || b").specs[""].rhs("P") == Parallel(a, b)


def test_all_binary_operators():
    t = parse_term("a | b <> c || a . b + c")
    assert t == Choice(Parallel(CommMerge(StaticPar(a, b), c), Seq(a, b)), c)


def test_undefined_symbol_reported_with_position():
    with pytest.raises(ParseError) as err:
        model_with("P = delta . x")
    assert err.value.kind == "undefined symbol"
    assert (err.value.line, err.value.column) == (9, 15)


def test_syntax_error_position():
    with pytest.raises(ParseError) as err:
        model_with("P = a + ")
    assert err.value.line == 9


def test_reserved_words_cannot_be_declared():
    with pytest.raises(ParseError):
        parse_model("actions:\n  classical tau\n")


def test_gamma_must_use_classical_actions():
    with pytest.raises(ParseError) as err:
        parse_model("actions:\n  quantum a\n  classical c\ngamma:\n  a, c -> c\n"
                    "quantum:\n  dim 2\n  a = X\n")
    assert err.value.kind == "gamma"


def test_quantum_symbol_needs_binding():
    with pytest.raises(ParseError):
        parse_model("actions:\n  quantum a\n")


def test_duplicate_variables_rejected():
    with pytest.raises(ParseError):
        model_with("P = a\n  P = b")


def test_printing_examples():
    assert print_term(Choice(a, b)) == "a + b"
    assert print_term(History("a", 1)) == "a[1]"
    assert print_term(Encap(frozenset({a}), a)) == "encap({a}, a)"
    assert print_term(Seq(Choice(a, b), c)) == "(a + b) . c"
    assert print_term(Choice(a, Choice(b, c))) == "a + (b + c)"


def test_occurs():
    assert occurs("a", Seq(a, b))
    assert not occurs("a", Choice(b, c))
    assert occurs(History("a", 1), Choice(History("a", 1), b))
    assert not occurs("a", Choice(History("a", 1), b))


def test_occurs_sees_through_renaming():
    t = Rename((("a", "r_a"),), Seq(a, b))
    assert occurs("r_a", t)
    assert occurs("a", t)
    assert not occurs("r_b", t)


def test_occurs_does_not_enter_recursion():
    assert not occurs("a", RecVar("X", "S"))


def test_history_completion():
    assert is_history_complete(History("a", 1))
    assert not is_history_complete(Seq(History("a", 1), b))
    assert is_history_complete(Choice(History("a", 1), History("b", 1)))
    assert is_history_complete(Choice(History("a", 1), DELTA_T))
    assert not is_history_complete(DELTA_T)
    assert is_history_complete(TICK)


def test_linearity_and_guardedness():
    spec = RecursiveSpec("S", (("X", parse_term("a . X + b", ["X"], "S")),))
    r = check_guarded_linear(spec)
    assert r.linear and r.guarded
    spec = RecursiveSpec("S", (("X", parse_term("tau . X", ["X"], "S")),))
    r = check_guarded_linear(spec)
    assert r.linear and not r.guarded
    spec = RecursiveSpec("S", (("X", parse_term("(a . b) . X", ["X"], "S")),))
    assert not check_guarded_linear(spec).linear


def test_linear_form_reads_summands():
    t = parse_term("a . X + b + delta", ["X"], "S")
    assert linear_form(t) == [("a", "X"), ("b", None)]
    with pytest.raises(ValueError):
        linear_form(parse_term("a . b"))


def test_gamma_lookup_is_symmetric_and_defaults_to_deadlock():
    m = Model()
    for s in ("send", "recv", "c"):
        m.declare(s, CLASSICAL)
    m.add_gamma("send", "recv", "c")
    assert gamma(m, "send", "recv") == "c"
    assert gamma(m, "recv", "send") == "c"
    assert gamma(m, "send", "send") == "delta"
    with pytest.raises(ValueError):
        gamma(m, "delta", "send")


def test_data_indexed_symbols_are_single_atoms():
    t = parse_term("receive_A(d1) . send_B(o1)")
    assert t == Seq(Atom("receive_A(d1)"), Atom("send_B(o1)"))


def test_model_print_parse_roundtrip(small_model):
    again = parse_model(print_model(small_model))
    assert print_model(again) == print_model(small_model)
    assert again.specs[""].equations == small_model.specs[""].equations


def test_tokenizer_tracks_columns():
    toks = [t for t in tokenize("a +\n  b") if t.kind not in ("nl", "eof")]
    assert [(t.text, t.line, t.col) for t in toks] == [("a", 1, 1), ("+", 1, 3), ("b", 2, 3)]


# property: printing then parsing gives the same tree ---------------------

names = st.sampled_from(["a", "b", "c", "send_P(B_b)"])
leaves = st.one_of(
    names.map(Atom),
    st.builds(History, names, st.integers(1, 5)),
    st.just(DELTA_T), st.just(TAU_T), st.just(TICK),
)
action_sets = st.frozensets(names.map(Atom), max_size=3)
mappings = st.lists(st.tuples(names, st.sampled_from(["r_a", "r_b"])), max_size=2,
                    unique_by=lambda p: p[0]).map(tuple)


def _extend(children):
    binary = st.sampled_from([Choice, Seq, StaticPar, CommMerge, Parallel])
    return st.one_of(
        st.builds(lambda op, l, r: op(l, r), binary, children, children),
        st.builds(Encap, action_sets, children),
        st.builds(Abstract, action_sets, children),
        st.builds(Rename, mappings, children),
    )


terms = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(terms)
def test_print_parse_roundtrip(t):
    assert parse_term(print_term(t)) == t
