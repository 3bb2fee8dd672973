import warnings

import pytest

from pepagg.syntax import (CoopNode, GroupLeaf, ModelError, ModelWarning, PepaSyntaxError, RateExpr,
                           format_model, local_automaton, parse_model)

from conftest import MODEL1, corpus_paths


def test_model1_structure():
    m = parse_model(MODEL1)
    assert [g.label for g in m.groups] == ["Servers", "Clients"]
    assert isinstance(m.equation, CoopNode)
    assert m.equation.coop_set == {"req"}
    assert m.group("Servers").initial_counts == (("S_idle", 2),)
    assert m.size_hints == {"Servers": "small", "Clients": "large"}


def test_single_self_loop():
    m = parse_model("P = (a, 1.0).P; system = G{P[1]};")
    comp = local_automaton(m, "P")
    assert comp.states == ("P",)
    assert len(comp.transitions) == 1
    assert comp.transitions[0].source == comp.transitions[0].target == "P"


def test_bare_top_is_weight_one():
    m = parse_model("rates { r = 1.0; } A = (go, r).B; B = (req, T).A; "
                    "Q = (req, 2.0).Q; system = G{A[1]} <req> H{Q[1]};")
    (t,) = [t for t in m.components["A"].transitions if t.action == "req"]
    assert t.rate == RateExpr.top(1)
    assert t.rate.weight == 1


def test_local_automaton_servers():
    m = parse_model(MODEL1)
    comp = local_automaton(m, "S_idle")
    assert set(comp.states) == {"S_idle", "S_log", "S_broken"}
    assert sorted(t.action for t in comp.transitions) == ["brk", "fix", "log", "req"]


def test_local_automaton_modified_clients(cs22):
    comp = local_automaton(cs22, "C_think")
    assert comp.states == ("C_think", "C_req")
    rates = {t.action: t.rate for t in comp.transitions}
    assert not rates["think"].passive and rates["think"].value == 15.0
    assert rates["req"].passive


@pytest.mark.parametrize("text, where", [
    ("P = (a, 1.0).P; system = G{P[1]}", "1:33"),
    ("P = (a 1.0).P;\nsystem = G{P[1]};", "1:8"),
    ("P = (a, 1.0).P;\nsystem = G{P[1]} <a G{P[1]};", "2:21"),
])
def test_syntax_error_positions(text, where):
    with pytest.raises(PepaSyntaxError) as err:
        parse_model(text)
    assert str(err.value).startswith(where)


@pytest.mark.parametrize("text, fragment", [
    ("P = (a, r).P; system = G{P[1]};", "undefined rate constant"),
    ("P = (a, 1.0).Q; system = G{P[1]};", "undefined process constant"),
    ("P = (a, 1.0).P; system = G{P[1]} <a> G{P[1]};", "duplicate group label"),
    ("P = (a, 1.0).P; Q = (a, 1.0).Q; system = G{P[1] || Q[1]};", "not simple"),
    ("P = (a, T).P; system = G{P[1]};", "not in any enclosing cooperation set"),
    ("P = (a, 1.0).P + (a, T).R; R = (b, 1.0).P; Q = (a, 1.0).Q; system = G{P[1]} <a> H{Q[1]};",
     "both actively and passively"),
    ("P = (a, 1.0).P; system = E;", "undefined equation constant"),
])
def test_model_errors(text, fragment):
    with pytest.raises(ModelError, match=fragment):
        parse_model(text)


def test_equation_constants_and_empty_coop():
    m = parse_model("P = (a, 1.0).P; Q = (b, 2.0).Q; "
                    "Left = G{P[3]}; system = Left <> H{Q[1]};")
    assert m.equation.coop_set == frozenset()
    assert [g.label for g in m.groups] == ["G", "H"]


def test_parallel_is_left_associative():
    m = parse_model("P = (a, 1.0).P; system = A{P[1]} || B{P[1]} || C{P[1]};")
    assert isinstance(m.equation.left, CoopNode)
    assert isinstance(m.equation.right, GroupLeaf)


def test_identical_transitions_are_merged():
    m = parse_model("P = (a, 1.0).Q + (a, 2.0).Q; Q = (b, 1.0).P; system = G{P[1]};")
    (t,) = [t for t in m.components["P"].transitions if t.action == "a"]
    assert t.rate == RateExpr.active(3.0)


def test_inert_cooperation_warns():
    with pytest.warns(ModelWarning, match="neither side"):
        parse_model("P = (a, 1.0).P; system = G{P[1]} <z> H{P[1]};")


def test_unused_definition_warns():
    with pytest.warns(ModelWarning, match="never visited"):
        parse_model("P = (a, 1.0).P; Q = (b, 1.0).Q; system = G{P[1]};")


@pytest.mark.parametrize("path", corpus_paths(), ids=lambda p: p.name)
def test_round_trip(path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ModelWarning)
        m = parse_model(path.read_text())
        again = parse_model(format_model(m))
    assert again == m
    assert format_model(again) == format_model(m)


def test_with_rates_and_populations(cs):
    m = cs.with_rates({"r_t": 0.1}).with_populations({"Clients": 7})
    think = [t for t in m.components["C_think"].transitions if t.action == "think"][0]
    assert think.rate.value == 0.1
    assert m.group("Clients").size == 7
    with pytest.raises(ModelError):
        cs.with_rates({"nope": 1.0})
    with pytest.raises(ModelError):
        cs.with_populations({"Nobody": 3})


def test_rate_expr_mixing_rejected():
    with pytest.raises(ModelError):
        RateExpr.active(1.0) + RateExpr.top()
    assert str(RateExpr.top(3)) == "3*T"
