"""Rule extraction, evaluation fidelity, simplification, reports, round trips."""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from rulenet import (
    AND,
    CNF,
    DNF,
    OR,
    Clause,
    Literal,
    Rule,
    RuleError,
    RuleSet,
    extract_rules,
    load_ruleset,
    predict_logits,
    predict_with_rules,
    render,
    rule_expression,
    rule_length,
    save_ruleset,
    simplify,
    truth_table_equivalent,
)
from rulenet.binarize import identity_binarizer
from rulenet.network import LinearHead, LogicLayer, NegationGates, RuleNetwork, binary_view
from rulenet.rules import evaluate_rule, rule_values, ruleset_from_dict, ruleset_to_dict

from conftest import GUARD_RULE, random_bits
from test_network import all_bits, hand_model, randomized_model


def ident3():
    return identity_binarizer(("x_1", "x_2", "x_3"))


def guard_ruleset(bias=(0.0, 0.0)):
    """A rule set whose argmax decision is exactly (x_1 ∨ x_2) ∧ ¬x_3."""
    rule = Rule(
        form=CNF,
        clauses=(
            Clause(OR, (Literal(0, False), Literal(1, False))),
            Clause(OR, (Literal(2, True),)),
        ),
        scores=np.array([-1.0, 1.0]),
        id=0,
    )
    return RuleSet(rules=(rule,), bias=np.asarray(bias, dtype=np.float64), binarizer=ident3())


# -------------------------------------------------------------- validation --


def test_structure_validation():
    with pytest.raises(RuleError, match="no literals"):
        Clause(OR, ())
    with pytest.raises(RuleError, match="unknown clause op"):
        Clause("xor", (Literal(0, False),))
    with pytest.raises(RuleError, match="cnf rule contains a and-clause"):
        Rule(CNF, (Clause(AND, (Literal(0, False),)),), np.zeros(1), 0)
    with pytest.raises(RuleError, match="no clauses"):
        Rule(DNF, (), np.zeros(1), 0)
    rule = guard_ruleset().rules[0]
    with pytest.raises(RuleError, match="not unique"):
        RuleSet((rule, rule), np.zeros(2), ident3())


def test_rule_length_counts_all_literals():
    assert rule_length(guard_ruleset().rules[0]) == 3


# -------------------------------------------------------------- extraction --


def test_extraction_reads_the_hand_model_structure():
    model = hand_model()
    rs = extract_rules(model)
    assert len(rs.rules) == 1  # second neuron is dead and folds into the bias
    rule = rs.rules[0]
    assert rule.id == 0
    assert rule.form == DNF  # OR-gate on top
    assert len(rule.clauses) == 1
    clause = rule.clauses[0]
    assert clause.op == AND
    assert [(l.bit_index, l.negated) for l in clause.literals] == [(0, False), (2, True)]
    assert np.array_equal(rule.scores, model.head.scores[0])
    assert np.array_equal(rs.bias, binary_view(model).base)


def test_rule_values_match_hand_semantics():
    rule = guard_ruleset().rules[0]
    rows = all_bits(3)
    got = rule_values(rule, rows)
    want = [1.0 if (r[0] > 0 or r[1] > 0) and r[2] < 0 else -1.0 for r in rows]
    assert got.tolist() == want
    for row, value in zip(rows, want):
        assert evaluate_rule(rule, row) == value


def test_prediction_replays_the_network_arithmetic_exactly():
    rng = np.random.default_rng(17)
    for _ in range(25):
        model = randomized_model(rng)
        rs = extract_rules(model)
        bits = random_bits(rng, 200, model.d)
        assert np.array_equal(predict_with_rules(rs, bits), predict_logits(model, bits))


def test_prediction_single_row_matches_batch():
    rng = np.random.default_rng(5)
    model = randomized_model(rng, d=5, k1=4, k2=4, y=3)
    rs = extract_rules(model)
    bits = random_bits(rng, 10, 5)
    batch = predict_with_rules(rs, bits)
    for i in range(10):
        assert np.array_equal(predict_with_rules(rs, bits[i]), batch[i])


# ----------------------------------------------------------- simplification --


def test_simplify_dedupes_literals_keeping_first_occurrence():
    rule = Rule(
        DNF,
        (Clause(AND, (Literal(1, False), Literal(0, True), Literal(1, False))),),
        np.array([1.0]),
        0,
    )
    rs = RuleSet((rule,), np.zeros(1), ident3())
    out = simplify(rs).rules[0]
    assert [(l.bit_index, l.negated) for l in out.clauses[0].literals] == [(1, False), (0, True)]


def test_simplify_absorbs_supersets_and_equal_duplicates():
    rule = Rule(
        CNF,
        (
            Clause(OR, (Literal(0, False), Literal(1, False))),
            Clause(OR, (Literal(0, False),)),
            Clause(OR, (Literal(1, False), Literal(0, False))),
            Clause(OR, (Literal(0, False), Literal(1, False))),
        ),
        np.array([1.0]),
        0,
    )
    rs = RuleSet((rule,), np.zeros(1), ident3())
    out = simplify(rs).rules[0]
    # {0} absorbs both {0,1} clauses; the literal-set duplicate keeps its first copy
    assert [
        tuple((l.bit_index, l.negated) for l in c.literals) for c in out.clauses
    ] == [((0, False),)]


def test_simplify_merges_identical_rules_by_summing_scores():
    base = guard_ruleset().rules[0]
    twin = Rule(base.form, base.clauses, np.array([0.25, 0.5]), id=7)
    other = Rule(DNF, (Clause(AND, (Literal(1, True),)),), np.array([1.0, 2.0]), id=3)
    rs = RuleSet((base, twin, other), np.zeros(2), ident3())
    out = simplify(rs)
    assert [rule.id for rule in out.rules] == [0, 3]
    assert np.array_equal(out.rules[0].scores, [-0.75, 1.5])
    assert np.array_equal(out.rules[1].scores, [1.0, 2.0])


def test_simplify_preserves_the_decision_function():
    rng = np.random.default_rng(23)
    for _ in range(20):
        model = randomized_model(rng)
        rs = extract_rules(model)
        out = simplify(rs)
        bits = random_bits(rng, 100, model.d)
        a = predict_with_rules(rs, bits)
        b = predict_with_rules(out, bits)
        assert np.allclose(a, b, rtol=0.0, atol=1e-12)
        assert np.array_equal(a.argmax(axis=1), b.argmax(axis=1))


# -------------------------------------------------------------- equivalence --


def test_truth_table_equivalence_detects_match_and_mismatch():
    assert truth_table_equivalent(guard_ruleset(), GUARD_RULE, 3) is True
    # a large bias drowns the rule: constant class 0 is not equivalent
    assert truth_table_equivalent(guard_ruleset(bias=(10.0, 0.0)), GUARD_RULE, 3) is False


def test_truth_table_equivalence_validation():
    with pytest.raises(RuleError, match="20 variables"):
        truth_table_equivalent(guard_ruleset(), GUARD_RULE, 21)
    with pytest.raises(RuleError, match="over 3 bits"):
        truth_table_equivalent(guard_ruleset(), GUARD_RULE, 4)


# ------------------------------------------------------------------ reports --


def test_rule_expression_layout():
    rs = guard_ruleset()
    assert rule_expression(rs.rules[0], rs.binarizer) == "(x_1 ∨ x_2) ∧ ¬x_3"
    flat = Rule(
        DNF,
        (Clause(AND, (Literal(0, False), Literal(1, True), Literal(2, False))),),
        np.array([1.0]),
        0,
    )
    assert rule_expression(flat, ident3()) == "x_1 ∧ ¬x_2 ∧ x_3"
    pair = Rule(
        DNF,
        (Clause(AND, (Literal(0, False), Literal(1, True))), Clause(AND, (Literal(2, False),))),
        np.array([1.0]),
        0,
    )
    assert rule_expression(pair, ident3()) == "(x_1 ∧ ¬x_2) ∨ x_3"


def test_render_table_layout_sorting_and_pruning():
    loud = guard_ruleset().rules[0]  # max |score| = 1.0
    quiet = Rule(DNF, (Clause(AND, (Literal(0, False),)),), np.array([5e-4, 0.0]), id=1)
    rs = RuleSet((quiet, loud), bias=np.array([0.1, -0.1]), binarizer=ident3())
    report = render(rs)
    assert report.splitlines() == [
        "# 1 rules shown of 2 extracted (pruned at tau=0.001)",
        "Rule | Support_0 | Support_1 | Coverage",
        "(x_1 ∨ x_2) ∧ ¬x_3 | -1.0000 | 1.0000 | n/a",
        "<bias> | 0.1000 | -0.1000 | 1.0000",
    ]
    # with bits provided, coverage = fraction of rows on which the rule fires
    report = render(rs, class_names=("no", "yes"), bits=all_bits(3), prune_tau=1e-5)
    lines = report.splitlines()
    assert lines[1] == "Rule | Support_no | Support_yes | Coverage"
    assert lines[2] == "(x_1 ∨ x_2) ∧ ¬x_3 | -1.0000 | 1.0000 | 0.3750"
    assert lines[3] == "x_1 | 0.0005 | 0.0000 | 0.5000"


# ------------------------------------------------------------- round trips ---


def test_ruleset_file_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    model = randomized_model(rng)
    rs = extract_rules(model)
    path = tmp_path / "rules.json"
    save_ruleset(rs, path)
    back = load_ruleset(path)
    assert np.array_equal(back.bias, rs.bias)
    assert len(back.rules) == len(rs.rules)
    for a, b in zip(back.rules, rs.rules):
        assert (a.id, a.form, a.clauses) == (b.id, b.form, b.clauses)
        assert np.array_equal(a.scores, b.scores)
    bits = random_bits(rng, 64, model.d)
    assert np.array_equal(predict_with_rules(back, bits), predict_with_rules(rs, bits))


def test_ruleset_from_dict_names_missing_fields():
    payload = ruleset_to_dict(guard_ruleset())
    del payload["bias"]
    with pytest.raises(RuleError, match="missing field 'bias'"):
        ruleset_from_dict(payload)
    payload = ruleset_to_dict(guard_ruleset())
    del payload["rules"][0]["scores"]
    with pytest.raises(RuleError, match="rule record missing field 'scores'"):
        ruleset_from_dict(payload)
