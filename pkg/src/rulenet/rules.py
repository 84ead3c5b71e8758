"""Exact rule extraction from the trained network.

Every live second-layer neuron maps to one CNF or DNF rule whose clauses are
the live first-layer neurons on its active edges; rule prediction replays the
network's head arithmetic literally, so extracted rules reproduce the forward
logits bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binarize import BinarizerModel, binarizer_from_dict, binarizer_to_dict, literal_description
from .data import CNF, DNF, GroundTruthRule
from .network import RuleNetwork, binary_view

AND = "and"
OR = "or"


class RuleError(ValueError):
    """Raised for malformed rule structures or serialized files."""


@dataclass(frozen=True)
class Literal:
    """One binarized feature bit, possibly negated."""

    bit_index: int
    negated: bool


@dataclass(frozen=True)
class Clause:
    """AND or OR over a non-empty set of literals."""

    op: str
    literals: tuple[Literal, ...]

    def __post_init__(self):
        if self.op not in (AND, OR):
            raise RuleError(f"unknown clause op {self.op!r}")
        if not self.literals:
            raise RuleError("clause has no literals")


@dataclass(eq=False)
class Rule:
    """A CNF (AND of OR-clauses) or DNF (OR of AND-clauses) formula with
    per-class contribution scores; id is the source second-layer neuron."""

    form: str
    clauses: tuple[Clause, ...]
    scores: np.ndarray
    id: int

    def __post_init__(self):
        if self.form not in (CNF, DNF):
            raise RuleError(f"unknown rule form {self.form!r}")
        if not self.clauses:
            raise RuleError("rule has no clauses")
        inner = OR if self.form == CNF else AND
        for clause in self.clauses:
            if clause.op != inner:
                raise RuleError(f"{self.form} rule contains a {clause.op}-clause")


@dataclass(eq=False)
class RuleSet:
    """Extracted rules plus the base logits of the rule-free part of the model."""

    rules: tuple[Rule, ...]
    bias: np.ndarray
    binarizer: BinarizerModel

    def __post_init__(self):
        ids = [rule.id for rule in self.rules]
        if len(set(ids)) != len(ids):
            raise RuleError("rule ids are not unique")


def rule_length(rule: Rule) -> int:
    """Total literal count across clauses."""
    return sum(len(clause.literals) for clause in rule.clauses)


# -------------------------------------------------------------- extraction --


def extract_rules(model: RuleNetwork) -> RuleSet:
    """Read the discrete network structure off the sign-binarized view.

    Dead second-layer neurons (and their constant contributions) are folded
    into the bias, matching the forward pass exactly.
    """
    view = binary_view(model)
    inner = {1.0: OR, -1.0: AND}
    rules = []
    for i in view.live2_idx:
        clause_op = inner[view.op2[i]]
        clauses = []
        for j in np.flatnonzero(view.act2[i]):
            literals = tuple(
                Literal(int(d), bool(view.neg_sign[j, d] < 0)) for d in np.flatnonzero(view.act1[j])
            )
            clauses.append(Clause(clause_op, literals))
        form = CNF if view.op2[i] > 0 else DNF
        rules.append(Rule(form=form, clauses=tuple(clauses), scores=model.head.scores[i].copy(), id=int(i)))
    return RuleSet(rules=tuple(rules), bias=view.base.copy(), binarizer=model.binarizer)


# -------------------------------------------------------------- evaluation --


def rule_values(rule: Rule, rows: np.ndarray) -> np.ndarray:
    """±1 truth values of the rule on an (n, D) matrix of ±1 bits."""
    clause_vals = []
    for clause in rule.clauses:
        lits = np.stack(
            [rows[:, lit.bit_index] * (-1.0 if lit.negated else 1.0) for lit in clause.literals]
        )
        clause_vals.append(lits.min(axis=0) if clause.op == AND else lits.max(axis=0))
    stacked = np.stack(clause_vals)
    return stacked.min(axis=0) if rule.form == CNF else stacked.max(axis=0)


def evaluate_rule(rule: Rule, bits: np.ndarray) -> float:
    """±1 truth value of the rule on one ±1 bit vector."""
    return float(rule_values(rule, np.asarray(bits, dtype=np.float64)[None, :])[0])


def predict_with_rules(rs: RuleSet, bits: np.ndarray) -> np.ndarray:
    """Logits from the rule set; replays the network head arithmetic exactly."""
    bits = np.asarray(bits, dtype=np.float64)
    if bits.ndim == 1:
        logits = rs.bias.copy()
        for rule in rs.rules:
            logits += evaluate_rule(rule, bits) * rule.scores
        return logits
    logits = np.repeat(rs.bias[None, :], bits.shape[0], axis=0)
    for rule in rs.rules:
        logits += rule_values(rule, bits)[:, None] * rule.scores[None, :]
    return logits


# ----------------------------------------------------------- simplification --


def _literal_key(lit: Literal):
    return (lit.bit_index, lit.negated)


def simplify(rs: RuleSet) -> RuleSet:
    """Literal dedupe, clause absorption, and merging of identical rules.

    Preserves the decision function: absorption removes clauses implied by a
    sibling, and identical rules merge by summing their score vectors.
    """
    simplified = []
    for rule in rs.rules:
        clauses = []
        for clause in rule.clauses:
            seen = set()
            literals = []
            for lit in clause.literals:
                if _literal_key(lit) not in seen:
                    seen.add(_literal_key(lit))
                    literals.append(lit)
            clauses.append(Clause(clause.op, tuple(literals)))
        sets = [frozenset(_literal_key(l) for l in clause.literals) for clause in clauses]
        kept = []
        for i, clause in enumerate(clauses):
            absorbed = False
            for j in range(len(clauses)):
                if i == j:
                    continue
                # a clause is redundant if a sibling's literal set is a strict
                # subset (absorption), or an equal earlier clause exists
                if sets[j] < sets[i] or (sets[j] == sets[i] and j < i):
                    absorbed = True
                    break
            if not absorbed:
                kept.append(clause)
        simplified.append(Rule(rule.form, tuple(kept), rule.scores.copy(), rule.id))

    merged: list[Rule] = []
    index: dict = {}
    for rule in simplified:
        key = (rule.form, tuple((c.op, tuple(_literal_key(l) for l in c.literals)) for c in rule.clauses))
        if key in index:
            merged[index[key]].scores += rule.scores
        else:
            index[key] = len(merged)
            merged.append(rule)
    return RuleSet(rules=tuple(merged), bias=rs.bias.copy(), binarizer=rs.binarizer)


# ------------------------------------------------------------- equivalence --


def _assignments(var_count: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return np.where((codes[:, None] >> np.arange(var_count)[None, :]) & 1 == 1, 1.0, -1.0)


def truth_table_equivalent(rs: RuleSet, truth: GroundTruthRule, var_count: int) -> bool:
    """Exhaustively compare argmax-class decisions against the ground truth."""
    if var_count > 20:
        raise RuleError(f"truth-table check limited to 20 variables, got {var_count}")
    if rs.binarizer.width != var_count:
        raise RuleError(
            f"rule set is over {rs.binarizer.width} bits, ground truth over {var_count} variables"
        )
    total = 1 << var_count
    for start in range(0, total, 4096):
        rows = _assignments(var_count, start, min(start + 4096, total))
        want = truth.evaluate(rows).astype(np.int64)
        got = predict_with_rules(rs, rows).argmax(axis=1)
        if not np.array_equal(got, want):
            return False
    return True


# ----------------------------------------------------------------- reports --


def rule_expression(rule: Rule, binarizer: BinarizerModel) -> str:
    """Pretty normal-form expression, e.g. ``(x_1 ∨ x_2) ∧ ¬x_3``."""
    inner_sep = " ∧ " if rule.clauses[0].op == AND else " ∨ "
    outer_sep = " ∧ " if rule.form == CNF else " ∨ "
    parts = []
    for clause in rule.clauses:
        body = inner_sep.join(
            literal_description(binarizer, lit.bit_index, lit.negated) for lit in clause.literals
        )
        if len(rule.clauses) > 1 and len(clause.literals) > 1:
            body = f"({body})"
        parts.append(body)
    return outer_sep.join(parts)


def render(rs: RuleSet, class_names=None, bits=None, prune_tau: float = 1e-3) -> str:
    """Human-readable report: expression, per-class support scores, coverage.

    Rules below the pruning threshold (max |score| < tau) are omitted from the
    report only; they still participate in prediction. Coverage is computed on
    the provided bits (typically the training split); "n/a" without bits.
    """
    if class_names is None:
        class_names = tuple(str(i) for i in range(len(rs.bias)))
    visible = [r for r in rs.rules if np.max(np.abs(r.scores)) >= prune_tau]
    visible.sort(key=lambda r: (-float(np.max(np.abs(r.scores))), r.id))
    lines = [f"# {len(visible)} rules shown of {len(rs.rules)} extracted (pruned at tau={prune_tau:g})"]
    header = ["Rule"] + [f"Support_{name}" for name in class_names] + ["Coverage"]
    lines.append(" | ".join(header))
    for rule in visible:
        coverage = "n/a"
        if bits is not None and len(bits):
            coverage = f"{float(np.mean(rule_values(rule, np.asarray(bits, dtype=np.float64)) > 0)):.4f}"
        row = [rule_expression(rule, rs.binarizer)]
        row += [f"{s:.4f}" for s in rule.scores]
        row.append(coverage)
        lines.append(" | ".join(row))
    bias_row = ["<bias>"] + [f"{b:.4f}" for b in rs.bias] + ["1.0000"]
    lines.append(" | ".join(bias_row))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ serialization --


def ruleset_to_dict(rs: RuleSet) -> dict:
    return {
        "format": "rule-set-v1",
        "bias": rs.bias.tolist(),
        "rules": [
            {
                "id": rule.id,
                "form": rule.form,
                "scores": rule.scores.tolist(),
                "clauses": [
                    {"op": c.op, "literals": [[l.bit_index, l.negated] for l in c.literals]}
                    for c in rule.clauses
                ],
            }
            for rule in rs.rules
        ],
        "binarizer": binarizer_to_dict(rs.binarizer),
    }


def ruleset_from_dict(payload: dict) -> RuleSet:
    for field in ("bias", "rules", "binarizer"):
        if field not in payload:
            raise RuleError(f"rule-set payload missing field {field!r}")
    rules = []
    for entry in payload["rules"]:
        for field in ("id", "form", "scores", "clauses"):
            if field not in entry:
                raise RuleError(f"rule record missing field {field!r}")
        clauses = tuple(
            Clause(c["op"], tuple(Literal(int(b), bool(n)) for b, n in c["literals"]))
            for c in entry["clauses"]
        )
        rules.append(
            Rule(entry["form"], clauses, np.array(entry["scores"], dtype=np.float64), int(entry["id"]))
        )
    return RuleSet(
        rules=tuple(rules),
        bias=np.array(payload["bias"], dtype=np.float64),
        binarizer=binarizer_from_dict(payload["binarizer"]),
    )


def save_ruleset(rs: RuleSet, path) -> None:
    Path(path).write_text(json.dumps(ruleset_to_dict(rs), indent=1, sort_keys=True))


def load_ruleset(path) -> RuleSet:
    return ruleset_from_dict(json.loads(Path(path).read_text()))
