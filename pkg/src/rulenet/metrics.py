"""Classification and rule-quality metrics, plus a gradient-liveness oracle
contrasting product-based logic activations with the min/max backward rule."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rules import Rule, RuleSet, rule_length, rule_values


class MetricError(ValueError):
    """Raised for empty or mismatched metric inputs."""


def macro_f1(pred, truth, class_count: int, skip_absent: bool = True) -> float:
    """Unweighted mean of per-class F1.

    Classes with zero support in truth are skipped by default (they carry no
    evidence on this split); pass skip_absent=False to score them as 0.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0:
        raise MetricError("macro F1 of an empty prediction set")
    if pred.shape != truth.shape:
        raise MetricError(f"prediction/truth length mismatch: {pred.shape} vs {truth.shape}")
    scores = []
    for c in range(class_count):
        support = int((truth == c).sum())
        if support == 0 and skip_absent:
            continue
        tp = int(((pred == c) & (truth == c)).sum())
        fp = int(((pred == c) & (truth != c)).sum())
        fn = support - tp
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    if not scores:
        raise MetricError("no class has support in truth")
    return float(np.mean(scores))


# ------------------------------------------------------------ rule quality --


def rule_coverage(rule: Rule, bits: np.ndarray) -> float:
    """Fraction of instances on which the rule evaluates true."""
    bits = np.asarray(bits, dtype=np.float64)
    if bits.shape[0] == 0:
        raise MetricError("coverage over an empty dataset")
    return float(np.mean(rule_values(rule, bits) > 0))


def rule_accuracy(rule: Rule, bits: np.ndarray, labels) -> Optional[float]:
    """Among covered instances, fraction whose label matches the rule's
    argmax-score class; None when the rule covers nothing."""
    bits = np.asarray(bits, dtype=np.float64)
    labels = np.asarray(labels)
    covered = rule_values(rule, bits) > 0
    if not covered.any():
        return None
    predicted = int(np.argmax(rule.scores))
    return float(np.mean(labels[covered] == predicted))


def ruleset_diversity(rs: RuleSet, bits: np.ndarray) -> Optional[float]:
    """1 − mean pairwise Jaccard overlap of the rules' cover sets."""
    if len(rs.rules) < 2:
        return None
    bits = np.asarray(bits, dtype=np.float64)
    covers = [rule_values(rule, bits) > 0 for rule in rs.rules]
    overlaps = []
    for i in range(len(covers)):
        for j in range(i + 1, len(covers)):
            union = int((covers[i] | covers[j]).sum())
            inter = int((covers[i] & covers[j]).sum())
            overlaps.append(inter / union if union else 0.0)
    return float(1.0 - np.mean(overlaps))


@dataclass
class RuleStats:
    """Per-rule and set-level quality numbers for one rule set on one split."""

    rule_ids: list
    coverage: list
    accuracy: list  # None entries for uncovered rules
    lengths: list
    rule_count: int
    avg_length: float
    diversity: Optional[float]

    @property
    def mean_coverage(self) -> Optional[float]:
        return float(np.mean(self.coverage)) if self.coverage else None

    @property
    def mean_accuracy(self) -> Optional[float]:
        defined = [a for a in self.accuracy if a is not None]
        return float(np.mean(defined)) if defined else None


def ruleset_stats(rs: RuleSet, bits: np.ndarray, labels) -> RuleStats:
    lengths = [rule_length(rule) for rule in rs.rules]
    return RuleStats(
        rule_ids=[rule.id for rule in rs.rules],
        coverage=[rule_coverage(rule, bits) for rule in rs.rules],
        accuracy=[rule_accuracy(rule, bits, labels) for rule in rs.rules],
        lengths=lengths,
        rule_count=len(rs.rules),
        avg_length=float(np.mean(lengths)) if lengths else 0.0,
        diversity=ruleset_diversity(rs, bits),
    )


# ------------------------------------------------- gradient-liveness oracle --


def product_activation_grads(bits, weights, mode: str) -> np.ndarray:
    """Input gradients of product-based AND/OR activations (0/1 convention).

    AND: r = Π_k F_c(u_k, W_k) with F_c(h, w) = 1 − w(1 − h), so
    ∂r/∂u_j = W_j · Π_{k≠j} F_c(u_k, W_k). OR is the De Morgan dual via
    F_d(h, w) = h·w and r = 1 − Π (1 − F_d). Test oracle only: the product
    form loses all gradient once two selected inputs pin a factor to zero.
    """
    bits = np.asarray(bits, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if mode not in ("and", "or"):
        raise MetricError(f"mode must be 'and' or 'or', got {mode!r}")
    factors = 1.0 - weights * (1.0 - bits) if mode == "and" else 1.0 - bits * weights
    # leave-one-out products via prefix/suffix (no division: factors may be 0)
    m = len(factors)
    prefix = np.ones(m + 1)
    suffix = np.ones(m + 1)
    for i in range(m):
        prefix[i + 1] = prefix[i] * factors[i]
        suffix[m - 1 - i] = suffix[m - i] * factors[m - 1 - i]
    loo = prefix[:m] * suffix[1:]
    return weights * loo


def grad_liveness_report(fan_in: int, trials: int, seed: int = 0) -> tuple[float, float]:
    """Fractions of random inputs whose gradient is not identically zero,
    under min/max tie sharing vs product activations, at the given fan-in."""
    from .train import minmax_backward  # local import to avoid a module cycle

    if fan_in < 2:
        raise MetricError(f"fan-in must be >= 2, got {fan_in}")
    rng = np.random.default_rng(seed)
    live_minmax = 0
    live_product = 0
    for trial in range(trials):
        zero_one = rng.integers(0, 2, size=fan_in).astype(np.float64)
        mode = "and" if trial % 2 == 0 else "or"
        pm_one = 2.0 * zero_one - 1.0
        grads = minmax_backward(pm_one, "min" if mode == "and" else "max", 1.0)
        if np.any(grads != 0.0):
            live_minmax += 1
        if np.any(product_activation_grads(zero_one, np.ones(fan_in), mode) != 0.0):
            live_product += 1
    return live_minmax / trials, live_product / trials
