"""Command-line front end: train, simulate, extract, eval, gradcheck.

Every command is reproducible from (flags, seed); summary files contain no
timing or host data, so re-running a command yields byte-identical summaries.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from .binarize import BINARY, BinarizeError, transform_dataset
from .data import (
    CNF,
    DNF,
    DataError,
    Dataset,
    GroundTruthRule,
    Schema,
    generate_synthetic,
    holdout_split,
    kfold_split,
    load_dataset,
    save_dataset,
)
from .metrics import MetricError, grad_liveness_report, macro_f1, ruleset_stats
from .network import NetworkError, load_model, predict_logits, save_model
from .rules import (
    RuleError,
    RuleSet,
    extract_rules,
    predict_with_rules,
    render,
    save_ruleset,
    simplify,
    truth_table_equivalent,
)
from .train import (
    HISTORY_COLUMNS,
    TrainConfig,
    TrainError,
    TrainingDiverged,
    format_record,
    minmax_backward,
    train,
    write_history,
)


class UsageError(ValueError):
    """Bad invocation (missing files, malformed values): exit code 2."""


class RuleParseError(ValueError):
    """Malformed rule expression; message carries the position."""


# ------------------------------------------------------- rule mini-grammar --

_TOKEN_RE = re.compile(r"\s*(x_?\d+|[&|!()])")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise RuleParseError(f"unexpected character {stripped[0]!r} at position {at}")
        tokens.append((match.group(1), match.start(1)))
        pos = match.end()
    return tokens


class _Parser:
    """Recursive descent over: or := and ('|' and)*; and := unary ('&' unary)*;
    unary := '!' unary | var | '(' or ')'."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self):
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self):
        node = self.parse_or()
        if self.peek() is not None:
            raise RuleParseError(f"unexpected token {self.peek()!r} at position {self.pos()}")
        return node

    def parse_or(self):
        parts = [self.parse_and()]
        while self.peek() == "|":
            self.take()
            parts.append(self.parse_and())
        return parts[0] if len(parts) == 1 else ("or", parts)

    def parse_and(self):
        parts = [self.parse_unary()]
        while self.peek() == "&":
            self.take()
            parts.append(self.parse_unary())
        return parts[0] if len(parts) == 1 else ("and", parts)

    def parse_unary(self):
        if self.peek() == "!":
            self.take()
            return ("not", self.parse_unary())
        tok = self.peek()
        if tok is None:
            raise RuleParseError(f"expected a variable or '(' at position {self.pos()}")
        if tok == "(":
            self.take()
            node = self.parse_or()
            if self.peek() != ")":
                raise RuleParseError(f"expected ')' at position {self.pos()}")
            self.take()
            return node
        if tok.startswith("x"):
            self.take()
            index = int(tok.lstrip("x_"))
            if index < 1:
                raise RuleParseError("variable indices start at 1")
            return ("var", index - 1)
        raise RuleParseError(f"unexpected token {tok!r} at position {self.pos()}")


def _negation_normal_form(node, negate=False):
    kind = node[0]
    if kind == "var":
        return ("lit", node[1], negate)
    if kind == "not":
        return _negation_normal_form(node[1], not negate)
    flipped = {"and": "or", "or": "and"}[kind] if negate else kind
    children = [_negation_normal_form(child, negate) for child in node[1]]
    flat = []
    for child in children:
        if child[0] == flipped:
            flat.extend(child[1])
        else:
            flat.append(child)
    return (flipped, flat)


def _as_clause(node):
    """A literal or a flat connective of literals -> (op or None, literal list)."""
    if node[0] == "lit":
        return None, [(node[1], node[2])]
    op, children = node
    literals = []
    for child in children:
        if child[0] != "lit":
            raise RuleParseError("rule is not in two-level normal form (nesting too deep)")
        literals.append((child[1], child[2]))
    return op, literals


def parse_rule(text: str) -> tuple[GroundTruthRule, int]:
    """Parse `(x1|x2)&!x3`-style expressions; returns (rule, variable count)."""
    if not text.strip():
        raise RuleParseError("empty rule expression")
    node = _negation_normal_form(_Parser(text).parse())
    if node[0] in ("lit",):
        clauses = [[(node[1], node[2])]]
        form = DNF
    else:
        top, children = node
        inner = "or" if top == "and" else "and"
        clauses = []
        for child in children:
            op, literals = _as_clause(child)
            if op not in (None, inner):
                raise RuleParseError("rule is not in two-level normal form (nesting too deep)")
            clauses.append(literals)
        form = CNF if top == "and" else DNF
    rule = GroundTruthRule(form, tuple(tuple(clause) for clause in clauses))
    return rule, rule.max_var + 1


# ------------------------------------------------------------- artifacts ----


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _config_line(config: TrainConfig, prune_tau: float) -> str:
    return (
        f"config: k1={config.k1} k2={config.k2} bins={config.bins} binning={config.binning}"
        f" l2={config.l2!r} lr0={config.lr0!r} batch={config.batch} epochs={config.epochs}"
        f" decay_every={config.decay_every} decay_factor={config.decay_factor!r}"
        f" seed={config.seed} prune_tau={prune_tau!r}"
    )


def _fmt(value) -> str:
    return "n/a" if value is None else repr(value)


def _pruned(rs: RuleSet, tau: float) -> RuleSet:
    kept = tuple(r for r in rs.rules if float(np.max(np.abs(r.scores))) >= tau)
    return RuleSet(rules=kept, bias=rs.bias.copy(), binarizer=rs.binarizer)


def _check_fidelity(model, rs, trials: int = 200, seed: int = 0) -> None:
    """Extracted rules must reproduce forward logits exactly on random inputs."""
    rng = np.random.default_rng(seed)
    bits = np.where(rng.random((trials, model.d)) < 0.5, 1.0, -1.0)
    got = predict_with_rules(rs, bits)
    want = predict_logits(model, bits)
    if not np.array_equal(got, want):
        raise RuleError("extraction fidelity check failed: rule logits differ from forward logits")


def _write_fold_artifacts(fold_dir: Path, model, history, train_ds, test_ds, prune_tau):
    fold_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, fold_dir / "model")
    rs = extract_rules(model)
    _check_fidelity(model, rs)
    save_ruleset(rs, fold_dir / "rules.json")
    train_bits = transform_dataset(model.binarizer, train_ds)
    report = render(simplify(rs), class_names=model.class_names, bits=train_bits, prune_tau=prune_tau)
    (fold_dir / "rules.txt").write_text(report)
    write_history(history, fold_dir / "history.csv")
    save_dataset(train_ds, fold_dir / "train.csv")
    save_dataset(test_ds, fold_dir / "test.csv")
    return rs


def _write_combined_history(out_dir: Path, histories) -> None:
    lines = [",".join(("fold",) + HISTORY_COLUMNS)]
    for fold, history in enumerate(histories):
        for record in history.records:
            lines.append(",".join([str(fold)] + format_record(record)))
    (out_dir / "history.csv").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- commands --


def cmd_train(args) -> int:
    schema = Schema.from_file(_require_file(args.schema, "schema"))
    dataset = load_dataset(_require_file(args.data, "data"), schema, delimiter=args.delimiter)
    if args.folds < 1:
        raise UsageError(f"--folds must be >= 1, got {args.folds}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.folds == 1:
        folds = [holdout_split(dataset, 0.2, args.seed)]
    else:
        folds = kfold_split(dataset, args.folds, args.seed)

    fold_rows = []
    histories = []
    diverged = None
    for fold, (train_ds, test_ds) in enumerate(folds):
        config = TrainConfig(
            k1=args.k1,
            k2=args.k2,
            bins=args.bins,
            binning=args.binning,
            l2=args.l2,
            lr0=args.lr,
            batch=args.batch,
            epochs=args.epochs,
            decay_every=args.decay_every,
            decay_factor=args.decay_factor,
            seed=args.seed + fold,
        )
        try:
            model, history = train(train_ds, config, validation=test_ds)
        except TrainingDiverged as exc:
            histories.append(exc.history)
            fold_dir = out_dir / f"fold{fold}"
            fold_dir.mkdir(parents=True, exist_ok=True)
            write_history(exc.history, fold_dir / "history.csv")
            diverged = (fold, str(exc))
            break
        histories.append(history)
        rs = _write_fold_artifacts(out_dir / f"fold{fold}", model, history, train_ds, test_ds, args.prune_tau)
        visible = _pruned(simplify(rs), args.prune_tau)
        train_bits = transform_dataset(model.binarizer, train_ds)
        test_bits = transform_dataset(model.binarizer, test_ds)
        train_stats = ruleset_stats(visible, train_bits, train_ds.labels)
        test_stats = ruleset_stats(visible, test_bits, test_ds.labels)
        final = history.final()
        fold_rows.append(
            {
                "fold": fold,
                "train_f1": final.train_f1,
                "test_f1": final.val_f1,
                "rule_count": train_stats.rule_count,
                "avg_rule_length": train_stats.avg_length,
                "train_coverage": train_stats.mean_coverage,
                "train_accuracy": train_stats.mean_accuracy,
                "train_diversity": train_stats.diversity,
                "test_coverage": test_stats.mean_coverage,
                "test_accuracy": test_stats.mean_accuracy,
                "test_diversity": test_stats.diversity,
            }
        )

    _write_combined_history(out_dir, histories)
    config_echo = TrainConfig(
        k1=args.k1, k2=args.k2, bins=args.bins, binning=args.binning, l2=args.l2, lr0=args.lr,
        batch=args.batch, epochs=args.epochs, decay_every=args.decay_every,
        decay_factor=args.decay_factor, seed=args.seed,
    )
    lines = [
        "command: train",
        f"data: {args.data}",
        f"schema: {args.schema}",
        f"folds: {args.folds}",
        f"classes: {' '.join(dataset.class_names)}",
        _config_line(config_echo, args.prune_tau),
    ]
    columns = (
        "test_f1", "train_f1", "rule_count", "avg_rule_length", "train_coverage",
        "train_accuracy", "train_diversity", "test_coverage", "test_accuracy", "test_diversity",
    )
    for row in fold_rows:
        parts = " ".join(f"{name}={_fmt(row[name])}" for name in columns)
        lines.append(f"fold {row['fold']}: {parts}")
    if diverged is not None:
        lines.append(f"diverged: fold {diverged[0]}: {diverged[1]}")
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
        print(f"error: {diverged[1]} (fold {diverged[0]}); partial artifacts in {out_dir}", file=sys.stderr)
        return 1
    test_f1s = np.array([row["test_f1"] for row in fold_rows], dtype=np.float64)
    lines.append(f"mean_test_f1: {test_f1s.mean()!r}")
    lines.append(f"std_test_f1: {test_f1s.std()!r}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        fh.write(",".join(("fold",) + columns) + "\n")
        for row in fold_rows:
            fh.write(",".join([str(row["fold"])] + ["" if row[c] is None else repr(row[c]) for c in columns]) + "\n")
    print(f"macro-F1 {test_f1s.mean():.4f} ± {test_f1s.std():.4f} over {len(fold_rows)} folds")
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_simulate(args) -> int:
    try:
        rule, var_count = parse_rule(args.rule)
    except RuleParseError as exc:
        raise UsageError(f"bad --rule: {exc}") from None
    dataset = generate_synthetic(rule, args.n, var_count, args.seed)
    train_ds, test_ds = holdout_split(dataset, 0.5, args.seed)
    config = TrainConfig(
        k1=args.k1,
        k2=args.k2,
        binning=BINARY,
        l2=args.l2,
        lr0=args.lr,
        batch=args.batch,
        epochs=args.epochs,
        decay_every=args.decay_every,
        decay_factor=args.decay_factor,
        seed=args.seed,
    )
    model, history = train(train_ds, config, validation=test_ds)
    test_bits = transform_dataset(model.binarizer, test_ds)
    accuracy = float(np.mean(predict_logits(model, test_bits).argmax(axis=1) == test_ds.labels))
    rs = extract_rules(model)
    _check_fidelity(model, rs)
    equivalent = truth_table_equivalent(rs, rule, var_count)
    train_bits = transform_dataset(model.binarizer, train_ds)
    report = render(simplify(rs), class_names=model.class_names, bits=train_bits, prune_tau=args.prune_tau)
    print(f"rule: {args.rule}")
    print(f"test_accuracy: {accuracy!r}")
    print(f"truth_table_equivalent: {'true' if equivalent else 'false'}")
    print(report, end="")
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_model(model, out_dir / "model")
        save_ruleset(rs, out_dir / "rules.json")
        (out_dir / "rules.txt").write_text(report)
        write_history(history, out_dir / "history.csv")
        lines = [
            "command: simulate",
            f"rule: {args.rule}",
            f"n: {args.n}",
            f"vars: {var_count}",
            _config_line(config, args.prune_tau),
            f"test_accuracy: {accuracy!r}",
            f"truth_table_equivalent: {'true' if equivalent else 'false'}",
            f"live_rules: {history.final().live_rules}",
        ]
        (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    return 0


def cmd_extract(args) -> int:
    model = load_model(_require_file(args.model, "model"))
    rs = extract_rules(model)
    _check_fidelity(model, rs)
    bits = None
    if args.data is not None:
        if args.schema is None:
            raise UsageError("--data requires --schema")
        schema = Schema.from_file(_require_file(args.schema, "schema"))
        dataset = load_dataset(_require_file(args.data, "data"), schema, delimiter=args.delimiter)
        bits = transform_dataset(model.binarizer, dataset)
    report = render(simplify(rs), class_names=model.class_names, bits=bits, prune_tau=args.prune_tau)
    if args.out is not None:
        Path(args.out).write_text(report)
        print(f"rule report written to {args.out}")
    else:
        print(report, end="")
    return 0


def _remap_labels(dataset: Dataset, class_names) -> np.ndarray:
    """Map the dataset's interned label ids onto the model's class order."""
    mapping = []
    for name in dataset.class_names:
        if name not in class_names:
            raise DataError(f"class {name!r} in data is unknown to the model")
        mapping.append(class_names.index(name))
    return np.asarray(mapping, dtype=np.int64)[dataset.labels]


def cmd_eval(args) -> int:
    model = load_model(_require_file(args.model, "model"))
    schema = Schema.from_file(_require_file(args.schema, "schema"))
    dataset = load_dataset(_require_file(args.data, "data"), schema, delimiter=args.delimiter)
    bits = transform_dataset(model.binarizer, dataset)
    labels = _remap_labels(dataset, model.class_names)
    f1 = macro_f1(predict_logits(model, bits).argmax(axis=1), labels, model.y)
    rs = extract_rules(model)
    _check_fidelity(model, rs)
    visible = _pruned(simplify(rs), args.prune_tau)
    stats = ruleset_stats(visible, bits, labels)
    print(f"macro_f1: {f1!r}")
    print(f"rules: {stats.rule_count}")
    print(f"avg_rule_length: {_fmt(stats.avg_length)}")
    print(f"mean_coverage: {_fmt(stats.mean_coverage)}")
    print(f"mean_single_rule_accuracy: {_fmt(stats.mean_accuracy)}")
    print(f"diversity: {_fmt(stats.diversity)}")
    return 0


def _broken_minmax_backward(values, mode, upstream):
    # deliberately wrong: spreads gradient over every input (self-test hook)
    arr = np.asarray(values, dtype=np.float64)
    return np.full_like(arr, upstream / max(len(arr), 1))


def cmd_gradcheck(args) -> int:
    backward_fn = _broken_minmax_backward if args.inject_broken else minmax_backward
    rng = np.random.default_rng(args.seed)
    for trial in range(args.trials):
        m = int(rng.integers(1, 9))
        if trial % 2 == 0:
            values = np.where(rng.random(m) < 0.5, 1.0, -1.0)
        else:
            values = rng.uniform(-2.0, 2.0, size=m)
        mode = "min" if trial % 4 < 2 else "max"
        upstream = float(rng.uniform(-2.0, 2.0))
        grads = backward_fn(values, mode, upstream)
        target = values.min() if mode == "min" else values.max()
        ties = values == target
        conserved = abs(float(grads.sum()) - upstream) <= 1e-12
        clean = not np.any(grads[~ties] != 0.0)
        if not (conserved and clean):
            print(
                "conservation violation: "
                f"values={values.tolist()} mode={mode} upstream={upstream!r} grads={grads.tolist()}",
                file=sys.stderr,
            )
            return 1
    print(f"conservation: {args.trials} cases ok (tolerance 1e-12)")
    live_minmax, live_product = grad_liveness_report(args.fan_in, args.trials, args.seed)
    print(f"minmax_liveness: {live_minmax!r}")
    print(f"product_liveness: {live_product!r}")
    if live_minmax != 1.0:
        print("liveness violation: min/max backward left a trial with no gradient", file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------------ parser --


def _add_train_flags(sub, k1, k2, epochs, l2):
    sub.add_argument("--k1", type=int, default=k1, help="first logic layer width")
    sub.add_argument("--k2", type=int, default=k2, help="second logic layer width")
    sub.add_argument("--l2", type=float, default=l2, help="L2 coefficient")
    sub.add_argument("--lr", type=float, default=1e-2, help="initial learning rate")
    sub.add_argument("--batch", type=int, default=32, help="mini-batch size")
    sub.add_argument("--epochs", type=int, default=epochs, help="training epochs")
    sub.add_argument("--decay-every", type=int, default=100, help="epochs between lr decays")
    sub.add_argument("--decay-factor", type=float, default=0.1, help="lr multiplier is (1 - this)")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--prune-tau", type=float, default=1e-3, help="report pruning threshold on |score|")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulenet", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="k-fold training on a delimited dataset")
    p.add_argument("--data", required=True, help="delimited data file with header row")
    p.add_argument("--schema", required=True, help="sidecar schema file (<name> <kind> per line)")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ,)")
    p.add_argument("--bins", type=int, default=15, help="thresholds per continuous feature")
    p.add_argument("--binning", choices=["ranint", "kint", "entint"], default="ranint")
    p.add_argument("--folds", type=int, default=5, help="CV folds; 1 = single 80/20 split")
    p.add_argument("--out", default="out", help="output directory")
    _add_train_flags(p, k1=128, k2=128, epochs=400, l2=1e-7)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("simulate", help="synthetic rule-recovery experiment")
    p.add_argument("--rule", required=True, help="ground-truth rule, e.g. \"(x1|x2)&!x3\"")
    p.add_argument("--n", type=int, default=50000, help="sample count")
    p.add_argument("--out", default=None, help="optional artifact directory")
    _add_train_flags(p, k1=64, k2=64, epochs=50, l2=1e-6)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("extract", help="render the rule report from a model file")
    p.add_argument("--model", required=True, help="model file from train/simulate")
    p.add_argument("--data", default=None, help="optional data file for coverage")
    p.add_argument("--schema", default=None, help="schema for --data")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", default=None, help="optional report path (default: stdout)")
    p.add_argument("--prune-tau", type=float, default=1e-3)
    p.set_defaults(func=cmd_extract)

    p = subs.add_parser("eval", help="evaluate a model file on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--prune-tau", type=float, default=1e-3)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("gradcheck", help="gradient conservation and liveness checks")
    p.add_argument("--fan-in", type=int, default=100)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-broken", action="store_true", help="corrupt the backward (checker self-test)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, BinarizeError, NetworkError, RuleError, MetricError, TrainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
