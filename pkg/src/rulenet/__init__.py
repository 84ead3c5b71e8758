"""Trainable two-level AND/OR logic network with exact CNF/DNF rule extraction."""

from .binarize import (
    BINARY,
    ENTINT,
    FIT_METHODS,
    GREATER_THAN,
    IDENTITY,
    KINT,
    LESS_THAN,
    ONE_HOT,
    RANINT,
    BinarizeError,
    BinarizerModel,
    LiteralSpec,
    binarizer_from_dict,
    binarizer_to_dict,
    fit,
    identity_binarizer,
    literal_description,
    load_binarizer,
    q,
    save_binarizer,
    transform,
    transform_dataset,
)
from .data import (
    CATEGORICAL,
    CNF,
    CONTINUOUS,
    DNF,
    LABEL,
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
from .metrics import (
    MetricError,
    RuleStats,
    grad_liveness_report,
    macro_f1,
    product_activation_grads,
    rule_accuracy,
    rule_coverage,
    ruleset_diversity,
    ruleset_stats,
)
from .network import (
    BinaryView,
    ForwardTrace,
    LinearHead,
    LogicLayer,
    NegationGates,
    NetworkError,
    RuleNetwork,
    alternation_mask,
    binary_view,
    forward,
    init_model,
    load_model,
    model_from_dict,
    model_to_dict,
    predict_logits,
    save_model,
    sign_binarize,
)
from .rules import (
    AND,
    OR,
    Clause,
    Literal,
    Rule,
    RuleError,
    RuleSet,
    evaluate_rule,
    extract_rules,
    load_ruleset,
    predict_with_rules,
    render,
    rule_expression,
    rule_length,
    ruleset_from_dict,
    ruleset_to_dict,
    save_ruleset,
    simplify,
    truth_table_equivalent,
)
from .train import (
    AdamState,
    EpochRecord,
    GradSet,
    TrainConfig,
    TrainHistory,
    TrainingDiverged,
    adam_step,
    backward,
    cross_entropy,
    l2_grad,
    lr_schedule,
    minmax_backward,
    ste_sign_grad,
    train,
    write_history,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
