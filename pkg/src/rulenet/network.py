"""Discrete two-level AND/OR network over ±1 literals with latent real weights.

Signs of the latent weights define the discrete structure: per-edge negation
gates, per-neuron AND/OR operator choices, and connection on/off switches.
AND is min and OR is max over ±1 values, so every intermediate value stays
exactly ±1. A mask derived from the operator signs forbids same-operator
connections between the two logic layers; every live second-layer neuron is
therefore a strict two-level normal-form formula over input literals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binarize import BinarizerModel, binarizer_from_dict, binarizer_to_dict, identity_binarizer


class NetworkError(ValueError):
    """Raised for malformed model files or inconsistent shapes."""


def sign_binarize(w):
    """Hard sign with ties to −1: +1 where w > 0, else −1."""
    arr = np.where(np.asarray(w, dtype=np.float64) > 0, 1.0, -1.0)
    return float(arr) if arr.ndim == 0 else arr


def alternation_mask(w_op_first, w_op_second) -> np.ndarray:
    """(K2, K1) ±1 mask that is +1 exactly where the two operators differ.

    An edge is eligible only on +1 entries, forcing AND/OR alternation between
    the layers (an AND of ORs or an OR of ANDs, never AND-of-ANDs).
    """
    s1 = sign_binarize(np.asarray(w_op_first))
    s2 = sign_binarize(np.asarray(w_op_second))
    return -np.outer(s2, s1)


# ---------------------------------------------------------------- layers ----


@dataclass(eq=False)
class NegationGates:
    """Per-edge ±1 gates applied to the input bits before the first logic layer."""

    w_neg: np.ndarray  # (K1, D)


@dataclass(eq=False)
class LogicLayer:
    """A bank of neurons, each choosing AND (w_op > 0) or OR over selected inputs."""

    w_op: np.ndarray  # (K,)
    w_conn: np.ndarray  # (K, fan_in); rows index the downstream neuron


@dataclass(eq=False)
class LinearHead:
    """Per-rule contribution scores and a per-class bias."""

    scores: np.ndarray  # (K2, Y)
    bias: np.ndarray  # (Y,)


@dataclass(eq=False)
class RuleNetwork:
    """Binarizer plus latent weights; the sign pattern is the classifier."""

    binarizer: BinarizerModel
    neg: NegationGates
    layer1: LogicLayer
    layer2: LogicLayer
    head: LinearHead
    seed: int
    class_names: tuple[str, ...]

    @property
    def d(self) -> int:
        return self.layer1.w_conn.shape[1]

    @property
    def k1(self) -> int:
        return self.layer1.w_conn.shape[0]

    @property
    def k2(self) -> int:
        return self.layer2.w_conn.shape[0]

    @property
    def y(self) -> int:
        return self.head.scores.shape[1]


def _init_latent(rng, shape):
    # uniform on [-0.1, -1e-4] ∪ [1e-4, 0.1]: never exactly zero, so the sign
    # pattern is well defined from the first step
    magnitude = rng.uniform(1e-4, 0.1, size=shape)
    sign = np.where(rng.random(size=shape) < 0.5, 1.0, -1.0)
    return magnitude * sign


def init_model(d, k1, k2, y, seed, binarizer=None, class_names=None) -> RuleNetwork:
    """Seeded init: small nonzero latent weights, zero head."""
    if min(d, k1, k2, y) < 1:
        raise NetworkError("all dimensions must be >= 1")
    if binarizer is None:
        binarizer = identity_binarizer(tuple(f"b{i}" for i in range(d)))
    if binarizer.width != d:
        raise NetworkError(f"binarizer width {binarizer.width} does not match d={d}")
    if class_names is None:
        class_names = tuple(str(i) for i in range(y))
    if len(class_names) != y:
        raise NetworkError("class_names length must equal y")
    rng = np.random.default_rng(seed)
    return RuleNetwork(
        binarizer=binarizer,
        neg=NegationGates(w_neg=_init_latent(rng, (k1, d))),
        layer1=LogicLayer(w_op=_init_latent(rng, (k1,)), w_conn=_init_latent(rng, (k1, d))),
        layer2=LogicLayer(w_op=_init_latent(rng, (k2,)), w_conn=_init_latent(rng, (k2, k1))),
        head=LinearHead(scores=np.zeros((k2, y)), bias=np.zeros(y)),
        seed=seed,
        class_names=tuple(class_names),
    )


# ------------------------------------------------------------ binary view ---


@dataclass(eq=False)
class BinaryView:
    """Sign-binarized structure; the single source of truth shared by the
    forward pass and rule extraction so the two can never disagree."""

    neg_sign: np.ndarray  # (K1, D) ±1
    op1: np.ndarray  # (K1,) ±1, +1 = AND
    op2: np.ndarray  # (K2,) ±1
    mask: np.ndarray  # (K2, K1) ±1 operator-alternation mask
    act1: np.ndarray  # (K1, D) bool, active input selections
    act2: np.ndarray  # (K2, K1) bool, active edges (eligible, on, live upstream)
    act_cnt1: np.ndarray  # (K1,) float
    act_cnt2: np.ndarray  # (K2,) float
    live1: np.ndarray  # (K1,) bool
    live2: np.ndarray  # (K2,) bool
    neutral1: np.ndarray  # (K1,) ±1 identity element of the operator
    neutral2: np.ndarray  # (K2,) ±1
    live2_idx: np.ndarray  # ascending indices of live second-layer neurons
    dead2_idx: np.ndarray
    base: np.ndarray  # (Y,) bias plus constant contributions of dead neurons


def binary_view(model: RuleNetwork) -> BinaryView:
    """Pure function of the latent weights; idempotent."""
    neg_sign = sign_binarize(model.neg.w_neg)
    op1 = sign_binarize(model.layer1.w_op)
    op2 = sign_binarize(model.layer2.w_op)
    conn1 = sign_binarize(model.layer1.w_conn)
    conn2 = sign_binarize(model.layer2.w_conn)
    mask = alternation_mask(model.layer1.w_op, model.layer2.w_op)
    act1 = conn1 > 0
    act_cnt1 = act1.sum(axis=1).astype(np.float64)
    live1 = act_cnt1 > 0
    # an edge consumes a first-layer value only if it is switched on, the
    # operators alternate, and the upstream neuron is itself live — a dead
    # upstream neuron has no formula and must not appear in any clause
    act2 = (conn2 > 0) & (mask > 0) & live1[None, :]
    act_cnt2 = act2.sum(axis=1).astype(np.float64)
    live2 = act_cnt2 > 0
    neutral1 = np.where(op1 > 0, 1.0, -1.0)
    neutral2 = np.where(op2 > 0, 1.0, -1.0)
    live2_idx = np.flatnonzero(live2)
    dead2_idx = np.flatnonzero(~live2)
    # dead second-layer neurons output their operator's identity element on
    # every input; fold those constants into a per-class base, accumulated in
    # ascending neuron order (rule prediction replays the same arithmetic)
    base = model.head.bias.copy()
    for i in dead2_idx:
        base = base + neutral2[i] * model.head.scores[i]
    return BinaryView(
        neg_sign=neg_sign,
        op1=op1,
        op2=op2,
        mask=mask,
        act1=act1,
        act2=act2,
        act_cnt1=act_cnt1,
        act_cnt2=act_cnt2,
        live1=live1,
        live2=live2,
        neutral1=neutral1,
        neutral2=neutral2,
        live2_idx=live2_idx,
        dead2_idx=dead2_idx,
        base=base,
    )


# ----------------------------------------------------------------- forward --


@dataclass(eq=False)
class _BatchTrace:
    """Intermediate values for a batch of inputs (internal)."""

    bits: np.ndarray  # (B, D)
    pos1: np.ndarray  # (B, K1) count of +1 active inputs per neuron
    v1: np.ndarray  # (B, K1) ±1
    min1: np.ndarray
    max1: np.ndarray
    tie_cnt1: np.ndarray
    pos2: np.ndarray
    v2: np.ndarray
    min2: np.ndarray
    max2: np.ndarray
    tie_cnt2: np.ndarray
    logits: np.ndarray  # (B, Y)


def _layer_values(pos, act_cnt, op):
    """±1 values plus min/max/tie-count per neuron from +1 counts.

    AND = min over active inputs (+1 iff all active inputs are +1; vacuously
    +1 when none), OR = max (−1 iff none positive; vacuously −1 when none).
    Counts are exact small integers in float64, so comparisons are exact.
    """
    and_true = pos == act_cnt[None, :]
    or_true = pos > 0
    v = np.where(op[None, :] > 0, np.where(and_true, 1.0, -1.0), np.where(or_true, 1.0, -1.0))
    vmin = np.where(pos < act_cnt[None, :], -1.0, 1.0)
    vmax = np.where(pos > 0, 1.0, -1.0)
    tie_cnt = np.where(
        op[None, :] > 0,
        np.where(and_true, act_cnt[None, :], act_cnt[None, :] - pos),
        np.where(or_true, pos, act_cnt[None, :]),
    )
    return v, vmin, vmax, tie_cnt


def _forward_batch(view: BinaryView, head: LinearHead, bits: np.ndarray) -> _BatchTrace:
    sel1 = (view.act1 * view.neg_sign).T  # (D, K1); zero rows drop inactive inputs
    pos1 = (bits @ sel1 + view.act_cnt1[None, :]) / 2.0
    v1, min1, max1, tie_cnt1 = _layer_values(pos1, view.act_cnt1, view.op1)
    pos2 = (v1 > 0).astype(np.float64) @ view.act2.T.astype(np.float64)
    v2, min2, max2, tie_cnt2 = _layer_values(pos2, view.act_cnt2, view.op2)
    # head: start from the dead-neuron base, then accumulate live neurons in
    # ascending order — the exact arithmetic replayed by rule prediction
    logits = np.repeat(view.base[None, :], bits.shape[0], axis=0)
    for i in view.live2_idx:
        logits += v2[:, i : i + 1] * head.scores[i][None, :]
    return _BatchTrace(
        bits=bits,
        pos1=pos1,
        v1=v1,
        min1=min1,
        max1=max1,
        tie_cnt1=tie_cnt1,
        pos2=pos2,
        v2=v2,
        min2=min2,
        max2=max2,
        tie_cnt2=tie_cnt2,
        logits=logits,
    )


@dataclass(eq=False)
class ForwardTrace:
    """Single-input forward record with the tie sets needed for backprop."""

    bits: np.ndarray  # (D,) ±1
    negated: np.ndarray  # (K1, D) gated inputs seen by layer 1
    v1: np.ndarray  # (K1,) ±1
    v2: np.ndarray  # (K2,) ±1
    tie1: np.ndarray  # (K1, D) bool, active inputs achieving the min/max
    tie2: np.ndarray  # (K2, K1) bool
    logits: np.ndarray  # (Y,)
    min1: np.ndarray
    max1: np.ndarray
    min2: np.ndarray
    max2: np.ndarray
    view: BinaryView


def forward(model: RuleNetwork, bits: np.ndarray) -> ForwardTrace:
    """Deterministic pure forward pass over one ±1 input vector."""
    bits = np.asarray(bits, dtype=np.float64)
    view = binary_view(model)
    tr = _forward_batch(view, model.head, bits[None, :])
    negated = bits[None, :] * view.neg_sign
    tie1 = view.act1 & (negated == tr.v1[0][:, None])
    tie2 = view.act2 & (tr.v1[0][None, :] == tr.v2[0][:, None])
    return ForwardTrace(
        bits=bits,
        negated=negated,
        v1=tr.v1[0],
        v2=tr.v2[0],
        tie1=tie1,
        tie2=tie2,
        logits=tr.logits[0],
        min1=tr.min1[0],
        max1=tr.max1[0],
        min2=tr.min2[0],
        max2=tr.max2[0],
        view=view,
    )


def predict_logits(model: RuleNetwork, bits: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Batched logits for an (n, D) ±1 matrix; forward semantics, chunked."""
    bits = np.asarray(bits, dtype=np.float64)
    view = binary_view(model)
    out = np.empty((bits.shape[0], model.y), dtype=np.float64)
    for start in range(0, bits.shape[0], chunk):
        out[start : start + chunk] = _forward_batch(view, model.head, bits[start : start + chunk]).logits
    return out


# ---------------------------------------------------------- serialization ---

_WEIGHT_FIELDS = ("w_neg", "w_conn1", "w_op1", "w_conn2", "w_op2", "scores", "bias")


def model_to_dict(model: RuleNetwork) -> dict:
    return {
        "format": "rule-network-v1",
        "seed": model.seed,
        "dims": {"d": model.d, "k1": model.k1, "k2": model.k2, "y": model.y},
        "class_names": list(model.class_names),
        "weights": {
            "w_neg": model.neg.w_neg.tolist(),
            "w_conn1": model.layer1.w_conn.tolist(),
            "w_op1": model.layer1.w_op.tolist(),
            "w_conn2": model.layer2.w_conn.tolist(),
            "w_op2": model.layer2.w_op.tolist(),
            "scores": model.head.scores.tolist(),
            "bias": model.head.bias.tolist(),
        },
        "binarizer": binarizer_to_dict(model.binarizer),
    }


def model_from_dict(payload: dict) -> RuleNetwork:
    for field in ("seed", "dims", "class_names", "weights", "binarizer"):
        if field not in payload:
            raise NetworkError(f"model payload missing field {field!r}")
    dims = payload["dims"]
    for field in ("d", "k1", "k2", "y"):
        if field not in dims:
            raise NetworkError(f"model payload missing field 'dims.{field}'")
    weights = payload["weights"]
    arrays = {}
    for field in _WEIGHT_FIELDS:
        if field not in weights:
            raise NetworkError(f"model payload missing field 'weights.{field}'")
        arrays[field] = np.array(weights[field], dtype=np.float64)
    d, k1, k2, y = dims["d"], dims["k1"], dims["k2"], dims["y"]
    expected = {
        "w_neg": (k1, d),
        "w_conn1": (k1, d),
        "w_op1": (k1,),
        "w_conn2": (k2, k1),
        "w_op2": (k2,),
        "scores": (k2, y),
        "bias": (y,),
    }
    for field, shape in expected.items():
        if arrays[field].shape != shape:
            raise NetworkError(f"model field 'weights.{field}' has shape {arrays[field].shape}, expected {shape}")
    binarizer = binarizer_from_dict(payload["binarizer"])
    if binarizer.width != d:
        raise NetworkError(f"binarizer width {binarizer.width} does not match model d={d}")
    return RuleNetwork(
        binarizer=binarizer,
        neg=NegationGates(w_neg=arrays["w_neg"]),
        layer1=LogicLayer(w_op=arrays["w_op1"], w_conn=arrays["w_conn1"]),
        layer2=LogicLayer(w_op=arrays["w_op2"], w_conn=arrays["w_conn2"]),
        head=LinearHead(scores=arrays["scores"], bias=arrays["bias"]),
        seed=payload["seed"],
        class_names=tuple(payload["class_names"]),
    )


def save_model(model: RuleNetwork, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1, sort_keys=True))


def load_model(path) -> RuleNetwork:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(payload)
