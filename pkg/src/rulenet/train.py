"""Training for the discrete logic network.

The discrete forward pass is differentiated with a straight-through estimator
(sign passes gradients unchanged, no clipping), min/max gradients shared
equally over the tie set, a neutral-element relaxation for connection gates,
and a min/max blend relaxation for operator gates. Loss is softmax
cross-entropy plus L2 on every latent weight except the head bias, optimized
with Adam under a step learning-rate decay.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .binarize import BINARY, FIT_METHODS, fit, identity_binarizer, transform_dataset
from .data import Dataset
from .metrics import macro_f1
from .network import (
    ForwardTrace,
    RuleNetwork,
    _forward_batch,
    alternation_mask,
    binary_view,
    init_model,
    predict_logits,
)

MIN = "min"
MAX = "max"


class TrainError(ValueError):
    """Raised for invalid gradients or mismatched shapes."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries the history recorded so far."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


# ------------------------------------------------------------- primitives ---


def ste_sign_grad(upstream):
    """Straight-through estimator: d sign(x)/dx := 1, so gradients pass unchanged."""
    return upstream


def minmax_backward(values, mode: str, upstream: float) -> np.ndarray:
    """Share ``upstream`` equally over the argmin/argmax tie set.

    Entries off the tie set get exactly zero; the shares sum to upstream.
    An empty input returns an empty gradient (dead-neuron path).
    """
    if mode not in (MIN, MAX):
        raise TrainError(f"mode must be '{MIN}' or '{MAX}', got {mode!r}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise TrainError(f"values must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        return np.zeros(0, dtype=np.float64)
    target = arr.min() if mode == MIN else arr.max()
    ties = arr == target
    out = np.zeros_like(arr)
    out[ties] = upstream / ties.sum()
    return out


def cross_entropy(logits, label):
    """Softmax cross-entropy (max-subtracted) -> (loss, dlogits = softmax − onehot)."""
    logits = np.asarray(logits, dtype=np.float64)
    losses, dlogits = _cross_entropy_batch(logits[None, :], np.asarray([label]))
    return float(losses[0]), dlogits[0]


def _cross_entropy_batch(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    total = expd.sum(axis=1)
    rows = np.arange(len(labels))
    losses = np.log(total) - shifted[rows, labels]
    dlogits = expd / total[:, None]
    dlogits[rows, labels] -= 1.0
    return losses, dlogits


# ---------------------------------------------------------------- gradsets ---


@dataclass(eq=False)
class GradSet:
    """Gradients mirroring every latent weight array of the model."""

    w_neg: np.ndarray
    w_conn1: np.ndarray
    w_op1: np.ndarray
    w_conn2: np.ndarray
    w_op2: np.ndarray
    scores: np.ndarray
    bias: np.ndarray

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def add_(self, other: "GradSet") -> "GradSet":
        for f in fields(self):
            getattr(self, f.name).__iadd__(getattr(other, f.name))
        return self


PARAM_ORDER = ("w_neg", "w_conn1", "w_op1", "w_conn2", "w_op2", "scores", "bias")


def model_params(model: RuleNetwork) -> dict:
    """Live views of the model's weight arrays, keyed like GradSet."""
    return {
        "w_neg": model.neg.w_neg,
        "w_conn1": model.layer1.w_conn,
        "w_op1": model.layer1.w_op,
        "w_conn2": model.layer2.w_conn,
        "w_op2": model.layer2.w_op,
        "scores": model.head.scores,
        "bias": model.head.bias,
    }


def l2_grad(model: RuleNetwork, lam: float) -> GradSet:
    """2λw on every latent weight; the head bias is not penalized."""
    if lam < 0:
        raise TrainError(f"L2 coefficient must be >= 0, got {lam}")
    return GradSet(
        w_neg=2.0 * lam * model.neg.w_neg,
        w_conn1=2.0 * lam * model.layer1.w_conn,
        w_op1=2.0 * lam * model.layer1.w_op,
        w_conn2=2.0 * lam * model.layer2.w_conn,
        w_op2=2.0 * lam * model.layer2.w_op,
        scores=2.0 * lam * model.head.scores,
        bias=np.zeros_like(model.head.bias),
    )


# -------------------------------------------------------------------- adam ---


@dataclass(eq=False)
class AdamState:
    """First/second moment accumulators and step counter."""

    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.items()},
            v={name: np.zeros_like(arr) for name, arr in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameter arrays."""
    state.t += 1
    correct1 = 1.0 - state.beta1**state.t
    correct2 = 1.0 - state.beta2**state.t
    for name in PARAM_ORDER:
        if name not in params:
            continue
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        step = lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
        params[name] -= step


def lr_schedule(lr0: float, epoch: int, decay_every: int, decay_factor: float) -> float:
    """lr multiplied by (1 − decay_factor) after every decay_every epochs."""
    return lr0 * (1.0 - decay_factor) ** ((epoch - 1) // decay_every)


# ---------------------------------------------------------------- backward ---


def backward(model: RuleNetwork, trace: ForwardTrace, dlogits) -> GradSet:
    """Gradients of a scalar loss wrt every latent weight for one sample."""
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != (model.y,):
        raise TrainError(f"dlogits shape {dlogits.shape} does not match {model.y} classes")
    return _backward_batch(
        model,
        trace.view,
        trace.bits[None, :],
        trace.v1[None, :],
        trace.v2[None, :],
        trace.min1[None, :],
        trace.max1[None, :],
        trace.tie1.sum(axis=1).astype(np.float64)[None, :],
        trace.min2[None, :],
        trace.max2[None, :],
        trace.tie2.sum(axis=1).astype(np.float64)[None, :],
        dlogits[None, :],
    )


def _backward_batch(model, view, bits, v1, v2, min1, max1, tie_cnt1, min2, max2, tie_cnt2, dlogits):
    # head: dead neurons contribute their constant value to dS like any other
    d_scores = v2.T @ dlogits
    d_bias = dlogits.sum(axis=0)
    up2 = dlogits @ model.head.scores.T
    up2 = np.where(view.live2[None, :], up2, 0.0)  # dead neurons propagate nothing
    coef2 = np.divide(up2, tie_cnt2, out=np.zeros_like(up2), where=tie_cnt2 > 0)
    # tie set per neuron = active inputs achieving the min/max; each member
    # receives an equal share of the upstream gradient
    t2 = (v1[:, None, :] == v2[:, :, None]) & view.act2[None, :, :]
    contrib2 = coef2[:, :, None] * t2
    # neutral-element relaxation: e_j = c·v_j + (1−c)·η, so ∂e_j/∂W_conn = (v_j − η)/2
    d_conn2 = 0.5 * (np.einsum("bij,bj->ij", contrib2, v1) - view.neutral2[:, None] * contrib2.sum(axis=0))
    # operator blend: v = c_op·min + (1−c_op)·max, so ∂v/∂w_op = (min − max)/2
    d_op2 = 0.5 * (up2 * (min2 - max2)).sum(axis=0)
    up1 = contrib2.sum(axis=1)
    coef1 = np.divide(up1, tie_cnt1, out=np.zeros_like(up1), where=tie_cnt1 > 0)
    negated = bits[:, None, :] * view.neg_sign[None, :, :]
    t1 = (negated == v1[:, :, None]) & view.act1[None, :, :]
    contrib1 = coef1[:, :, None] * t1
    d_neg = np.einsum("bjd,bd->jd", contrib1, bits)
    d_conn1 = 0.5 * (np.einsum("bjd,bjd->jd", contrib1, negated) - view.neutral1[:, None] * contrib1.sum(axis=0))
    d_op1 = 0.5 * (up1 * (min1 - max1)).sum(axis=0)
    return GradSet(
        w_neg=d_neg,
        w_conn1=d_conn1,
        w_op1=d_op1,
        w_conn2=d_conn2,
        w_op2=d_op2,
        scores=d_scores,
        bias=d_bias,
    )


# ------------------------------------------------------------ training loop --


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the small-tabular protocol."""

    k1: int = 128
    k2: int = 128
    bins: int = 15
    binning: str = "ranint"
    l2: float = 1e-7
    lr0: float = 1e-2
    batch: int = 32
    epochs: int = 400
    decay_every: int = 100
    decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.k1, self.k2) < 1:
            raise TrainError("layer widths must be >= 1")
        if self.bins < 1:
            raise TrainError("bins must be >= 1")
        if self.binning not in FIT_METHODS + (BINARY,):
            raise TrainError(f"unknown binning method {self.binning!r}")
        if self.l2 < 0:
            raise TrainError("l2 must be >= 0")
        if self.lr0 <= 0:
            raise TrainError("lr0 must be > 0")
        if self.batch < 1 or self.epochs < 1 or self.decay_every < 1:
            raise TrainError("batch, epochs, decay_every must be >= 1")
        if not 0.0 < self.decay_factor <= 1.0:
            raise TrainError("decay_factor must be in (0, 1]")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_f1: float
    val_f1: Optional[float]
    live_rules: int
    elapsed_ms: float


@dataclass
class TrainHistory:
    records: list

    def final(self) -> EpochRecord:
        return self.records[-1]


HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "train_f1", "val_f1", "live_rules", "elapsed_ms")


def format_record(record: EpochRecord) -> list:
    return [
        str(record.epoch),
        repr(record.lr),
        repr(record.train_loss),
        repr(record.train_f1),
        "" if record.val_f1 is None else repr(record.val_f1),
        str(record.live_rules),
        f"{record.elapsed_ms:.3f}",
    ]


def write_history(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for record in history.records:
            writer.writerow(format_record(record))


def _argmax_predictions(model, bits):
    return predict_logits(model, bits).argmax(axis=1)


def train(dataset: Dataset, config: TrainConfig, validation: Optional[Dataset] = None):
    """Fit binarizer + model on ``dataset``; returns (model, history).

    Deterministic given (dataset, config): binarizer and model init use
    config.seed, batch shuffling uses a stream seeded [config.seed, 1].
    """
    if dataset.n == 0:
        raise TrainError("training dataset is empty")
    if config.binning == BINARY:
        binarizer = identity_binarizer(dataset.schema.feature_names)
    else:
        binarizer = fit(config.binning, dataset, config.bins, config.seed)
    x = transform_dataset(binarizer, dataset)
    y = dataset.labels
    x_val = transform_dataset(binarizer, validation) if validation is not None else None
    model = init_model(
        binarizer.width,
        config.k1,
        config.k2,
        dataset.class_count,
        config.seed,
        binarizer=binarizer,
        class_names=dataset.class_names,
    )
    conn2_init = model.layer2.w_conn.copy()
    params = model_params(model)
    adam = AdamState.for_params(params)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    records: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        lr = lr_schedule(config.lr0, epoch, config.decay_every, config.decay_factor)
        perm = shuffle_rng.permutation(dataset.n)
        loss_sum = 0.0
        for start in range(0, dataset.n, config.batch):
            idx = perm[start : start + config.batch]
            view = binary_view(model)
            bt = _forward_batch(view, model.head, x[idx])
            losses, dlogits = _cross_entropy_batch(bt.logits, y[idx])
            if not np.all(np.isfinite(losses)):
                raise TrainingDiverged(
                    f"training diverged: non-finite loss at epoch {epoch}", TrainHistory(records)
                )
            loss_sum += float(losses.sum())
            dlogits /= len(idx)
            grads = _backward_batch(
                model, view, bt.bits, bt.v1, bt.v2, bt.min1, bt.max1, bt.tie_cnt1,
                bt.min2, bt.max2, bt.tie_cnt2, dlogits,
            )
            grads.add_(l2_grad(model, config.l2))
            # ineligible second-layer connections receive no update at all
            grads.w_conn2[view.mask < 0] = 0.0
            adam_step(params, grads.as_dict(), adam, lr)
            # operators may have flipped: pin now-ineligible connections back
            # to their init values (and clear their moments) so masked weights
            # always compare bit-identical to initialization
            pinned = alternation_mask(model.layer1.w_op, model.layer2.w_op) < 0
            model.layer2.w_conn[pinned] = conn2_init[pinned]
            adam.m["w_conn2"][pinned] = 0.0
            adam.v["w_conn2"][pinned] = 0.0
        train_f1 = macro_f1(_argmax_predictions(model, x), y, dataset.class_count)
        val_f1 = None
        if x_val is not None:
            val_f1 = macro_f1(_argmax_predictions(model, x_val), validation.labels, dataset.class_count)
        records.append(
            EpochRecord(
                epoch=epoch,
                lr=lr,
                train_loss=loss_sum / dataset.n,
                train_f1=train_f1,
                val_f1=val_f1,
                live_rules=int(binary_view(model).live2.sum()),
                elapsed_ms=(time.perf_counter() - started) * 1000.0,
            )
        )
    return model, TrainHistory(records)
