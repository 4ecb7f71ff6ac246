"""Unimodal contrastive loss stack with on-the-fly false-negative filtering.

A mini-batch contributes two augmented views per anchor. For anchor i
the in-batch negatives are both views of every other batch element; its
similarity row is compared against a learned per-anchor threshold and
everything strictly above the threshold is flagged as a false negative
and removed from the loss. A per-anchor moving average ``u`` tracks the
mean exponentiated similarity over the kept negatives, which lets the
gradient estimator stay accurate at small batch sizes: the estimator
divides the batch gradient of the kept-similarity mean by ``u`` rather
than by the noisy in-batch mean itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderGrads, EncoderParams, ForwardTape, backward, forward
from .errors import (
    BadConfigError,
    EmptyFilteredSetError,
    IndexOutOfRangeError,
    KTooLargeError,
    UninitializedSurrogateError,
)
from .numkit import SimilarityBlock, cosine_block
from .optim import AdamState, MomentumState
from .threshold import ThresholdState, update_lambda

FALLBACK_KEEP_ALL = "keep_all"
FALLBACK_SKIP_ANCHOR = "skip_anchor"
FALLBACKS = (FALLBACK_KEEP_ALL, FALLBACK_SKIP_ANCHOR)

METHOD_NONE = "none"
METHOD_GLOFND = "glofnd"
METHOD_FNC = "fnc"
METHODS = (METHOD_NONE, METHOD_GLOFND, METHOD_FNC)


@dataclass
class LossConfig:
    """Loss hyperparameters: temperature, surrogate rate, target FN fraction."""

    tau: float
    gamma: float = 0.9
    alpha: float = 0.01
    fallback_on_empty: str = FALLBACK_KEEP_ALL

    def __post_init__(self):
        if self.tau <= 0:
            raise BadConfigError(f"tau must be positive, got {self.tau}")
        if not (0.0 <= self.gamma <= 1.0):
            raise BadConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (0.0 <= self.alpha <= 1.0):
            raise BadConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.fallback_on_empty not in FALLBACKS:
            raise BadConfigError(
                f"fallback_on_empty must be one of {FALLBACKS}, "
                f"got {self.fallback_on_empty!r}"
            )


@dataclass
class SurrogateState:
    """Per-anchor moving averages of the mean exponentiated similarity.

    The first update of an anchor sets its value directly instead of
    blending with an arbitrary start value, so early loss terms are not
    biased by the initialization.
    """

    u: np.ndarray
    gamma: float
    initialized: np.ndarray

    @classmethod
    def init(cls, n: int, gamma: float) -> "SurrogateState":
        if not (0.0 <= gamma <= 1.0):
            raise BadConfigError(f"gamma must be in [0, 1], got {gamma}")
        return cls(u=np.zeros(n, dtype=np.float64), gamma=float(gamma),
                   initialized=np.zeros(n, dtype=bool))

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def to_json_dict(self) -> dict:
        return {"gamma": self.gamma, "u": self.u.tolist(),
                "initialized": self.initialized.tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SurrogateState":
        return cls(u=np.asarray(d["u"], dtype=np.float64),
                   gamma=float(d["gamma"]),
                   initialized=np.asarray(d["initialized"], dtype=bool))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "SurrogateState":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class BatchView:
    """One mini-batch: two augmented views per anchor plus the negative mask.

    Similarity rows run over 2B candidate columns: columns [0, B) are
    the first-view embeddings of the batch, columns [B, 2B) the second
    view. ``neg_mask[i]`` is True on the 2(B-1) columns that are valid
    negatives for anchor i, i.e. both of the anchor's own views are
    excluded.
    """

    anchor_ids: np.ndarray
    embeddings_a: np.ndarray
    embeddings_b: np.ndarray
    neg_mask: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.anchor_ids.shape[0]


def build_batch_view(anchor_ids, embeddings_a, embeddings_b) -> BatchView:
    ids = np.asarray(anchor_ids, dtype=np.int64).ravel()
    b = ids.size
    if embeddings_a.shape != embeddings_b.shape or embeddings_a.shape[0] != b:
        raise ValueError("view embeddings must share shape (batch, d_emb)")
    mask = np.ones((b, 2 * b), dtype=bool)
    idx = np.arange(b)
    mask[idx, idx] = False
    mask[idx, b + idx] = False
    return BatchView(anchor_ids=ids, embeddings_a=embeddings_a,
                     embeddings_b=embeddings_b, neg_mask=mask)


def batch_similarity(view: BatchView) -> SimilarityBlock:
    """Anchor-vs-candidate similarity block of shape (B, 2B)."""
    candidates = np.concatenate([view.embeddings_a, view.embeddings_b], axis=0)
    return cosine_block(view.embeddings_a, candidates)


@dataclass
class FilterResult:
    """Which negatives each anchor kept after thresholding.

    ``keep_mask`` records the raw decision sim <= lambda on valid
    negatives; empty-row fallbacks are applied later and never alter
    these masks. ``predicted_fn_fraction`` is 1 - kept/candidates over
    the whole batch.
    """

    keep_mask: np.ndarray
    kept_counts: np.ndarray
    predicted_fn_fraction: float


def _make_filter_result(keep_mask: np.ndarray, neg_mask: np.ndarray) -> FilterResult:
    kept_counts = keep_mask.sum(axis=1)
    total = int(neg_mask.sum())
    fraction = 1.0 - kept_counts.sum() / total if total else 0.0
    return FilterResult(keep_mask=keep_mask, kept_counts=kept_counts,
                        predicted_fn_fraction=float(fraction))


def threshold_filter(view: BatchView, sim: SimilarityBlock,
                     thresholds: ThresholdState) -> FilterResult:
    """Keep negatives with similarity <= the anchor's threshold."""
    lam = thresholds.lambdas[view.anchor_ids]
    keep = (sim.values <= lam[:, None]) & view.neg_mask
    return _make_filter_result(keep, view.neg_mask)


def unfiltered_result(view: BatchView) -> FilterResult:
    """FilterResult that keeps every valid negative (thresholds at 1)."""
    return _make_filter_result(view.neg_mask.copy(), view.neg_mask)


def fnc_filter(view: BatchView, sim: SimilarityBlock, k: int) -> FilterResult:
    """Mini-batch top-k baseline: drop each anchor's k most similar negatives.

    Ties are broken toward the lower candidate index. k == 0 keeps
    everything; k equal to the full negative count keeps nothing.
    """
    if k < 0:
        raise KTooLargeError("k must be nonnegative")
    neg_counts = view.neg_mask.sum(axis=1)
    if k > neg_counts.min():
        raise KTooLargeError(
            f"k={k} exceeds the per-anchor negative count {int(neg_counts.min())}"
        )
    keep = view.neg_mask.copy()
    if k > 0:
        masked = np.where(view.neg_mask, sim.values, -np.inf)
        order = np.argsort(-masked, axis=1, kind="stable")
        top = order[:, :k]
        rows = np.repeat(np.arange(view.batch_size), k)
        keep[rows, top.ravel()] = False
    return _make_filter_result(keep, view.neg_mask)


def g_hat(sim_row, keep_row, tau: float) -> float:
    """Mean of exp(sim / tau) over the kept entries of one row."""
    row = np.asarray(sim_row, dtype=np.float64).ravel()
    keep = np.asarray(keep_row, dtype=bool).ravel()
    if row.shape != keep.shape:
        raise ValueError("sim_row and keep_row must have equal length")
    if not keep.any():
        raise EmptyFilteredSetError("no kept negatives for this anchor")
    return float(np.exp(row[keep] / tau).mean())


def effective_keep(filt: FilterResult, neg_mask: np.ndarray,
                   fallback: str) -> tuple[np.ndarray, np.ndarray]:
    """Resolve empty rows per the fallback policy.

    Returns (effective keep mask, boolean row flags of anchors whose
    raw filter came up empty). Under ``keep_all`` an empty row reverts
    to all valid negatives; under ``skip_anchor`` it stays empty and the
    anchor contributes only its positive-pair term.
    """
    empty = filt.kept_counts == 0
    eff = filt.keep_mask
    if fallback == FALLBACK_KEEP_ALL and empty.any():
        eff = filt.keep_mask.copy()
        eff[empty] = neg_mask[empty]
    return eff, empty


def _loss_components(view: BatchView, sim: SimilarityBlock, filt: FilterResult,
                     cfg: LossConfig, full_negative_count: int):
    """Shared loss machinery: per-anchor positive sims, g-hat, count estimates.

    ``ghat`` is NaN on rows skipped by ``skip_anchor``; ``has_ghat``
    flags the rows where it is defined.
    """
    eff, _ = effective_keep(filt, view.neg_mask, cfg.fallback_on_empty)
    eff_counts = eff.sum(axis=1)
    has_ghat = eff_counts > 0
    exps = np.exp(sim.values / cfg.tau)
    ghat = np.full(view.batch_size, np.nan)
    np.divide((exps * eff).sum(axis=1), eff_counts,
              out=ghat, where=has_ghat)
    neg_counts = view.neg_mask.sum(axis=1)
    count_estimate = full_negative_count * (eff_counts / neg_counts)
    pos_sim = np.einsum("ij,ij->i", view.embeddings_a, view.embeddings_b)
    terms = -pos_sim
    terms = np.where(
        has_ghat,
        terms + cfg.tau * np.log(np.where(has_ghat, count_estimate * ghat, 1.0)),
        terms,
    )
    return terms, ghat, has_ghat, eff, eff_counts


def filtered_loss(view: BatchView, sim: SimilarityBlock,
                  thresholds: ThresholdState, cfg: LossConfig,
                  full_negative_count: int) -> tuple[float, FilterResult]:
    """Batch value of the threshold-filtered contrastive objective.

    Per anchor: ``-sim(z_i, z_i') + tau * log(N_kept_est * ghat_i)``
    where ``ghat_i`` averages exp(sim / tau) over the kept in-batch
    negatives and ``N_kept_est`` scales ``full_negative_count`` by the
    kept fraction. With all thresholds at 1 nothing is filtered and the
    value equals the unfiltered global contrastive objective on the
    batch.
    """
    filt = threshold_filter(view, sim, thresholds)
    terms, _, _, _, _ = _loss_components(view, sim, filt, cfg,
                                         full_negative_count)
    return float(terms.mean()), filt


def loss_given_filter(view: BatchView, sim: SimilarityBlock,
                      filt: FilterResult, cfg: LossConfig,
                      full_negative_count: int) -> float:
    """Loss value for an externally supplied filter (top-k baseline, none)."""
    terms, _, _, _, _ = _loss_components(view, sim, filt, cfg,
                                         full_negative_count)
    return float(terms.mean())


def update_u(state: SurrogateState, anchor_ids, ghat_values) -> SurrogateState:
    """Moving-average update of the listed anchors' surrogate values.

    The first update of an anchor assigns the estimate directly;
    afterwards ``u <- (1 - gamma) u + gamma ghat``. Updated in place and
    returned.
    """
    ids = np.asarray(anchor_ids, dtype=np.int64).ravel()
    vals = np.asarray(ghat_values, dtype=np.float64).ravel()
    if ids.size != vals.size:
        raise ValueError("anchor_ids and ghat_values must have equal length")
    if ids.size == 0:
        return state
    if np.any(ids < 0) or np.any(ids >= state.n):
        raise IndexOutOfRangeError("anchor id outside tracked population")
    fresh = ~state.initialized[ids]
    blended = (1.0 - state.gamma) * state.u[ids] + state.gamma * vals
    state.u[ids] = np.where(fresh, vals, blended)
    state.initialized[ids] = True
    return state


def grad_estimator(view: BatchView, sim: SimilarityBlock, filt: FilterResult,
                   u_state: SurrogateState, cfg: LossConfig,
                   tape_a: ForwardTape, tape_b: ForwardTape) -> EncoderGrads:
    """Stochastic gradient estimator of the filtered contrastive objective.

    Averages ``-grad sim(z_i, z_i') + tau * grad(ghat_i) / u_i`` over
    the batch, chaining through the encoder for both views. Dividing by
    the moving average ``u_i`` instead of the in-batch ``ghat_i`` is
    what decouples the estimator quality from the batch size. Anchors
    whose filter came up empty follow the configured fallback; under
    ``skip_anchor`` they contribute only the positive-pair term.
    """
    ids = view.anchor_ids
    eff, _ = effective_keep(filt, view.neg_mask, cfg.fallback_on_empty)
    eff_counts = eff.sum(axis=1)
    has_negatives = eff_counts > 0
    if not np.all(u_state.initialized[ids] | ~has_negatives):
        raise UninitializedSurrogateError(
            "surrogate u must be initialized for every contributing anchor"
        )
    b = view.batch_size
    u = np.where(has_negatives, u_state.u[ids], 1.0)
    exps = np.exp(sim.values / cfg.tau)
    denom = b * u * np.maximum(eff_counts, 1)
    weights = exps * eff / denom[:, None]
    candidates = np.concatenate([view.embeddings_a, view.embeddings_b], axis=0)
    grad_a = -view.embeddings_b / b + weights @ candidates
    grad_candidates = weights.T @ view.embeddings_a
    grad_a += grad_candidates[:b]
    grad_b = -view.embeddings_a / b + grad_candidates[b:]
    return backward(tape_a, grad_a) + backward(tape_b, grad_b)


@dataclass
class StepMetrics:
    loss: float
    predicted_fn_fraction: float
    lambda_mean: float
    lambda_min: float
    lambda_max: float
    kept_mean: float


@dataclass
class TrainState:
    """Everything one training step reads and writes."""

    params: EncoderParams
    opt: AdamState | MomentumState
    thresholds: ThresholdState
    surrogate: SurrogateState
    cfg: LossConfig
    full_negative_count: int
    method: str = METHOD_GLOFND
    lambda_mode: str = "adam"
    track_lambda_during_warmup: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadConfigError(f"method must be one of {METHODS}")


def train_step(state: TrainState, anchor_ids, inputs_a, inputs_b,
               filtering_active: bool, lr_scale: float = 1.0) -> StepMetrics:
    """One full optimization step on a sampled batch of two views.

    Order of operations: encode both views, update the per-anchor
    thresholds on the fresh similarities, filter, update the surrogate
    moving averages from the filtered estimates, then compute the
    gradient estimator and step the encoder optimizer. Before the
    warm-up boundary (``filtering_active=False``) the step is plain
    unfiltered training regardless of method.
    """
    emb_a, tape_a = forward(state.params, inputs_a)
    emb_b, tape_b = forward(state.params, inputs_b)
    view = build_batch_view(anchor_ids, emb_a, emb_b)
    sim = batch_similarity(view)

    glofnd = state.method == METHOD_GLOFND
    if glofnd and (filtering_active or state.track_lambda_during_warmup):
        update_lambda(state.thresholds, view.anchor_ids, sim,
                      mode=state.lambda_mode, neg_mask=view.neg_mask)

    if filtering_active and glofnd:
        filt = threshold_filter(view, sim, state.thresholds)
    elif filtering_active and state.method == METHOD_FNC:
        per_anchor = int(view.neg_mask.sum(axis=1).min())
        k = min(math.ceil(state.cfg.alpha * per_anchor), per_anchor)
        filt = fnc_filter(view, sim, k)
    else:
        filt = unfiltered_result(view)

    terms, ghat, has_ghat, _, _ = _loss_components(
        view, sim, filt, state.cfg, state.full_negative_count)
    loss = float(terms.mean())

    if has_ghat.any():
        update_u(state.surrogate, view.anchor_ids[has_ghat], ghat[has_ghat])

    grads = grad_estimator(view, sim, filt, state.surrogate, state.cfg,
                           tape_a, tape_b)
    state.opt.apply(state.params, grads, lr_scale=lr_scale)

    lam = state.thresholds.lambdas
    return StepMetrics(
        loss=loss,
        predicted_fn_fraction=filt.predicted_fn_fraction,
        lambda_mean=float(lam.mean()),
        lambda_min=float(lam.min()),
        lambda_max=float(lam.max()),
        kept_mean=float(filt.kept_counts.mean()),
    )
