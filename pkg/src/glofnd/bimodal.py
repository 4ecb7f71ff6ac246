"""Two-tower extension: cross-modal thresholds, surrogates, loss, gradients.

Paired data (one item per modality) is encoded by two independent
towers sharing an embedding dimension. The cross-modal similarity
matrix is computed once per step: image anchors read it by rows, text
anchors by columns. Each modality keeps its own per-anchor thresholds
and surrogate moving averages; the loss carries the positive pair with
coefficient -2 plus one temperature-scaled log term per modality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .contrastive import (
    METHOD_FNC,
    METHOD_GLOFND,
    METHODS,
    FilterResult,
    LossConfig,
    SurrogateState,
    _make_filter_result,
    effective_keep,
    update_u,
)
from .encoder import EncoderGrads, EncoderParams, ForwardTape, backward, forward
from .errors import BadConfigError, KTooLargeError, UninitializedSurrogateError
from .numkit import SimilarityBlock, cosine_block
from .optim import AdamState, MomentumState
from .threshold import ThresholdState, update_lambda


@dataclass
class TowerPair:
    """Image and text encoders with a shared embedding dimension."""

    image: EncoderParams
    text: EncoderParams

    def __post_init__(self):
        if self.image.d_emb != self.text.d_emb:
            raise BadConfigError(
                f"towers must share d_emb: {self.image.d_emb} vs {self.text.d_emb}"
            )


@dataclass
class BimodalState:
    """Per-modality thresholds and surrogates over the paired dataset."""

    lambda_image: ThresholdState
    lambda_text: ThresholdState
    u_image: SurrogateState
    u_text: SurrogateState

    @classmethod
    def init(cls, n: int, alpha: float, lambda_lr: float, gamma: float,
             beta1: float = 0.9, beta2: float = 0.98) -> "BimodalState":
        return cls(
            lambda_image=ThresholdState.init(n, alpha, lambda_lr, beta1, beta2),
            lambda_text=ThresholdState.init(n, alpha, lambda_lr, beta1, beta2),
            u_image=SurrogateState.init(n, gamma),
            u_text=SurrogateState.init(n, gamma),
        )


@dataclass
class PairBatchView:
    """A batch of aligned pairs; negatives exclude the anchor's own pair."""

    pair_ids: np.ndarray
    image_embeddings: np.ndarray
    text_embeddings: np.ndarray
    neg_mask: np.ndarray  # (B, B), False on the diagonal

    @property
    def batch_size(self) -> int:
        return self.pair_ids.shape[0]


def build_pair_view(pair_ids, image_embeddings, text_embeddings) -> PairBatchView:
    ids = np.asarray(pair_ids, dtype=np.int64).ravel()
    b = ids.size
    if image_embeddings.shape[0] != b or text_embeddings.shape[0] != b:
        raise ValueError("embeddings must be aligned with pair_ids")
    if image_embeddings.shape[1] != text_embeddings.shape[1]:
        raise ValueError("modalities must share the embedding dimension")
    mask = ~np.eye(b, dtype=bool)
    return PairBatchView(pair_ids=ids, image_embeddings=image_embeddings,
                         text_embeddings=text_embeddings, neg_mask=mask)


def pair_similarity(view: PairBatchView) -> SimilarityBlock:
    """Cross-modal block: entry (i, j) = sim(image i, text j)."""
    return cosine_block(view.image_embeddings, view.text_embeddings)


def _modality_components(sim_values, neg_mask, lambdas_batch, cfg,
                         full_negative_count):
    """Filter + g-hat + count estimate for one modality direction."""
    keep = (sim_values <= lambdas_batch[:, None]) & neg_mask
    filt = _make_filter_result(keep, neg_mask)
    eff, _ = effective_keep(filt, neg_mask, cfg.fallback_on_empty)
    eff_counts = eff.sum(axis=1)
    has_ghat = eff_counts > 0
    exps = np.exp(sim_values / cfg.tau)
    ghat = np.full(sim_values.shape[0], np.nan)
    np.divide((exps * eff).sum(axis=1), eff_counts, out=ghat, where=has_ghat)
    neg_counts = neg_mask.sum(axis=1)
    count_estimate = full_negative_count * (eff_counts / neg_counts)
    log_term = np.where(
        has_ghat,
        cfg.tau * np.log(np.where(has_ghat, count_estimate * ghat, 1.0)),
        0.0,
    )
    return filt, eff, eff_counts, has_ghat, ghat, log_term


def _fnc_components(sim_values, neg_mask, k, cfg, full_negative_count):
    """Top-k variant of :func:`_modality_components`."""
    if k > int(neg_mask.sum(axis=1).min()):
        raise KTooLargeError("k exceeds the per-anchor negative count")
    keep = neg_mask.copy()
    if k > 0:
        masked = np.where(neg_mask, sim_values, -np.inf)
        order = np.argsort(-masked, axis=1, kind="stable")
        rows = np.repeat(np.arange(sim_values.shape[0]), k)
        keep[rows, order[:, :k].ravel()] = False
    filt = _make_filter_result(keep, neg_mask)
    eff, _ = effective_keep(filt, neg_mask, cfg.fallback_on_empty)
    eff_counts = eff.sum(axis=1)
    has_ghat = eff_counts > 0
    exps = np.exp(sim_values / cfg.tau)
    ghat = np.full(sim_values.shape[0], np.nan)
    np.divide((exps * eff).sum(axis=1), eff_counts, out=ghat, where=has_ghat)
    neg_counts = neg_mask.sum(axis=1)
    count_estimate = full_negative_count * (eff_counts / neg_counts)
    log_term = np.where(
        has_ghat,
        cfg.tau * np.log(np.where(has_ghat, count_estimate * ghat, 1.0)),
        0.0,
    )
    return filt, eff, eff_counts, has_ghat, ghat, log_term


def bimodal_filtered_loss(view: PairBatchView, state: BimodalState,
                          cfg: LossConfig, full_negative_count: int,
                          sim: SimilarityBlock | None = None,
                          ) -> tuple[float, FilterResult, FilterResult]:
    """Symmetric filtered loss over a batch of pairs.

    Per pair: ``-2 sim(z_I, z_T) + tau log(N_I ghat_I) + tau log(N_T
    ghat_T)`` where the image direction filters text negatives by the
    image anchor's threshold (rows of the similarity matrix) and the
    text direction filters image negatives by the text anchor's
    threshold (columns).
    """
    if sim is None:
        sim = pair_similarity(view)
    lam_img = state.lambda_image.lambdas[view.pair_ids]
    lam_txt = state.lambda_text.lambdas[view.pair_ids]
    filt_img, _, _, _, _, log_img = _modality_components(
        sim.values, view.neg_mask, lam_img, cfg, full_negative_count)
    filt_txt, _, _, _, _, log_txt = _modality_components(
        sim.values.T, view.neg_mask, lam_txt, cfg, full_negative_count)
    pos = np.diagonal(sim.values)
    loss = float((-2.0 * pos + log_img + log_txt).mean())
    return loss, filt_img, filt_txt


@dataclass
class BimodalStepMetrics:
    loss: float
    predicted_fn_fraction_image: float
    predicted_fn_fraction_text: float
    lambda_image_mean: float
    lambda_image_min: float
    lambda_image_max: float
    lambda_text_mean: float
    lambda_text_min: float
    lambda_text_max: float
    kept_image_mean: float
    kept_text_mean: float


@dataclass
class BimodalTrainState:
    towers: TowerPair
    opt_image: AdamState | MomentumState
    opt_text: AdamState | MomentumState
    state: BimodalState
    cfg: LossConfig
    full_negative_count: int
    method: str = METHOD_GLOFND
    lambda_mode: str = "adam"
    track_lambda_during_warmup: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise BadConfigError(f"method must be one of {METHODS}")


def bimodal_step(ts: BimodalTrainState, pair_ids, image_inputs, text_inputs,
                 filtering_active: bool, lr_scale: float = 1.0,
                 ) -> BimodalStepMetrics:
    """One optimization step over a batch of image-text pairs.

    Mirrors the unimodal step per modality: thresholds first (on the
    fresh cross-modal similarities), then filtering, then surrogate
    updates, then the gradient estimator for both towers.
    """
    emb_img, tape_img = forward(ts.towers.image, image_inputs)
    emb_txt, tape_txt = forward(ts.towers.text, text_inputs)
    view = build_pair_view(pair_ids, emb_img, emb_txt)
    sim = pair_similarity(view)
    s = sim.values
    b = view.batch_size
    cfg = ts.cfg

    glofnd = ts.method == METHOD_GLOFND
    if glofnd and (filtering_active or ts.track_lambda_during_warmup):
        update_lambda(ts.state.lambda_image, view.pair_ids, s,
                      mode=ts.lambda_mode, neg_mask=view.neg_mask)
        update_lambda(ts.state.lambda_text, view.pair_ids, s.T,
                      mode=ts.lambda_mode, neg_mask=view.neg_mask)

    if filtering_active and glofnd:
        lam_img = ts.state.lambda_image.lambdas[view.pair_ids]
        lam_txt = ts.state.lambda_text.lambdas[view.pair_ids]
        img = _modality_components(s, view.neg_mask, lam_img, cfg,
                                   ts.full_negative_count)
        txt = _modality_components(s.T, view.neg_mask, lam_txt, cfg,
                                   ts.full_negative_count)
    elif filtering_active and ts.method == METHOD_FNC:
        per_anchor = b - 1
        k = min(math.ceil(cfg.alpha * per_anchor), per_anchor)
        img = _fnc_components(s, view.neg_mask, k, cfg, ts.full_negative_count)
        txt = _fnc_components(s.T, view.neg_mask, k, cfg, ts.full_negative_count)
    else:
        ones = np.ones(b)
        img = _modality_components(s, view.neg_mask, ones, cfg,
                                   ts.full_negative_count)
        txt = _modality_components(s.T, view.neg_mask, ones, cfg,
                                   ts.full_negative_count)

    filt_img, eff_img, c_img, has_img, ghat_img, log_img = img
    filt_txt, eff_txt, c_txt, has_txt, ghat_txt, log_txt = txt

    pos = np.diagonal(s)
    loss = float((-2.0 * pos + log_img + log_txt).mean())

    if has_img.any():
        update_u(ts.state.u_image, view.pair_ids[has_img], ghat_img[has_img])
    if has_txt.any():
        update_u(ts.state.u_text, view.pair_ids[has_txt], ghat_txt[has_txt])

    grads_img, grads_txt = bimodal_grad_estimator(
        view, sim, filt_img, filt_txt, ts.state, cfg, tape_img, tape_txt)
    ts.opt_image.apply(ts.towers.image, grads_img, lr_scale=lr_scale)
    ts.opt_text.apply(ts.towers.text, grads_txt, lr_scale=lr_scale)

    lam_i = ts.state.lambda_image.lambdas
    lam_t = ts.state.lambda_text.lambdas
    return BimodalStepMetrics(
        loss=loss,
        predicted_fn_fraction_image=filt_img.predicted_fn_fraction,
        predicted_fn_fraction_text=filt_txt.predicted_fn_fraction,
        lambda_image_mean=float(lam_i.mean()),
        lambda_image_min=float(lam_i.min()),
        lambda_image_max=float(lam_i.max()),
        lambda_text_mean=float(lam_t.mean()),
        lambda_text_min=float(lam_t.min()),
        lambda_text_max=float(lam_t.max()),
        kept_image_mean=float(filt_img.kept_counts.mean()),
        kept_text_mean=float(filt_txt.kept_counts.mean()),
    )


def bimodal_grad_estimator(view: PairBatchView, sim: SimilarityBlock,
                           filt_img: FilterResult, filt_txt: FilterResult,
                           state: BimodalState, cfg: LossConfig,
                           tape_img: ForwardTape, tape_txt: ForwardTape,
                           ) -> tuple[EncoderGrads, EncoderGrads]:
    """Gradient estimator for both towers.

    Per pair: ``-2 grad sim(z_I, z_T) + (tau / u_I) grad ghat_I +
    (tau / u_T) grad ghat_T`` averaged over the batch. Both modality
    terms read the same similarity matrix, so their coefficient
    matrices are combined before the single pair of matmuls against the
    opposite modality's embeddings.
    """
    ids = view.pair_ids
    b = view.batch_size
    s = sim.values
    exps = np.exp(s / cfg.tau)

    eff_img, _ = effective_keep(filt_img, view.neg_mask, cfg.fallback_on_empty)
    eff_txt, _ = effective_keep(filt_txt, view.neg_mask, cfg.fallback_on_empty)
    c_img = eff_img.sum(axis=1)
    c_txt = eff_txt.sum(axis=1)
    has_img = c_img > 0
    has_txt = c_txt > 0
    if not np.all(state.u_image.initialized[ids] | ~has_img):
        raise UninitializedSurrogateError("image surrogate not initialized")
    if not np.all(state.u_text.initialized[ids] | ~has_txt):
        raise UninitializedSurrogateError("text surrogate not initialized")

    u_img = np.where(has_img, state.u_image.u[ids], 1.0)
    u_txt = np.where(has_txt, state.u_text.u[ids], 1.0)
    denom_img = (b * u_img * np.maximum(c_img, 1))[:, None]
    denom_txt = b * u_txt * np.maximum(c_txt, 1)
    # image anchors read rows of s, text anchors read columns.
    coeff = eff_img * exps / denom_img + eff_txt.T * exps / denom_txt[None, :]
    np.fill_diagonal(coeff, coeff.diagonal() - 2.0 / b)
    grad_img = coeff @ view.text_embeddings
    grad_txt = coeff.T @ view.image_embeddings
    return backward(tape_img, grad_img), backward(tape_txt, grad_txt)
