"""Scikit-learn style estimator wrapping the contrastive trainer.

``fit`` runs the full training schedule on raw feature rows, ``transform``
maps rows to unit-norm embeddings, and ``predict_false_negatives``
exposes the per-anchor threshold decisions over the fitted set. The
class follows the BaseEstimator parameter contract, so it clones,
pipelines, and grid-searches like any other transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import RunConfig
from .encoder import forward
from .metrics import fn_scores, global_fn_masks, predicted_fn_fraction_full
from .numkit import cosine_block
from .runner import train_loop


class GlofndEncoder(BaseEstimator, TransformerMixin):
    """Contrastive embedding learner with global false-negative filtering.

    Parameters mirror the run-config keys. ``method`` selects the
    filtering scheme: ``"glofnd"`` learns per-anchor thresholds,
    ``"fnc"`` drops the per-batch top-k, ``"none"`` never filters.
    """

    def __init__(self, method="glofnd", alpha=0.01, tau=0.1, gamma=0.9,
                 d_hid=32, d_emb=8, epochs=20, batch_size=64, warmup_epoch=5,
                 noise_sigma=0.1, fallback_on_empty="keep_all",
                 lambda_mode="adam", lambda_lr=0.05, lambda_beta1=0.9,
                 lambda_beta2=0.98, track_lambda_during_warmup=False,
                 w_optimizer="adam", w_lr=1e-3, cosine_decay=False,
                 random_state=0):
        self.method = method
        self.alpha = alpha
        self.tau = tau
        self.gamma = gamma
        self.d_hid = d_hid
        self.d_emb = d_emb
        self.epochs = epochs
        self.batch_size = batch_size
        self.warmup_epoch = warmup_epoch
        self.noise_sigma = noise_sigma
        self.fallback_on_empty = fallback_on_empty
        self.lambda_mode = lambda_mode
        self.lambda_lr = lambda_lr
        self.lambda_beta1 = lambda_beta1
        self.lambda_beta2 = lambda_beta2
        self.track_lambda_during_warmup = track_lambda_during_warmup
        self.w_optimizer = w_optimizer
        self.w_lr = w_lr
        self.cosine_decay = cosine_decay
        self.random_state = random_state

    def _run_config(self, n_samples: int, d_in: int) -> RunConfig:
        return RunConfig(
            modality="unimodal", method=self.method, seed=self.random_state,
            n_classes=1, per_class=n_samples, d_in=d_in,
            noise_sigma=self.noise_sigma, d_hid=self.d_hid, d_emb=self.d_emb,
            tau=self.tau, gamma=self.gamma, alpha=self.alpha,
            fallback_on_empty=self.fallback_on_empty,
            lambda_mode=self.lambda_mode, lambda_lr=self.lambda_lr,
            lambda_beta1=self.lambda_beta1, lambda_beta2=self.lambda_beta2,
            track_lambda_during_warmup=self.track_lambda_during_warmup,
            w_optimizer=self.w_optimizer, w_lr=self.w_lr,
            cosine_decay=self.cosine_decay, epochs=self.epochs,
            batch_size=min(self.batch_size, n_samples),
            warmup_epoch=self.warmup_epoch,
        ).validate()

    def fit(self, X, y=None):
        """Train the encoder and thresholds on rows of ``X``.

        ``y`` is optional; when class labels are given they are used
        only to score false-negative identification after training
        (``fn_scores_`` attribute), never during training.
        """
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        cfg = self._run_config(X.shape[0], X.shape[1])
        result = train_loop(X, cfg)
        self.n_features_in_ = X.shape[1]
        self.encoder_params_ = result.params
        self.thresholds_ = result.thresholds
        self.surrogate_ = result.surrogate
        self.history_ = result.epoch_history
        embeddings, _ = forward(result.params, X)
        self.embeddings_ = embeddings
        self.predicted_fn_fraction_ = predicted_fn_fraction_full(
            embeddings, result.thresholds.lambdas)
        if y is not None:
            y = np.asarray(y).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError("y must have one label per row of X")
            pred, truth = global_fn_masks(embeddings, y,
                                          result.thresholds.lambdas)
            self.fn_scores_ = fn_scores(pred, truth)
        return self

    def transform(self, X):
        """Map rows of ``X`` to unit-norm embeddings."""
        check_is_fitted(self, "encoder_params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        embeddings, _ = forward(self.encoder_params_, X)
        return embeddings

    def predict_false_negatives(self) -> np.ndarray:
        """Boolean (n, n) mask over the fitted rows; entry (i, j) flags j
        as a false negative of anchor i (diagonal is always False)."""
        check_is_fitted(self, "encoder_params_")
        sims = cosine_block(self.embeddings_, self.embeddings_).values
        mask = sims > self.thresholds_.lambdas[:, None]
        np.fill_diagonal(mask, False)
        return mask
