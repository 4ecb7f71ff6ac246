"""Evaluation of false-negative identification and threshold quality."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, forward
from .errors import BadConfigError, ShapeMismatchError
from .numkit import cosine_block
from .synthdata import AugmentationOp, SyntheticDataset, augment_points
from .threshold import QuantileSolution, solve_quantile_exact


@dataclass(frozen=True)
class FnScores:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn_count: int


@dataclass(frozen=True)
class ThresholdError:
    mae: float
    rmse: float


def fn_scores_from_counts(tp: int, fp: int, fn: int) -> FnScores:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return FnScores(precision=precision, recall=recall, f1=f1,
                    tp=int(tp), fp=int(fp), fn_count=int(fn))


def fn_scores(predicted_mask, truth_mask) -> FnScores:
    """Precision/recall/F1 of predicted false negatives against ground truth."""
    pred = np.asarray(predicted_mask, dtype=bool)
    truth = np.asarray(truth_mask, dtype=bool)
    if pred.shape != truth.shape:
        raise ShapeMismatchError(
            f"mask shapes differ: {pred.shape} vs {truth.shape}"
        )
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return fn_scores_from_counts(tp, fp, fn)


def threshold_error(lambda_learned, lambda_opt) -> ThresholdError:
    """Elementwise MAE and RMSE between learned and reference thresholds."""
    a = np.asarray(lambda_learned, dtype=np.float64).ravel()
    b = np.asarray(lambda_opt, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeMismatchError(f"lengths differ: {a.size} vs {b.size}")
    diff = np.abs(a - b)
    return ThresholdError(mae=float(diff.mean()),
                          rmse=float(np.sqrt((diff ** 2).mean())))


def _offdiag_rows(sim_values: np.ndarray) -> np.ndarray:
    """Drop the diagonal of a square block, leaving (n, n-1) rows."""
    n = sim_values.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return sim_values[mask].reshape(n, n - 1)


def optimal_lambda_full(embeddings, alpha: float,
                        ) -> tuple[np.ndarray, list[QuantileSolution]]:
    """Exact per-anchor optimal thresholds on a frozen embedding set.

    Anchor i's score set is its similarity to every other row; the
    returned array holds the k-th largest score per anchor and the list
    carries the full optimal intervals.
    """
    sims = cosine_block(embeddings, embeddings).values
    rows = _offdiag_rows(sims)
    solutions = [solve_quantile_exact(row, alpha) for row in rows]
    return np.array([s.kth_value for s in solutions]), solutions


def predicted_fn_fraction_full(embeddings, lambdas) -> float:
    """Fraction of all negative pairs flagged (sim strictly above threshold)."""
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    sims = cosine_block(embeddings, embeddings).values
    rows = _offdiag_rows(sims)
    if rows.shape[0] != lam.size:
        raise ShapeMismatchError("one threshold per embedding row required")
    flagged = rows > lam[:, None]
    return float(flagged.mean())


def global_fn_masks(embeddings, labels, lambdas,
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Full-dataset predicted/truth FN masks with the diagonal removed."""
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    sims = cosine_block(embeddings, embeddings).values
    pred = _offdiag_rows(sims) > lam[:, None]
    truth_full = labels[:, None] == labels[None, :]
    truth = _offdiag_rows(truth_full.astype(np.float64)) > 0.5
    return pred, truth


def approx_optimal_lambda(params: EncoderParams, dataset: SyntheticDataset,
                          op: AugmentationOp, anchor_ids, alpha: float,
                          sample_count: int, seed: int) -> np.ndarray:
    """Approximate per-anchor optimal thresholds under a frozen encoder.

    Each anchor's raw embedding is compared against augmented negatives.
    When ``sample_count`` covers the whole augmented negative set (two
    views of every other sample), the set is enumerated and the result
    is the exact order-statistics solution; otherwise ``sample_count``
    negatives are drawn per anchor with fresh augmentation noise.
    """
    if sample_count < 1:
        raise BadConfigError("sample_count must be positive")
    ids = np.asarray(anchor_ids, dtype=np.int64).ravel()
    n = dataset.n
    anchors, _ = forward(params, dataset.points[ids])
    full_size = 2 * (n - 1)
    out = np.empty(ids.size, dtype=np.float64)
    if sample_count >= full_size:
        view_a, _ = forward(params, augment_points(op, dataset.points,
                                                   np.arange(n), 0, 0))
        view_b, _ = forward(params, augment_points(op, dataset.points,
                                                   np.arange(n), 1, 0))
        sims_a = cosine_block(anchors, view_a).values
        sims_b = cosine_block(anchors, view_b).values
        for row, i in enumerate(ids):
            keep = np.arange(n) != i
            scores = np.concatenate([sims_a[row, keep], sims_b[row, keep]])
            out[row] = solve_quantile_exact(scores, alpha).kth_value
        return out
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    for row, i in enumerate(ids):
        others = np.delete(np.arange(n), i)
        js = rng.choice(others, size=sample_count, replace=True)
        noise = rng.standard_normal((sample_count, dataset.d_in))
        aug = dataset.points[js] + op.noise_sigma * noise
        negatives, _ = forward(params, aug)
        scores = cosine_block(anchors[row:row + 1], negatives).values[0]
        out[row] = solve_quantile_exact(scores, alpha).kth_value
    return out


def _permutation_batches(n: int, batch_size: int, rng: np.random.Generator,
                         n_rounds: int):
    """Disjoint batches per round, one shuffled pass each; trailing
    remainders smaller than the batch size are dropped."""
    for _ in range(n_rounds):
        perm = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield perm[start:start + batch_size]


def fnc_batch_thresholds(embeddings, alpha: float, batch_size: int,
                         seed: int, n_rounds: int = 20) -> np.ndarray:
    """Implicit per-batch thresholds of the mini-batch top-k baseline.

    For every sampled batch, each anchor's threshold is the k-th largest
    of its in-batch similarities with k = ceil(alpha * (B - 1)); the
    per-anchor values are averaged over the rounds in which the anchor
    appeared.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    if batch_size < 2 or batch_size > n:
        raise BadConfigError("batch_size must be in [2, n]")
    k = max(1, math.ceil(alpha * (batch_size - 1)))
    sums = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    for ids in _permutation_batches(n, batch_size, rng, n_rounds):
        sims = _offdiag_rows(cosine_block(emb[ids], emb[ids]).values)
        kth = np.sort(sims, axis=1)[:, -(k)]
        sums[ids] += kth
        counts[ids] += 1
    if np.any(counts == 0):
        raise BadConfigError(
            "some anchors were never sampled; increase n_rounds"
        )
    return sums / counts


def fn_scores_batchwise_glofnd(embeddings, labels, lambdas, batch_size: int,
                               seed: int, n_rounds: int = 1) -> FnScores:
    """Detection quality of learned thresholds over in-batch negative pairs."""
    emb = np.asarray(embeddings, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    tp = fp = fn = 0
    for ids in _permutation_batches(emb.shape[0], batch_size, rng, n_rounds):
        sims = _offdiag_rows(cosine_block(emb[ids], emb[ids]).values)
        pred = sims > lam[ids][:, None]
        truth_full = labels[ids][:, None] == labels[ids][None, :]
        truth = _offdiag_rows(truth_full.astype(np.float64)) > 0.5
        tp += int(np.sum(pred & truth))
        fp += int(np.sum(pred & ~truth))
        fn += int(np.sum(~pred & truth))
    return fn_scores_from_counts(tp, fp, fn)


def fn_scores_batchwise_fnc(embeddings, labels, alpha: float, batch_size: int,
                            seed: int, n_rounds: int = 1) -> FnScores:
    """Detection quality of the mini-batch top-k baseline on the same batches."""
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    k = max(1, math.ceil(alpha * (batch_size - 1)))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 2)))
    tp = fp = fn = 0
    for ids in _permutation_batches(emb.shape[0], batch_size, rng, n_rounds):
        sims = _offdiag_rows(cosine_block(emb[ids], emb[ids]).values)
        order = np.argsort(-sims, axis=1, kind="stable")
        pred = np.zeros_like(sims, dtype=bool)
        rows = np.repeat(np.arange(sims.shape[0]), k)
        pred[rows, order[:, :k].ravel()] = True
        truth_full = labels[ids][:, None] == labels[ids][None, :]
        truth = _offdiag_rows(truth_full.astype(np.float64)) > 0.5
        tp += int(np.sum(pred & truth))
        fp += int(np.sum(pred & ~truth))
        fn += int(np.sum(~pred & truth))
    return fn_scores_from_counts(tp, fp, fn)
