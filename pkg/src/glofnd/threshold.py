"""Per-anchor similarity thresholds learned by projected stochastic subgradient.

Each anchor keeps a scalar threshold in [-1, 1] that tracks the
(1 - alpha)-quantile of its negative similarity scores: the top-alpha
fraction of negatives sit above it and are flagged as false negatives.
The quantile is characterized as the minimizer of a pinball-style convex
objective, which admits both an exact order-statistics solver (used as
an oracle) and cheap streaming subgradient updates on mini-batches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlphaOutOfRangeError,
    EmptyNegativesError,
    EmptyScoresError,
    IndexOutOfRangeError,
)

ADAM_EPS = 1e-8
# alpha*N within this distance of an integer is treated as integral, so the
# full optimal interval is reported instead of a point.
INTEGER_SNAP = 1e-9

LAMBDA_INIT = 1.0


@dataclass
class ThresholdState:
    """Per-anchor thresholds plus optimizer moments for streaming updates.

    ``lambdas[i]`` is anchor i's current threshold. ``m1``/``m2`` hold
    adaptive-update moment accumulators and ``step_count[i]`` counts how
    many updates anchor i has received (needed for bias correction).
    """

    lambdas: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    step_count: np.ndarray
    alpha: float
    lr: float
    beta1: float = 0.9
    beta2: float = 0.98

    @classmethod
    def init(cls, n: int, alpha: float, lr: float,
             beta1: float = 0.9, beta2: float = 0.98,
             init_value: float = LAMBDA_INIT) -> "ThresholdState":
        if not (0.0 <= alpha <= 1.0):
            raise AlphaOutOfRangeError(f"alpha must be in [0, 1], got {alpha}")
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        return cls(
            lambdas=np.full(n, init_value, dtype=np.float64),
            m1=np.zeros(n, dtype=np.float64),
            m2=np.zeros(n, dtype=np.float64),
            step_count=np.zeros(n, dtype=np.int64),
            alpha=float(alpha), lr=float(lr),
            beta1=float(beta1), beta2=float(beta2),
        )

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "lambda": self.lambdas.tolist(),
            "m1": self.m1.tolist(),
            "m2": self.m2.tolist(),
            "step_count": self.step_count.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ThresholdState":
        lam = np.asarray(d["lambda"], dtype=np.float64)
        state = cls(
            lambdas=lam,
            m1=np.asarray(d["m1"], dtype=np.float64),
            m2=np.asarray(d["m2"], dtype=np.float64),
            step_count=np.asarray(d["step_count"], dtype=np.int64),
            alpha=float(d["alpha"]), lr=float(d["lr"]),
            beta1=float(d["beta1"]), beta2=float(d["beta2"]),
        )
        if not (state.m1.shape == state.m2.shape == state.step_count.shape == lam.shape):
            raise ValueError("threshold checkpoint arrays have mismatched lengths")
        return state

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "ThresholdState":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class QuantileSolution:
    """Exact minimizer set of the threshold objective for one score set.

    ``kth_value`` is the k-th largest score with k = ceil(alpha * N).
    When alpha * N is an integer the whole interval [lo, hi] between the
    (k+1)-th and k-th largest scores is optimal; otherwise lo == hi ==
    kth_value is the unique minimizer.
    """

    lo: float
    hi: float
    kth_value: float
    k: int

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def distance(self, x: float) -> float:
        """Distance from ``x`` to the optimal interval (0 if inside)."""
        return max(self.lo - x, x - self.hi, 0.0)


def quantile_objective(nu: float, scores, alpha: float) -> float:
    """Pinball objective whose minimizer is the (1-alpha)-quantile.

    Evaluates ``nu * alpha + mean(max(s - nu, 0))`` over the scores.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptyScoresError("scores must be nonempty")
    return float(nu * alpha + np.maximum(s - nu, 0.0).mean())


def solve_quantile_exact(scores, alpha: float) -> QuantileSolution:
    """Minimize ``quantile_objective`` exactly via order statistics.

    With k = ceil(alpha * N), the k-th largest score always minimizes
    the objective. When alpha * N is an integer, every value between
    the (k+1)-th and the k-th largest score is optimal (for k == N the
    lower end extends to -1, the bottom of the similarity range); the
    full interval is reported so callers can test membership rather
    than equality.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptyScoresError("scores must be nonempty")
    if not (0.0 < alpha <= 1.0):
        raise AlphaOutOfRangeError(f"alpha must be in (0, 1], got {alpha}")
    n = s.size
    an = alpha * n
    nearest = round(an)
    integral = nearest >= 1 and abs(an - nearest) <= INTEGER_SNAP
    k = int(nearest) if integral else int(math.ceil(an))
    k = min(max(k, 1), n)
    order = np.sort(s)[::-1]
    kth = float(order[k - 1])
    if integral:
        lo = float(order[k]) if k < n else -1.0
        hi = kth
    else:
        lo = hi = kth
    return QuantileSolution(lo=lo, hi=hi, kth_value=kth, k=k)


def _fraction_above(sim_values: np.ndarray, lambdas: np.ndarray,
                    mask: np.ndarray | None) -> np.ndarray:
    """Per-row fraction of (masked) similarities strictly above lambda."""
    above = sim_values > lambdas[:, None]
    if mask is None:
        counts = above.sum(axis=1)
        totals = np.full(sim_values.shape[0], sim_values.shape[1], dtype=np.int64)
    else:
        above &= mask
        counts = above.sum(axis=1)
        totals = mask.sum(axis=1)
    if np.any(totals == 0):
        raise EmptyNegativesError("an anchor row has no negative candidates")
    return counts / totals


def lambda_subgradient(sim_row, lambda_i: float, alpha: float) -> float:
    """Stochastic subgradient of the threshold objective at ``lambda_i``.

    Returns ``alpha - mean(1[s > lambda_i])`` over the row. Ties
    (s == lambda_i) count as not above the threshold, matching the
    strict inequality used to flag false negatives.
    """
    row = np.asarray(sim_row, dtype=np.float64).ravel()
    if row.size == 0:
        raise EmptyNegativesError("sim_row must be nonempty")
    return float(alpha - np.mean(row > lambda_i))


def update_lambda(state: ThresholdState, anchor_ids, sim_block,
                  mode: str = "sgd",
                  neg_mask: np.ndarray | None = None) -> ThresholdState:
    """Apply one projected subgradient step to the listed anchors.

    ``sim_block`` holds one similarity row per listed anchor; rows not
    listed are left untouched. ``mode`` selects plain SGD or adaptive
    (Adam-style) updates; both project the result back into [-1, 1].
    ``neg_mask`` optionally marks which columns of each row are valid
    negatives (used when rows carry placeholder self-similarity slots).
    The state is updated in place and returned.
    """
    ids = np.asarray(anchor_ids, dtype=np.int64).ravel()
    values = sim_block.values if hasattr(sim_block, "values") else np.asarray(sim_block, dtype=np.float64)
    if values.shape[0] != ids.size:
        raise ValueError(
            f"sim block has {values.shape[0]} rows for {ids.size} anchors"
        )
    if ids.size == 0:
        return state
    if np.any(ids < 0) or np.any(ids >= state.n):
        raise IndexOutOfRangeError("anchor id outside tracked population")
    if mode not in ("sgd", "adam"):
        raise ValueError(f"unknown update mode {mode!r}")

    lam = state.lambdas[ids]
    grad = state.alpha - _fraction_above(values, lam, neg_mask)

    if mode == "sgd":
        new_lam = lam - state.lr * grad
    else:
        t = state.step_count[ids] + 1
        m1 = state.beta1 * state.m1[ids] + (1.0 - state.beta1) * grad
        m2 = state.beta2 * state.m2[ids] + (1.0 - state.beta2) * grad * grad
        m1_hat = m1 / (1.0 - state.beta1 ** t)
        m2_hat = m2 / (1.0 - state.beta2 ** t)
        new_lam = lam - state.lr * m1_hat / (np.sqrt(m2_hat) + ADAM_EPS)
        state.m1[ids] = m1
        state.m2[ids] = m2

    state.lambdas[ids] = np.clip(new_lam, -1.0, 1.0)
    state.step_count[ids] += 1
    return state
