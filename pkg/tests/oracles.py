"""Independent reference implementations used as test oracles.

Everything here is deliberately written as plain scalar loops or brute
force so it shares no code path with the package internals it checks.
"""

from __future__ import annotations

import math

import numpy as np


def grid_objective(scores, alpha, step=1e-4, lo=-1.0, hi=1.0):
    """Evaluate the pinball objective on a uniform grid over [lo, hi].

    Returns (grid, values) with the endpoints included.
    """
    s = np.asarray(scores, dtype=np.float64)
    count = int(round((hi - lo) / step))
    grid = lo + step * np.arange(count + 1)
    values = np.empty_like(grid)
    chunk = 4096
    for start in range(0, grid.size, chunk):
        nu = grid[start:start + chunk]
        hinge = np.maximum(s[None, :] - nu[:, None], 0.0).mean(axis=1)
        values[start:start + chunk] = nu * alpha + hinge
    return grid, values


def naive_cosine(a, b):
    """Triple-loop cosine of unit rows (plain dot products)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[j, k]
            out[i, j] = acc
    return out


def naive_filtered_loss(emb_a, emb_b, lambdas, tau, full_negative_count,
                        fallback="keep_all"):
    """Scalar-loop reference of the filtered contrastive batch loss.

    Candidate j < B is the first view of batch element j, candidate
    B + j the second view; anchor i excludes candidates i and B + i.
    """
    emb_a = np.asarray(emb_a, dtype=np.float64)
    emb_b = np.asarray(emb_b, dtype=np.float64)
    batch = emb_a.shape[0]
    candidates = [emb_a[j] for j in range(batch)] + [emb_b[j] for j in range(batch)]
    total = 0.0
    for i in range(batch):
        pos = float(np.dot(emb_a[i], emb_b[i]))
        neg_idx = [j for j in range(2 * batch) if j not in (i, batch + i)]
        sims = {j: float(np.dot(emb_a[i], candidates[j])) for j in neg_idx}
        kept = [j for j in neg_idx if sims[j] <= lambdas[i]]
        if not kept:
            if fallback == "skip_anchor":
                total += -pos
                continue
            kept = list(neg_idx)
        ghat = sum(math.exp(sims[j] / tau) for j in kept) / len(kept)
        estimate = full_negative_count * len(kept) / len(neg_idx)
        total += -pos + tau * math.log(estimate * ghat)
    return total / batch


def naive_bimodal_loss(emb_img, emb_txt, lam_img, lam_txt, tau,
                       full_negative_count, fallback="keep_all"):
    """Scalar-loop reference of the symmetric two-tower filtered loss."""
    emb_img = np.asarray(emb_img, dtype=np.float64)
    emb_txt = np.asarray(emb_txt, dtype=np.float64)
    batch = emb_img.shape[0]
    total = 0.0
    for i in range(batch):
        pos = float(np.dot(emb_img[i], emb_txt[i]))
        term = -2.0 * pos
        for lam, anchor, others in (
                (lam_img[i], emb_img[i], emb_txt),
                (lam_txt[i], emb_txt[i], emb_img)):
            neg_idx = [j for j in range(batch) if j != i]
            sims = {j: float(np.dot(anchor, others[j])) for j in neg_idx}
            kept = [j for j in neg_idx if sims[j] <= lam]
            if not kept:
                if fallback == "skip_anchor":
                    continue
                kept = list(neg_idx)
            ghat = sum(math.exp(sims[j] / tau) for j in kept) / len(kept)
            estimate = full_negative_count * len(kept) / len(neg_idx)
            term += tau * math.log(estimate * ghat)
        total += term
    return total / batch


def numeric_param_grads(func, params, h=1e-5):
    """Central finite differences of ``func()`` w.r.t. every encoder weight.

    ``func`` must close over ``params`` and return a scalar; arrays are
    perturbed in place and restored.
    """
    grads = {}
    for name, arr in params.arrays().items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            saved = flat[idx]
            flat[idx] = saved + h
            f_plus = func()
            flat[idx] = saved - h
            f_minus = func()
            flat[idx] = saved
            gflat[idx] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_error(analytic: dict, numeric: dict) -> float:
    """Max over parameters of |a - n| / (max(|a|, |n|) + 1e-8)."""
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        rel = np.abs(a - n) / (np.maximum(np.abs(a), np.abs(n)) + 1e-8)
        worst = max(worst, float(rel.max()))
    return worst
