"""Experiment runner: seeded training loops, metric streams, reports.

All randomness flows from ``config.seed`` through named sub-streams
(data, augmentation, batching, init), so identical configs reproduce
byte-identical outputs. Incomplete trailing batches are dropped; every
epoch reshuffles.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bimodal as bm
from .config import RunConfig, build_config
from .contrastive import (
    LossConfig,
    SurrogateState,
    TrainState,
    train_step,
)
from .encoder import EncoderParams, forward, init_params
from .errors import ConfigError
from .metrics import (
    fn_scores,
    fn_scores_batchwise_fnc,
    fn_scores_batchwise_glofnd,
    fnc_batch_thresholds,
    global_fn_masks,
    optimal_lambda_full,
    predicted_fn_fraction_full,
    threshold_error,
)
from .numkit import normalize_rows
from .optim import AdamState, MomentumState, cosine_lr_scale
from .synthdata import (
    AugmentationOp,
    SyntheticDataset,
    augment_points,
    make_gaussian_mixture,
    make_paired_mixture,
)
from .threshold import ThresholdState, update_lambda

OUTPUT_ROOT_ENV = "GLOFND_OUTPUT_ROOT"

# named sub-stream ids hanging off config.seed
STREAM_DATA = 0
STREAM_AUGMENT = 1
STREAM_BATCH = 2
STREAM_INIT = 3
STREAM_AUGMENT_TEXT = 4
STREAM_INIT_TEXT = 5

UNIMODAL_COLUMNS = ("epoch", "step", "loss", "predicted_fn_fraction",
                    "lambda_mean", "lambda_min", "lambda_max", "kept_mean")
BIMODAL_COLUMNS = ("epoch", "step", "loss",
                   "predicted_fn_fraction_image", "predicted_fn_fraction_text",
                   "lambda_image_mean", "lambda_image_min", "lambda_image_max",
                   "lambda_text_mean", "lambda_text_min", "lambda_text_max",
                   "kept_image_mean", "kept_text_mean")

# full-pairwise evaluation is skipped above this dataset size
FULL_EVAL_MAX_N = 3000


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


def stream_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence((seed, stream)).generate_state(1)[0])


def _fmt(v) -> str:
    return format(float(v), ".12g")


def resolve_output_dir(cfg: RunConfig, output_root: str | None = None) -> Path:
    root = output_root if output_root is not None else os.environ.get(
        OUTPUT_ROOT_ENV, ".")
    out = Path(cfg.output_dir)
    return out if out.is_absolute() else Path(root) / out


def _make_w_optimizer(cfg: RunConfig):
    if cfg.w_optimizer == "adam":
        return AdamState(lr=cfg.w_lr, beta1=cfg.w_beta1, beta2=cfg.w_beta2)
    return MomentumState(lr=cfg.w_lr, momentum=cfg.w_momentum)


@dataclass
class TrainResult:
    params: EncoderParams
    thresholds: ThresholdState
    surrogate: SurrogateState
    epoch_history: list[dict] = field(default_factory=list)


def train_loop(points: np.ndarray, cfg: RunConfig, on_step=None) -> TrainResult:
    """Run the full unimodal training schedule on raw input rows."""
    n, d_in = points.shape
    params = init_params(d_in, cfg.d_hid, cfg.d_emb,
                         stream_rng(cfg.seed, STREAM_INIT))
    state = TrainState(
        params=params,
        opt=_make_w_optimizer(cfg),
        thresholds=ThresholdState.init(n, cfg.alpha, cfg.lambda_lr,
                                       cfg.lambda_beta1, cfg.lambda_beta2),
        surrogate=SurrogateState.init(n, cfg.gamma),
        cfg=LossConfig(tau=cfg.tau, gamma=cfg.gamma, alpha=cfg.alpha,
                       fallback_on_empty=cfg.fallback_on_empty),
        full_negative_count=2 * (n - 1),
        method=cfg.method,
        lambda_mode=cfg.lambda_mode,
        track_lambda_during_warmup=cfg.track_lambda_during_warmup,
    )
    op = AugmentationOp(cfg.noise_sigma, stream_seed(cfg.seed, STREAM_AUGMENT))
    batch_rng = stream_rng(cfg.seed, STREAM_BATCH)
    steps_per_epoch = n // cfg.batch_size
    if steps_per_epoch == 0:
        raise ConfigError("batch_size exceeds the dataset size")
    total_steps = cfg.epochs * steps_per_epoch

    result = TrainResult(params=params, thresholds=state.thresholds,
                         surrogate=state.surrogate)
    global_step = 0
    for epoch in range(cfg.epochs):
        perm = batch_rng.permutation(n)
        active = cfg.method != "none" and epoch >= cfg.warmup_epoch
        losses, fractions, kepts = [], [], []
        for step in range(steps_per_epoch):
            ids = perm[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            xa = augment_points(op, points, ids, 0, epoch)
            xb = augment_points(op, points, ids, 1, epoch)
            lr_scale = (cosine_lr_scale(global_step, total_steps)
                        if cfg.cosine_decay else 1.0)
            sm = train_step(state, ids, xa, xb, filtering_active=active,
                            lr_scale=lr_scale)
            global_step += 1
            losses.append(sm.loss)
            fractions.append(sm.predicted_fn_fraction)
            kepts.append(sm.kept_mean)
            if on_step is not None:
                on_step(epoch, step, sm)
        lam = state.thresholds.lambdas
        result.epoch_history.append({
            "epoch": epoch,
            "loss_mean": float(np.mean(losses)),
            "predicted_fn_fraction_mean": float(np.mean(fractions)),
            "lambda_mean": float(lam.mean()),
            "lambda_min": float(lam.min()),
            "lambda_max": float(lam.max()),
            "kept_mean": float(np.mean(kepts)),
            "filtering_active": bool(active),
        })
    return result


@dataclass
class BimodalTrainResult:
    towers: bm.TowerPair
    state: bm.BimodalState
    epoch_history: list[dict] = field(default_factory=list)


def bimodal_train_loop(image_points: np.ndarray, text_points: np.ndarray,
                       cfg: RunConfig, on_step=None) -> BimodalTrainResult:
    """Run the two-tower training schedule on aligned modality rows."""
    n = image_points.shape[0]
    if text_points.shape[0] != n:
        raise ConfigError("modalities must have the same number of rows")
    towers = bm.TowerPair(
        image=init_params(image_points.shape[1], cfg.d_hid, cfg.d_emb,
                          stream_rng(cfg.seed, STREAM_INIT)),
        text=init_params(text_points.shape[1], cfg.d_hid, cfg.d_emb,
                         stream_rng(cfg.seed, STREAM_INIT_TEXT)),
    )
    ts = bm.BimodalTrainState(
        towers=towers,
        opt_image=_make_w_optimizer(cfg),
        opt_text=_make_w_optimizer(cfg),
        state=bm.BimodalState.init(n, cfg.alpha, cfg.lambda_lr, cfg.gamma,
                                   cfg.lambda_beta1, cfg.lambda_beta2),
        cfg=LossConfig(tau=cfg.tau, gamma=cfg.gamma, alpha=cfg.alpha,
                       fallback_on_empty=cfg.fallback_on_empty),
        full_negative_count=n - 1,
        method=cfg.method,
        lambda_mode=cfg.lambda_mode,
        track_lambda_during_warmup=cfg.track_lambda_during_warmup,
    )
    op_img = AugmentationOp(cfg.noise_sigma,
                            stream_seed(cfg.seed, STREAM_AUGMENT))
    op_txt = AugmentationOp(cfg.noise_sigma,
                            stream_seed(cfg.seed, STREAM_AUGMENT_TEXT))
    batch_rng = stream_rng(cfg.seed, STREAM_BATCH)
    steps_per_epoch = n // cfg.batch_size
    if steps_per_epoch == 0:
        raise ConfigError("batch_size exceeds the dataset size")
    total_steps = cfg.epochs * steps_per_epoch

    result = BimodalTrainResult(towers=towers, state=ts.state)
    global_step = 0
    for epoch in range(cfg.epochs):
        perm = batch_rng.permutation(n)
        active = cfg.method != "none" and epoch >= cfg.warmup_epoch
        rows = []
        for step in range(steps_per_epoch):
            ids = perm[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            xi = augment_points(op_img, image_points, ids, 0, epoch)
            xt = augment_points(op_txt, text_points, ids, 1, epoch)
            lr_scale = (cosine_lr_scale(global_step, total_steps)
                        if cfg.cosine_decay else 1.0)
            sm = bm.bimodal_step(ts, ids, xi, xt, filtering_active=active,
                                 lr_scale=lr_scale)
            global_step += 1
            rows.append(sm)
            if on_step is not None:
                on_step(epoch, step, sm)
        lam_i = ts.state.lambda_image.lambdas
        lam_t = ts.state.lambda_text.lambdas
        result.epoch_history.append({
            "epoch": epoch,
            "loss_mean": float(np.mean([r.loss for r in rows])),
            "predicted_fn_fraction_image_mean":
                float(np.mean([r.predicted_fn_fraction_image for r in rows])),
            "predicted_fn_fraction_text_mean":
                float(np.mean([r.predicted_fn_fraction_text for r in rows])),
            "lambda_image_mean": float(lam_i.mean()),
            "lambda_text_mean": float(lam_t.mean()),
            "filtering_active": bool(active),
        })
    return result


def _evaluate_unimodal(result: TrainResult, dataset: SyntheticDataset,
                       cfg: RunConfig) -> dict:
    evaluation: dict = {"true_fn_rate": dataset.fn_rate()}
    if dataset.n > FULL_EVAL_MAX_N:
        evaluation["skipped"] = "dataset too large for full pairwise evaluation"
        return evaluation
    embeddings, _ = forward(result.params, dataset.points)
    lam = result.thresholds.lambdas
    evaluation["predicted_fn_fraction_full"] = predicted_fn_fraction_full(
        embeddings, lam)
    pred, truth = global_fn_masks(embeddings, dataset.labels, lam)
    scores = fn_scores(pred, truth)
    evaluation.update(fn_precision=scores.precision, fn_recall=scores.recall,
                      fn_f1=scores.f1)
    if cfg.alpha > 0:
        opt, _ = optimal_lambda_full(embeddings, cfg.alpha)
        err = threshold_error(lam, opt)
        evaluation.update(lambda_mae=err.mae, lambda_rmse=err.rmse)
        fnc_lam = fnc_batch_thresholds(embeddings, cfg.alpha, cfg.batch_size,
                                       cfg.seed)
        fnc_err = threshold_error(fnc_lam, opt)
        evaluation.update(fnc_lambda_mae=fnc_err.mae,
                          fnc_lambda_rmse=fnc_err.rmse)
        batch_glofnd = fn_scores_batchwise_glofnd(
            embeddings, dataset.labels, lam, cfg.batch_size, cfg.seed)
        batch_fnc = fn_scores_batchwise_fnc(
            embeddings, dataset.labels, cfg.alpha, cfg.batch_size, cfg.seed)
        evaluation.update(
            fn_f1_batch_thresholds=batch_glofnd.f1,
            fn_precision_batch_thresholds=batch_glofnd.precision,
            fn_recall_batch_thresholds=batch_glofnd.recall,
            fn_f1_batch_topk=batch_fnc.f1,
            fn_precision_batch_topk=batch_fnc.precision,
            fn_recall_batch_topk=batch_fnc.recall,
        )
    return evaluation


def _evaluate_bimodal(result: BimodalTrainResult, image: SyntheticDataset,
                      text: SyntheticDataset, cfg: RunConfig) -> dict:
    evaluation: dict = {"true_fn_rate": image.fn_rate()}
    if image.n > FULL_EVAL_MAX_N:
        evaluation["skipped"] = "dataset too large for full pairwise evaluation"
        return evaluation
    emb_img, _ = forward(result.towers.image, image.points)
    emb_txt, _ = forward(result.towers.text, text.points)
    sims = np.clip(emb_img @ emb_txt.T, -1.0, 1.0)
    off = ~np.eye(image.n, dtype=bool)
    truth = (image.labels[:, None] == text.labels[None, :]) & off
    for name, lam, values in (
            ("image", result.state.lambda_image.lambdas, sims),
            ("text", result.state.lambda_text.lambdas, sims.T)):
        pred = (values > lam[:, None]) & off
        scores = fn_scores(pred, truth if name == "image" else truth.T)
        flagged = pred.sum() / off.sum()
        evaluation[f"fn_precision_{name}"] = scores.precision
        evaluation[f"fn_recall_{name}"] = scores.recall
        evaluation[f"fn_f1_{name}"] = scores.f1
        evaluation[f"predicted_fn_fraction_full_{name}"] = float(flagged)
    return evaluation


@dataclass
class RunReport:
    config: dict
    final: dict
    evaluation: dict
    output_dir: str

    def to_dict(self) -> dict:
        # resolved paths are excluded so reruns stay byte-identical
        return {"config": self.config, "final": self.final,
                "evaluation": self.evaluation}


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg: RunConfig, output_root: str | None = None) -> RunReport:
    """Execute the full training schedule and write all artifacts.

    Emits per-step ``metrics.csv``, per-epoch ``epochs.jsonl``, final
    checkpoints under ``checkpoint/``, and ``report.json``. Identical
    (config, seed) produce byte-identical files.
    """
    cfg.validate()
    out = resolve_output_dir(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())

    columns = UNIMODAL_COLUMNS if cfg.modality == "unimodal" else BIMODAL_COLUMNS
    csv_path = out / "metrics.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)

        def on_step(epoch, step, sm):
            if cfg.modality == "unimodal":
                row = (epoch, step, sm.loss, sm.predicted_fn_fraction,
                       sm.lambda_mean, sm.lambda_min, sm.lambda_max,
                       sm.kept_mean)
            else:
                row = (epoch, step, sm.loss,
                       sm.predicted_fn_fraction_image,
                       sm.predicted_fn_fraction_text,
                       sm.lambda_image_mean, sm.lambda_image_min,
                       sm.lambda_image_max, sm.lambda_text_mean,
                       sm.lambda_text_min, sm.lambda_text_max,
                       sm.kept_image_mean, sm.kept_text_mean)
            writer.writerow([row[0], row[1], *map(_fmt, row[2:])])

        if cfg.modality == "unimodal":
            dataset = make_gaussian_mixture(
                cfg.n_classes, cfg.per_class, cfg.d_in, cfg.spread,
                stream_seed(cfg.seed, STREAM_DATA))
            result = train_loop(dataset.points, cfg, on_step=on_step)
        else:
            image, text = make_paired_mixture(
                cfg.n_classes, cfg.per_class, cfg.d_in, cfg.d_in_text,
                cfg.spread, stream_seed(cfg.seed, STREAM_DATA))
            result = bimodal_train_loop(image.points, text.points, cfg,
                                        on_step=on_step)

    with open(out / "epochs.jsonl", "w", encoding="utf-8") as fh:
        for record in result.epoch_history:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")

    ckpt = out / "checkpoint"
    ckpt.mkdir(exist_ok=True)
    if cfg.modality == "unimodal":
        result.params.save(ckpt / "encoder.json")
        result.thresholds.save(ckpt / "thresholds.json")
        result.surrogate.save(ckpt / "surrogate.json")
        dataset.save_csv(out / "dataset.csv")
        evaluation = _evaluate_unimodal(result, dataset, cfg)
    else:
        result.towers.image.save(ckpt / "encoder_image.json")
        result.towers.text.save(ckpt / "encoder_text.json")
        result.state.lambda_image.save(ckpt / "thresholds_image.json")
        result.state.lambda_text.save(ckpt / "thresholds_text.json")
        result.state.u_image.save(ckpt / "surrogate_image.json")
        result.state.u_text.save(ckpt / "surrogate_text.json")
        image.save_csv(out / "dataset_image.csv")
        text.save_csv(out / "dataset_text.csv")
        evaluation = _evaluate_bimodal(result, image, text, cfg)

    report = RunReport(config=cfg.to_dict(), final=result.epoch_history[-1],
                       evaluation=evaluation, output_dir=str(out))
    _write_json(out / "report.json", report.to_dict())

    if cfg.plots:
        _write_plots(out, csv_path, cfg.modality)
    return report


@dataclass
class OracleReport:
    config: dict
    n: int
    mae: float
    rmse: float
    coverage: float
    mean_interval_distance: float
    max_interval_distance: float
    predicted_fn_fraction_full: float
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "config": self.config, "n": self.n, "mae": self.mae,
            "rmse": self.rmse, "coverage": self.coverage,
            "mean_interval_distance": self.mean_interval_distance,
            "max_interval_distance": self.max_interval_distance,
            "predicted_fn_fraction_full": self.predicted_fn_fraction_full,
        }


def _alpha_zero_reference(embeddings: np.ndarray):
    from .threshold import QuantileSolution

    sims = np.clip(embeddings @ embeddings.T, -1.0, 1.0)
    n = sims.shape[0]
    solutions = []
    for i in range(n):
        top = float(np.delete(sims[i], i).max())
        solutions.append(QuantileSolution(lo=top, hi=1.0, kth_value=1.0, k=0))
    return np.ones(n), solutions


def streaming_threshold_fit(embeddings: np.ndarray, cfg: RunConfig,
                            ) -> ThresholdState:
    """Learn per-anchor thresholds on frozen embeddings by mini-batch updates."""
    n = embeddings.shape[0]
    thresholds = ThresholdState.init(n, cfg.alpha, cfg.lambda_lr,
                                     cfg.lambda_beta1, cfg.lambda_beta2)
    batch_rng = stream_rng(cfg.seed, STREAM_BATCH)
    steps_per_epoch = n // cfg.batch_size
    mask = ~np.eye(cfg.batch_size, dtype=bool)
    for _ in range(cfg.epochs):
        perm = batch_rng.permutation(n)
        for step in range(steps_per_epoch):
            ids = perm[step * cfg.batch_size:(step + 1) * cfg.batch_size]
            sims = np.clip(embeddings[ids] @ embeddings[ids].T, -1.0, 1.0)
            update_lambda(thresholds, ids, sims, mode=cfg.lambda_mode,
                          neg_mask=mask)
    return thresholds


def oracle_embeddings(cfg: RunConfig) -> np.ndarray:
    """Frozen embeddings for an oracle check, per ``cfg.oracle_source``."""
    if cfg.oracle_source == "random_unit":
        rng = stream_rng(cfg.seed, STREAM_DATA)
        n = cfg.n_classes * cfg.per_class
        return normalize_rows(rng.standard_normal((n, cfg.d_emb)))
    dataset = make_gaussian_mixture(cfg.n_classes, cfg.per_class, cfg.d_in,
                                    cfg.spread, stream_seed(cfg.seed, STREAM_DATA))
    if cfg.oracle_source == "checkpoint":
        if not cfg.checkpoint_dir:
            raise ConfigError("oracle_source=checkpoint needs checkpoint_dir")
        params = EncoderParams.load(Path(cfg.checkpoint_dir) / "encoder.json")
    else:
        params = init_params(cfg.d_in, cfg.d_hid, cfg.d_emb,
                             stream_rng(cfg.seed, STREAM_INIT))
    embeddings, _ = forward(params, dataset.points)
    return embeddings


def run_oracle_check(cfg: RunConfig,
                     output_root: str | None = None) -> OracleReport:
    """Streaming threshold learning on frozen embeddings vs the exact oracle.

    Reports MAE/RMSE of the learned thresholds against the exact
    order-statistics optimum, plus the fraction of anchors within
    ``oracle_tolerance`` of (or inside) their optimal interval.
    """
    cfg.validate()
    out = resolve_output_dir(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)
    embeddings = oracle_embeddings(cfg)
    thresholds = streaming_threshold_fit(embeddings, cfg)
    if cfg.alpha == 0:
        # nothing is ever above the optimum: any threshold at or above
        # the max similarity is optimal, and the projection cap is 1
        kth, solutions = _alpha_zero_reference(embeddings)
    else:
        kth, solutions = optimal_lambda_full(embeddings, cfg.alpha)
    lam = thresholds.lambdas
    err = threshold_error(lam, kth)
    distances = np.array([sol.distance(l) for sol, l in zip(solutions, lam)])
    coverage = float(np.mean(distances <= cfg.oracle_tolerance))
    report = OracleReport(
        config=cfg.to_dict(), n=embeddings.shape[0], mae=err.mae,
        rmse=err.rmse, coverage=coverage,
        mean_interval_distance=float(distances.mean()),
        max_interval_distance=float(distances.max()),
        predicted_fn_fraction_full=predicted_fn_fraction_full(embeddings, lam),
        output_dir=str(out),
    )
    _write_json(out / "oracle_report.json", report.to_dict())
    thresholds.save(out / "thresholds.json")
    return report


def run_eval(run_dir, output_root: str | None = None) -> dict:
    """Re-evaluate a finished run from its checkpoint and dataset export.

    Writes ``eval.json`` into the run directory and returns the summary:
    FN identification precision/recall/F1, threshold MAE/RMSE against
    the exact frozen-encoder optimum, and the predicted FN fraction.
    """
    run = Path(run_dir)
    if not run.is_absolute():
        root = output_root if output_root is not None else os.environ.get(
            OUTPUT_ROOT_ENV, ".")
        run = Path(root) / run
    config_path = run / "config.json"
    if not config_path.exists():
        raise ConfigError(f"no config.json under {run}")
    with open(config_path, encoding="utf-8") as fh:
        cfg_dict = json.load(fh)
    modality = cfg_dict.get("modality", "unimodal")
    ckpt = run / "checkpoint"

    if modality == "unimodal":
        dataset = SyntheticDataset.load_csv(run / "dataset.csv")
        if dataset.n > FULL_EVAL_MAX_N:
            raise ConfigError(
                f"eval needs full pairwise similarities; dataset of "
                f"{dataset.n} rows exceeds the {FULL_EVAL_MAX_N} limit"
            )
        params = EncoderParams.load(ckpt / "encoder.json")
        thresholds = ThresholdState.load(ckpt / "thresholds.json")
        embeddings, _ = forward(params, dataset.points)
        lam = thresholds.lambdas
        pred, truth = global_fn_masks(embeddings, dataset.labels, lam)
        scores = fn_scores(pred, truth)
        summary = {
            "fn_precision": scores.precision,
            "fn_recall": scores.recall,
            "fn_f1": scores.f1,
            "lambda_mae": None,
            "lambda_rmse": None,
            "predicted_fn_fraction": predicted_fn_fraction_full(embeddings, lam),
        }
        if thresholds.alpha > 0:
            opt, _ = optimal_lambda_full(embeddings, thresholds.alpha)
            err = threshold_error(lam, opt)
            summary["lambda_mae"] = err.mae
            summary["lambda_rmse"] = err.rmse
    else:
        image = SyntheticDataset.load_csv(run / "dataset_image.csv")
        text = SyntheticDataset.load_csv(run / "dataset_text.csv")
        towers = bm.TowerPair(
            image=EncoderParams.load(ckpt / "encoder_image.json"),
            text=EncoderParams.load(ckpt / "encoder_text.json"))
        state = bm.BimodalState(
            lambda_image=ThresholdState.load(ckpt / "thresholds_image.json"),
            lambda_text=ThresholdState.load(ckpt / "thresholds_text.json"),
            u_image=SurrogateState.load(ckpt / "surrogate_image.json"),
            u_text=SurrogateState.load(ckpt / "surrogate_text.json"))
        result = BimodalTrainResult(towers=towers, state=state)
        summary = _evaluate_bimodal(result, image, text, build_config(cfg_dict))
    _write_json(run / "eval.json", summary)
    return summary


SWEEP_AXES = ("alpha", "warmup_epoch", "batch_size")


@dataclass
class SweepReport:
    axis: str
    values: list
    runs: list[dict]
    output_dir: str

    def to_dict(self) -> dict:
        return {"axis": self.axis, "values": self.values, "runs": self.runs,
                "output_dir": self.output_dir}


def run_sweep(cfg: RunConfig, axis: str, values,
              output_root: str | None = None) -> SweepReport:
    """Grid of runs along one config axis; aggregates final metrics."""
    cfg.validate()
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = resolve_output_dir(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for value in values:
        try:
            typed = (int(value) if axis in ("warmup_epoch", "batch_size")
                     else float(value))
        except (TypeError, ValueError):
            raise ConfigError(
                f"sweep value {value!r} is not valid for axis {axis}"
            ) from None
        sub = replace(cfg, **{axis: typed},
                      output_dir=str(Path(cfg.output_dir) /
                                     f"sweep_{axis}_{value}"))
        report = run_experiment(sub, output_root)
        entry = {"value": typed, "final": report.final,
                 "evaluation": report.evaluation,
                 "output_dir": sub.output_dir}
        runs.append(entry)
    sweep = SweepReport(axis=axis, values=[r["value"] for r in runs],
                        runs=runs, output_dir=str(out))
    _write_json(out / "sweep.json", sweep.to_dict())
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        keys = sorted({k for r in runs for k in r["evaluation"]
                       if isinstance(r["evaluation"][k], (int, float))})
        writer.writerow([axis, "loss_mean", "predicted_fn_fraction_mean", *keys])
        for r in runs:
            final = r["final"]
            frac = final.get("predicted_fn_fraction_mean",
                             final.get("predicted_fn_fraction_image_mean", ""))
            writer.writerow([
                r["value"], _fmt(final["loss_mean"]), _fmt(frac),
                *(_fmt(r["evaluation"].get(k, math.nan)) for k in keys)])
    return sweep


def _svg_line_chart(series: dict[str, list[float]], title: str,
                    width: int = 640, height: int = 360) -> str:
    """Minimal SVG polyline chart; one line per named series."""
    pad = 40
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    all_vals = [v for vals in series.values() for v in vals if math.isfinite(v)]
    if not all_vals:
        all_vals = [0.0]
    lo, hi = min(all_vals), max(all_vals)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    n_pts = max(len(v) for v in series.values())
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" '
        f'height="{height - 2 * pad}" fill="none" stroke="#999"/>',
    ]
    for idx, (name, vals) in enumerate(series.items()):
        pts = []
        for i, v in enumerate(vals):
            x = pad + (width - 2 * pad) * (i / max(n_pts - 1, 1))
            y = height - pad - (height - 2 * pad) * ((v - lo) / (hi - lo))
            pts.append(f"{x:.2f},{y:.2f}")
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad + 4}" y="{pad + 16 + 16 * idx}" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _write_plots(out: Path, csv_path: Path, modality: str) -> None:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    loss = [float(r["loss"]) for r in rows]
    if modality == "unimodal":
        frac = {"predicted_fn_fraction":
                [float(r["predicted_fn_fraction"]) for r in rows]}
        lam = {"lambda_mean": [float(r["lambda_mean"]) for r in rows]}
    else:
        frac = {"image": [float(r["predicted_fn_fraction_image"]) for r in rows],
                "text": [float(r["predicted_fn_fraction_text"]) for r in rows]}
        lam = {"image": [float(r["lambda_image_mean"]) for r in rows],
               "text": [float(r["lambda_text_mean"]) for r in rows]}
    for name, series, title in (
            ("loss.svg", {"loss": loss}, "training loss"),
            ("predicted_fn_fraction.svg", frac, "predicted FN fraction"),
            ("lambda_mean.svg", lam, "mean threshold")):
        with open(plots / name, "w", encoding="utf-8") as fh:
            fh.write(_svg_line_chart(series, title))
            fh.write("\n")
