"""Synthetic labeled datasets whose class structure defines true false negatives.

Class centers sit on the unit sphere and points scatter around them
with isotropic noise, so a pair of samples is a ground-truth false
negative exactly when their labels match. Augmentation is additive
Gaussian input noise, deterministic per (seed, epoch, view, sample).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import BadConfigError, IndexOutOfRangeError
from .numkit import normalize_rows


@dataclass
class SyntheticDataset:
    points: np.ndarray   # (n, d_in)
    labels: np.ndarray   # (n,) ints < n_classes
    n_classes: int
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d_in(self) -> int:
        return self.points.shape[1]

    def fn_rate(self) -> float:
        """Exact fraction of sample pairs that are ground-truth false negatives.

        Equals sum_c n_c (n_c - 1) / (n (n - 1)); experiments can set
        the target FN fraction to this value.
        """
        _, counts = np.unique(self.labels, return_counts=True)
        n = self.n
        return float((counts * (counts - 1)).sum() / (n * (n - 1)))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label"] + [f"x{i}" for i in range(self.d_in)])
            for label, row in zip(self.labels, self.points):
                writer.writerow([int(label)] + [format(v, ".17g") for v in row])

    @classmethod
    def load_csv(cls, path, seed: int = 0) -> "SyntheticDataset":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "label":
                raise BadConfigError(f"{path}: expected a 'label' first column")
            labels, rows = [], []
            for rec in reader:
                labels.append(int(rec[0]))
                rows.append([float(v) for v in rec[1:]])
        labels = np.asarray(labels, dtype=np.int64)
        return cls(points=np.asarray(rows, dtype=np.float64), labels=labels,
                   n_classes=int(labels.max()) + 1, seed=seed)


@dataclass(frozen=True)
class AugmentationOp:
    """Additive Gaussian input noise; a stand-in for view augmentations."""

    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise BadConfigError("noise_sigma must be nonnegative")


def make_gaussian_mixture(n_classes: int, per_class: int, d_in: int,
                          spread: float, seed: int) -> SyntheticDataset:
    """Balanced Gaussian mixture with unit-sphere class centers.

    ``spread`` is the isotropic noise scale around each center;
    spread=0 collapses every class onto its center. Reproducible from
    the seed alone.
    """
    if n_classes < 1 or per_class < 1 or d_in < 1:
        raise BadConfigError("n_classes, per_class, d_in must be positive")
    if spread < 0:
        raise BadConfigError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = normalize_rows(rng.standard_normal((n_classes, d_in)))
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    noise = rng.standard_normal((n_classes * per_class, d_in))
    points = centers[labels] + spread * noise
    return SyntheticDataset(points=points, labels=labels,
                            n_classes=n_classes, seed=seed)


def make_paired_mixture(n_classes: int, per_class: int, d_image: int,
                        d_text: int, spread: float, seed: int,
                        ) -> tuple[SyntheticDataset, SyntheticDataset]:
    """Two aligned mixtures sharing labels, one per modality.

    Pair i's image and text observations scatter around their class's
    modality-specific center, so cross-modal false negatives are again
    defined by shared labels.
    """
    image = make_gaussian_mixture(n_classes, per_class, d_image, spread, seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    centers = normalize_rows(rng.standard_normal((n_classes, d_text)))
    noise = rng.standard_normal((image.n, d_text))
    text_points = centers[image.labels] + spread * noise
    text = SyntheticDataset(points=text_points, labels=image.labels.copy(),
                            n_classes=n_classes, seed=seed)
    return image, text


def augment_points(op: AugmentationOp, points: np.ndarray, indices,
                   view_id: int, epoch: int = 0) -> np.ndarray:
    """Noisy copies of the selected rows, deterministic per draw site.

    The noise depends only on (op.seed, epoch, view_id, row index), not
    on which subset of rows is requested or in what order.
    """
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= points.shape[0]):
        raise IndexOutOfRangeError("augmentation index outside the dataset")
    if op.noise_sigma == 0.0:
        return points[idx].copy()
    rng = np.random.default_rng(
        np.random.SeedSequence((op.seed, int(epoch), int(view_id))))
    noise = rng.standard_normal(points.shape)
    return points[idx] + op.noise_sigma * noise[idx]


def augment(op: AugmentationOp, dataset: SyntheticDataset, indices,
            view_id: int, epoch: int = 0) -> np.ndarray:
    return augment_points(op, dataset.points, indices, view_id, epoch)


def ground_truth_fn_mask(labels, anchor_id: int, negative_ids) -> np.ndarray:
    """True exactly where a negative shares the anchor's label."""
    labels = np.asarray(labels)
    neg = np.asarray(negative_ids, dtype=np.int64).ravel()
    if anchor_id < 0 or anchor_id >= labels.shape[0]:
        raise IndexOutOfRangeError("anchor_id outside the dataset")
    if neg.size and (neg.min() < 0 or neg.max() >= labels.shape[0]):
        raise IndexOutOfRangeError("negative id outside the dataset")
    return labels[neg] == labels[anchor_id]
