"""Class-wise average losses over a labelled dataset.

Per-class loss sums and pixel counts are kept in a mergeable accumulator so
images can be processed independently and combined. The mean loss of class
``j`` is the total loss over its pixels divided by its pixel count; classes
without pixels stay undefined rather than collapsing to zero.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from maskcurate.core_io import (
    CurationConfig,
    DatasetIndex,
    LabelMap,
    LossMap,
    PathLike,
    ProbMap,
    SampleRecord,
    read_label_map,
    read_loss_map,
    read_prob_map,
    worker_count,
)
from maskcurate.errors import ConfigError, CurationError, DecodeError, ShapeError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-12
STATS_VERSION = 1


@dataclass(frozen=True, eq=False)
class ClassAccumulator:
    loss_sum: np.ndarray  # float64, shape (K,)
    pixel_count: np.ndarray  # int64, shape (K,)

    def __post_init__(self) -> None:
        sums = np.array(self.loss_sum, dtype=np.float64)
        counts = np.array(self.pixel_count, dtype=np.int64)
        if sums.ndim != 1 or sums.shape != counts.shape:
            raise ShapeError("loss_sum and pixel_count must be 1D arrays of equal length")
        if (sums < 0).any() or (counts < 0).any():
            raise ValidationError("accumulator sums and counts must be non-negative")
        if (sums[counts == 0] != 0).any():
            raise ValidationError("a class with zero pixels must have zero loss sum")
        sums.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "loss_sum", sums)
        object.__setattr__(self, "pixel_count", counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ClassAccumulator":
        return cls(np.zeros(num_classes, np.float64), np.zeros(num_classes, np.int64))

    @property
    def num_classes(self) -> int:
        return self.loss_sum.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClassAccumulator):
            return NotImplemented
        return (self.loss_sum.tobytes() == other.loss_sum.tobytes()
                and self.pixel_count.tobytes() == other.pixel_count.tobytes())

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ClassStatsTable:
    """Finalized per-class means; ``means[j]`` is ``None`` for classes never seen."""

    counts: tuple[int, ...]
    loss_sums: tuple[float, ...]
    means: tuple[Optional[float], ...]
    provenance: str = "synthetic"

    def __post_init__(self) -> None:
        if not len(self.counts) == len(self.loss_sums) == len(self.means):
            raise ShapeError("stats table columns have different lengths")
        for j, (n, m) in enumerate(zip(self.counts, self.means)):
            if (n > 0) != (m is not None):
                raise ValidationError(f"class {j}: mean must be defined iff count > 0")

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def mean(self, j: int) -> Optional[float]:
        return self.means[j]

    def defined_mask(self) -> np.ndarray:
        return np.array([m is not None for m in self.means], dtype=bool)

    def mean_array(self, fill: float = 0.0) -> np.ndarray:
        """Means as float64 with undefined classes set to ``fill`` (pair with ``defined_mask``)."""
        return np.array([fill if m is None else m for m in self.means], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "version": STATS_VERSION,
            "provenance": self.provenance,
            "num_classes": self.num_classes,
            "classes": [
                {"id": j, "count": int(n), "loss_sum": float(s), "mean": m}
                for j, (n, s, m) in enumerate(zip(self.counts, self.loss_sums, self.means))
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ClassStatsTable":
        try:
            if doc["version"] != STATS_VERSION:
                raise DecodeError(f"unsupported stats version {doc['version']!r}")
            k = int(doc["num_classes"])
            classes = sorted(doc["classes"], key=lambda c: c["id"])
            if [c["id"] for c in classes] != list(range(k)):
                raise DecodeError("stats classes must list ids 0..K-1 exactly once")
            return cls(
                counts=tuple(int(c["count"]) for c in classes),
                loss_sums=tuple(float(c["loss_sum"]) for c in classes),
                means=tuple(None if c["mean"] is None else float(c["mean"]) for c in classes),
                provenance=str(doc.get("provenance", "")),
            )
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed stats document: {exc!r}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: PathLike) -> "ClassStatsTable":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"{path}: invalid JSON: {exc}") from exc
        try:
            return cls.from_dict(doc)
        except DecodeError as exc:
            raise DecodeError(f"{path}: {exc}") from exc


def _check_dims(labels: LabelMap, other_shape: Sequence[int], what: str) -> None:
    if tuple(labels.shape) != tuple(other_shape):
        raise ShapeError(f"label map shape {labels.shape} != {what} shape {tuple(other_shape)}")


def compute_loss_map(probs: ProbMap, labels: LabelMap, epsilon: float = DEFAULT_EPSILON,
                     ignore_value: int = 255) -> LossMap:
    """Per-pixel cross-entropy ``-ln(max(p[label], epsilon))``; ignore pixels get 0."""
    if not 0 < epsilon <= 1e-3:
        raise ConfigError(f"epsilon must lie in (0, 1e-3], got {epsilon}")
    _check_dims(labels, probs.data.shape[1:], "probability map")
    lab = labels.data.astype(np.intp)
    ignore = lab == ignore_value
    if (lab[~ignore] >= probs.num_classes).any():
        raise ValidationError("label exceeds the probability map's class count")
    picked = np.take_along_axis(probs.data, np.where(ignore, 0, lab)[None], axis=0)[0]
    loss = -np.log(np.maximum(picked.astype(np.float64), epsilon))
    loss = np.where(ignore, 0.0, loss)
    # -ln(1) may come out as -0.0
    return LossMap(np.abs(loss))


def accumulate_image(acc: ClassAccumulator, labels: LabelMap, losses: LossMap,
                     ignore_value: int = 255) -> ClassAccumulator:
    _check_dims(labels, losses.shape, "loss map")
    k = acc.num_classes
    lab = labels.data.ravel()
    keep = lab != ignore_value
    lab = lab[keep].astype(np.intp)
    if lab.size and lab.max() >= k:
        raise ValidationError(f"label {int(lab.max())} out of range for K={k}")
    vals = losses.data.ravel()[keep].astype(np.float64)
    sums = np.bincount(lab, weights=vals, minlength=k)
    counts = np.bincount(lab, minlength=k).astype(np.int64)
    return ClassAccumulator(acc.loss_sum + sums, acc.pixel_count + counts)


def merge(a: ClassAccumulator, b: ClassAccumulator) -> ClassAccumulator:
    if a.num_classes != b.num_classes:
        raise ConfigError(f"cannot merge accumulators with K={a.num_classes} and K={b.num_classes}")
    return ClassAccumulator(a.loss_sum + b.loss_sum, a.pixel_count + b.pixel_count)


def finalize(acc: ClassAccumulator, provenance: str = "synthetic") -> ClassStatsTable:
    counts = tuple(int(n) for n in acc.pixel_count)
    sums = tuple(float(s) for s in acc.loss_sum)
    means = tuple(s / n if n > 0 else None for s, n in zip(sums, counts))
    return ClassStatsTable(counts=counts, loss_sums=sums, means=means, provenance=provenance)


def load_sample_losses(record: SampleRecord, config: CurationConfig,
                       epsilon: float = DEFAULT_EPSILON) -> tuple[LabelMap, LossMap]:
    """Read a sample's label map and its loss map (deriving it from probabilities if needed)."""
    labels = read_label_map(record.label_path, config)
    if record.loss_path is not None:
        losses = read_loss_map(record.loss_path, labels.shape)
    elif record.prob_path is not None:
        probs = read_prob_map(record.prob_path, labels.shape, config.num_classes)
        losses = compute_loss_map(probs, labels, epsilon, config.ignore_value)
    else:
        raise ValidationError("sample has neither a loss map nor a probability map")
    return labels, losses


def _image_accumulator(record: SampleRecord, config: CurationConfig, epsilon: float) -> ClassAccumulator:
    try:
        labels, losses = load_sample_losses(record, config, epsilon)
        return accumulate_image(ClassAccumulator.empty(config.num_classes), labels, losses,
                                config.ignore_value)
    except CurationError as exc:
        raise type(exc)(f"sample {record.sample_id!r}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"sample {record.sample_id!r}: {exc}") from exc


def compute_stats(index: DatasetIndex, config: CurationConfig, provenance: str = "synthetic",
                  epsilon: float = DEFAULT_EPSILON, threads: Optional[int] = None,
                  deterministic: bool = True) -> ClassStatsTable:
    """Class means over every sample of ``index``.

    Images are reduced to per-image subtotals (in parallel when ``threads`` > 1)
    and merged in sample-id order when ``deterministic``; otherwise in completion
    order, which agrees to rounding but is not bit-reproducible.
    """
    if isinstance(index, DatasetIndex):
        records = index.records
    else:
        records = DatasetIndex(tuple(index)).records
    if not records:
        raise ValidationError("cannot compute statistics over an empty dataset")

    acc = ClassAccumulator.empty(config.num_classes)
    n_workers = min(worker_count(threads), len(records))
    if n_workers == 1:
        for rec in records:
            acc = merge(acc, _image_accumulator(rec, config, epsilon))
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [pool.submit(_image_accumulator, rec, config, epsilon) for rec in records]
            ordered = futures if deterministic else as_completed(futures)
            for fut in ordered:
                acc = merge(acc, fut.result())

    table = finalize(acc, provenance)
    missing = [j for j, m in enumerate(table.means) if m is None]
    if missing:
        logger.warning("classes with no pixels (mean undefined): %s", missing)
    return table
