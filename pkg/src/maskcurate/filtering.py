"""Pixel-level removal of likely mis-synthesized regions.

A pixel of class ``j`` with loss ``s`` is marked ignore when ``s > h_j * alpha``
(strictly), where ``h_j`` is the dataset-wide mean loss of class ``j``.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from maskcurate.core_io import (
    CurationConfig,
    DatasetIndex,
    LabelMap,
    LossMap,
    PathLike,
    SampleRecord,
    worker_count,
    write_label_map,
)
from maskcurate.errors import ConfigError, CurationError, DecodeError, ShapeError
from maskcurate.stats import DEFAULT_EPSILON, ClassStatsTable, load_sample_losses

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterReport:
    alpha: float
    totals: tuple[int, ...]
    filtered: tuple[int, ...]
    undefined_class_pixels: int = 0

    def __post_init__(self) -> None:
        if len(self.totals) != len(self.filtered):
            raise ShapeError("totals and filtered must have one entry per class")
        if any(f > t for f, t in zip(self.filtered, self.totals)):
            raise ValueError("a class cannot have more filtered pixels than pixels")

    @classmethod
    def empty(cls, num_classes: int, alpha: float) -> "FilterReport":
        return cls(alpha, (0,) * num_classes, (0,) * num_classes, 0)

    @property
    def filtered_fraction(self) -> float:
        total = sum(self.totals)
        return sum(self.filtered) / total if total else 0.0

    def __add__(self, other: "FilterReport") -> "FilterReport":
        if len(self.totals) != len(other.totals):
            raise ConfigError("cannot combine reports over different class counts")
        return FilterReport(
            alpha=self.alpha,
            totals=tuple(a + b for a, b in zip(self.totals, other.totals)),
            filtered=tuple(a + b for a, b in zip(self.filtered, other.filtered)),
            undefined_class_pixels=self.undefined_class_pixels + other.undefined_class_pixels,
        )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "classes": [{"id": j, "total": t, "filtered": f}
                        for j, (t, f) in enumerate(zip(self.totals, self.filtered))],
            "filtered_fraction": self.filtered_fraction,
            "undefined_class_pixels": self.undefined_class_pixels,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FilterReport":
        try:
            classes = sorted(doc["classes"], key=lambda c: c["id"])
            return cls(
                alpha=float(doc["alpha"]),
                totals=tuple(int(c["total"]) for c in classes),
                filtered=tuple(int(c["filtered"]) for c in classes),
                undefined_class_pixels=int(doc["undefined_class_pixels"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed filter report: {exc!r}") from exc

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: PathLike) -> "FilterReport":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise DecodeError(f"{path}: invalid JSON: {exc}") from exc


def noisy_pixel_mask(labels: LabelMap, losses: LossMap, stats: ClassStatsTable,
                     alpha: float, ignore_value: int = 255) -> np.ndarray:
    """Boolean grid of pixels that the criterion marks as noisy."""
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if tuple(labels.shape) != tuple(losses.shape):
        raise ShapeError(f"label map shape {labels.shape} != loss map shape {losses.shape}")
    k = stats.num_classes
    lab = labels.data
    valid = lab != ignore_value
    if (lab[valid] >= k).any():
        raise ConfigError(f"label map holds classes beyond the stats table's K={k}")
    # slot k stands in for the ignore value so the lookup never goes out of range
    idx = np.where(valid, lab, k).astype(np.intp)
    threshold = np.append(stats.mean_array() * float(alpha), np.inf)
    defined = np.append(stats.defined_mask(), False)
    return valid & defined[idx] & (losses.data.astype(np.float64) > threshold[idx])


def filter_image(labels: LabelMap, losses: LossMap, stats: ClassStatsTable, alpha: float,
                 ignore_value: int = 255) -> tuple[LabelMap, FilterReport]:
    noisy = noisy_pixel_mask(labels, losses, stats, alpha, ignore_value)
    k = stats.num_classes
    lab = labels.data
    valid = lab != ignore_value
    undefined = valid & ~np.append(stats.defined_mask(), False)[np.where(valid, lab, k).astype(np.intp)]

    out = lab.copy()
    out[noisy] = ignore_value
    totals = np.bincount(lab[valid].astype(np.intp), minlength=k)
    removed = np.bincount(lab[noisy].astype(np.intp), minlength=k)
    report = FilterReport(
        alpha=float(alpha),
        totals=tuple(int(t) for t in totals),
        filtered=tuple(int(f) for f in removed),
        undefined_class_pixels=int(undefined.sum()),
    )
    return LabelMap(out), report


def _filter_one(record: SampleRecord, stats: ClassStatsTable, alpha: float, config: CurationConfig,
                epsilon: float, out_path: Path) -> FilterReport:
    try:
        labels, losses = load_sample_losses(record, config, epsilon)
        filtered, report = filter_image(labels, losses, stats, alpha, config.ignore_value)
        write_label_map(filtered, out_path)
    except CurationError as exc:
        raise type(exc)(f"sample {record.sample_id!r}: {exc}") from exc
    except OSError as exc:
        raise OSError(f"sample {record.sample_id!r}: {exc}") from exc
    return report


def filter_dataset(index: DatasetIndex, stats: ClassStatsTable, alpha: float, out_dir: PathLike,
                   config: Optional[CurationConfig] = None, epsilon: float = DEFAULT_EPSILON,
                   threads: Optional[int] = None) -> FilterReport:
    """Write ``<out_dir>/masks/<id>.png`` for every sample and return the summed report.

    On failure every file written by this call is removed before re-raising.
    """
    if config is None:
        config = CurationConfig(num_classes=stats.num_classes)
    if config.num_classes != stats.num_classes:
        raise ConfigError(f"config K={config.num_classes} != stats K={stats.num_classes}")
    if not alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    masks_out = Path(out_dir) / "masks"
    created_dir = not masks_out.exists()
    masks_out.mkdir(parents=True, exist_ok=True)

    targets = [masks_out / f"{rec.sample_id}.png" for rec in index.records]
    preexisting = {p for p in targets if p.exists()}
    report = FilterReport.empty(stats.num_classes, float(alpha))
    try:
        n_workers = min(worker_count(threads), max(1, len(targets)))
        if n_workers == 1:
            reports = [_filter_one(r, stats, alpha, config, epsilon, p)
                       for r, p in zip(index.records, targets)]
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                futures = [pool.submit(_filter_one, r, stats, alpha, config, epsilon, p)
                           for r, p in zip(index.records, targets)]
                reports = [f.result() for f in futures]
    except BaseException:
        for p in targets:
            if p not in preexisting and p.exists():
                p.unlink()
        if created_dir and not any(masks_out.iterdir()):
            masks_out.rmdir()
        raise
    for r in reports:
        report = report + r
    if report.undefined_class_pixels:
        logger.warning("%d pixels belong to classes without a mean loss; kept unfiltered",
                       report.undefined_class_pixels)
    return report
