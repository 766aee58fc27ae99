"""Mask-level hardness, ranking, and the per-rank synthesis count.

A mask's hardness is the sum, over its non-ignore pixels, of the mean loss of
each pixel's class. Masks are ranked hardest first and the mask at rank ``p``
of ``N`` receives ``ceil(n_max * (N - p) / N)`` synthetic samples.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from maskcurate.core_io import (
    CurationConfig,
    LabelMap,
    PathLike,
    read_label_map,
    worker_count,
)
from maskcurate.errors import ConfigError, CurationError, DecodeError, ValidationError
from maskcurate.stats import ClassStatsTable

CSV_FIELDS = ("mask_id", "rank", "hardness", "valid_pixels", "unknown_class_pixels", "count")


@dataclass(frozen=True)
class HardnessRecord:
    mask_id: str
    hardness: float
    valid_pixels: int
    unknown_class_pixels: int = 0

    def __post_init__(self) -> None:
        if self.hardness < 0:
            raise ValidationError(f"{self.mask_id}: hardness must be >= 0")
        if self.valid_pixels == 0 and self.hardness != 0:
            raise ValidationError(f"{self.mask_id}: a mask with no valid pixels has zero hardness")


@dataclass(frozen=True)
class RankedMasks:
    """Masks ordered hardest first; ``entries[p]`` is ``(p, record)``."""

    entries: tuple[tuple[int, HardnessRecord], ...]

    def __post_init__(self) -> None:
        for expected, (p, _) in enumerate(self.entries):
            if p != expected:
                raise ValidationError(f"ranks must run 0..N-1 without gaps; got {p} at position {expected}")
        for (_, a), (_, b) in zip(self.entries, self.entries[1:]):
            if (-a.hardness, a.mask_id) >= (-b.hardness, b.mask_id):
                raise ValidationError(f"masks {a.mask_id!r} and {b.mask_id!r} are out of order")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def records(self) -> list[HardnessRecord]:
        return [r for _, r in self.entries]

    @property
    def mask_ids(self) -> list[str]:
        return [r.mask_id for _, r in self.entries]


def mask_hardness(labels: LabelMap, stats: ClassStatsTable, mask_id: str = "",
                  ignore_value: int = 255, mean_per_pixel: bool = False) -> HardnessRecord:
    """Hardness of one mask.

    Pixels of classes without a defined mean add nothing and are counted in
    ``unknown_class_pixels``. ``mean_per_pixel`` divides by the valid pixel
    count instead of returning the plain sum.
    """
    k = stats.num_classes
    lab = labels.data.ravel()
    lab = lab[lab != ignore_value].astype(np.intp)
    if lab.size and lab.max() >= k:
        raise ConfigError(f"{mask_id or 'mask'}: label {int(lab.max())} beyond stats K={k}")
    counts = np.bincount(lab, minlength=k)
    defined = stats.defined_mask()
    means = stats.mean_array()
    # fixed class order keeps identical histograms bit-identical in hardness
    total = 0.0
    for j in range(k):
        if counts[j] and defined[j]:
            total += int(counts[j]) * means[j]
    valid = int(lab.size)
    if mean_per_pixel and valid:
        total /= valid
    return HardnessRecord(
        mask_id=mask_id,
        hardness=float(total),
        valid_pixels=valid,
        unknown_class_pixels=int(counts[~defined].sum()),
    )


def rank_masks(records: Iterable[HardnessRecord]) -> RankedMasks:
    records = list(records)
    seen, dupes = set(), set()
    for r in records:
        (dupes if r.mask_id in seen else seen).add(r.mask_id)
    if dupes:
        raise ValidationError(f"duplicate mask ids: {sorted(dupes)}")
    ordered = sorted(records, key=lambda r: (-r.hardness, r.mask_id))
    return RankedMasks(tuple(enumerate(ordered)))


def sample_count(p: int, n: int, n_max: int) -> int:
    """``ceil(n_max * (n - p) / n)``, computed in exact integer arithmetic."""
    if n < 1:
        raise ValidationError(f"total mask count must be >= 1, got {n}")
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    if not 0 <= p < n:
        raise ValidationError(f"rank {p} outside [0, {n - 1}]")
    return -(-n_max * (n - p) // n)


def score_masks(mask_paths: Sequence[tuple[str, PathLike]], stats: ClassStatsTable,
                config: CurationConfig, mean_per_pixel: bool = False,
                threads: Optional[int] = None) -> RankedMasks:
    """Read and score each ``(mask_id, path)`` pair, then rank."""
    if config.num_classes != stats.num_classes:
        raise ConfigError(f"config K={config.num_classes} != stats K={stats.num_classes}")

    def one(item):
        mask_id, path = item
        try:
            labels = read_label_map(path, config)
            return mask_hardness(labels, stats, mask_id, config.ignore_value, mean_per_pixel)
        except CurationError as exc:
            raise type(exc)(f"mask {mask_id!r}: {exc}") from exc

    n_workers = min(worker_count(threads), max(1, len(mask_paths)))
    if n_workers == 1:
        records = [one(item) for item in mask_paths]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(one, mask_paths))
    return rank_masks(records)


def dumps_csv(ranked: RankedMasks, counts: Optional[Sequence[int]] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for i, (p, r) in enumerate(ranked.entries):
        count = "" if counts is None else int(counts[i])
        writer.writerow([r.mask_id, p, repr(r.hardness), r.valid_pixels, r.unknown_class_pixels, count])
    return buf.getvalue()


def save_csv(ranked: RankedMasks, path: PathLike, counts: Optional[Sequence[int]] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_csv(ranked, counts))


def load_csv(path: PathLike) -> tuple[RankedMasks, list[Optional[int]]]:
    """Parse a hardness table; returns the ranking and the (possibly empty) count column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
            raise DecodeError(f"{path}: expected header {','.join(CSV_FIELDS)}")
        rows = list(reader)
    try:
        rows.sort(key=lambda row: int(row["rank"]))
        entries = tuple(
            (int(row["rank"]), HardnessRecord(
                mask_id=row["mask_id"],
                hardness=float(row["hardness"]),
                valid_pixels=int(row["valid_pixels"]),
                unknown_class_pixels=int(row["unknown_class_pixels"]),
            ))
            for row in rows
        )
        counts = [int(row["count"]) if row["count"] else None for row in rows]
    except ValueError as exc:
        raise DecodeError(f"{path}: malformed hardness row: {exc}") from exc
    try:
        return RankedMasks(entries), counts
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
