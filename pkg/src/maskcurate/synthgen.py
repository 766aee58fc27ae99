"""Seeded generator of label/loss map pairs with planted noisy pixels.

Labels are Voronoi cells over random sites, each site carrying a random class.
Clean losses are drawn around a per-class base mean; a fixed-size random
subset of pixels gets ``noise_multiplier`` times the base mean instead. The
returned truth grid marks exactly those planted pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from maskcurate.assemble import splitmix64
from maskcurate.core_io import (
    LabelMap,
    LossMap,
    PathLike,
    ProbMap,
    read_label_map,
    write_label_map,
    write_loss_map,
    write_prob_map,
)
from maskcurate.errors import ShapeError, ValidationError

RELATIVE_SIGMA = 0.05
MIN_LOSS_FRACTION = 1e-3


def default_class_means(num_classes: int) -> tuple[float, ...]:
    """Spread base means over [0.2, 1.6] nats so classes differ in hardness."""
    if num_classes == 1:
        return (0.5,)
    return tuple(0.2 + 1.4 * j / (num_classes - 1) for j in range(num_classes))


@dataclass(frozen=True)
class SceneSpec:
    width: int = 64
    height: int = 64
    num_classes: int = 8
    class_means: Optional[tuple[float, ...]] = None
    noise_fraction: float = 0.03
    noise_multiplier: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValidationError("scene dimensions must be positive")
        if not 1 <= self.num_classes <= 255:
            raise ValidationError("num_classes must lie in [1, 255]")
        means = self.class_means
        if means is None:
            means = default_class_means(self.num_classes)
        means = tuple(float(m) for m in means)
        object.__setattr__(self, "class_means", means)
        if len(means) != self.num_classes:
            raise ValidationError(f"need {self.num_classes} class means, got {len(means)}")
        if any(not (m > 0 and math.isfinite(m)) for m in means):
            raise ValidationError("class means must be positive and finite")
        if not 0 <= self.noise_fraction <= 0.1:
            raise ValidationError(f"noise_fraction must lie in [0, 0.1], got {self.noise_fraction}")
        if self.noise_multiplier < 3:
            raise ValidationError(f"noise_multiplier must be >= 3, got {self.noise_multiplier}")
        if not self.noise_multiplier * (1 - self.noise_fraction) > 2:
            raise ValidationError("planted noise would not be separable for alpha <= 2")


@dataclass(frozen=True, eq=False)
class PlantedTruth:
    data: np.ndarray  # bool, (H, W)

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=bool)
        if arr.ndim != 2:
            raise ShapeError("planted truth must be a 2D grid")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlantedTruth):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


def scene_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(splitmix64(seed & ((1 << 64) - 1))))


def voronoi_labels(rng: np.random.Generator, height: int, width: int, num_classes: int,
                   n_sites: Optional[int] = None) -> np.ndarray:
    if n_sites is None:
        n_sites = int(rng.integers(num_classes, 3 * num_classes + 1))
    ys = rng.integers(0, height, size=n_sites)
    xs = rng.integers(0, width, size=n_sites)
    classes = rng.integers(0, num_classes, size=n_sites)
    gy, gx = np.mgrid[0:height, 0:width]
    d2 = (gy[None] - ys[:, None, None]) ** 2 + (gx[None] - xs[:, None, None]) ** 2
    return classes[np.argmin(d2, axis=0)].astype(np.uint8)


def generate_scene(spec: SceneSpec) -> tuple[LabelMap, LossMap, PlantedTruth]:
    rng = scene_rng(spec.seed)
    h, w = spec.height, spec.width
    labels = voronoi_labels(rng, h, w, spec.num_classes)
    base = np.asarray(spec.class_means, dtype=np.float64)[labels]

    clean = rng.normal(loc=base, scale=RELATIVE_SIGMA * base)
    clean = np.maximum(clean, MIN_LOSS_FRACTION * base)

    n_planted = int(round(spec.noise_fraction * h * w))
    planted = np.zeros(h * w, dtype=bool)
    if n_planted:
        planted[rng.choice(h * w, size=n_planted, replace=False)] = True
    planted = planted.reshape(h, w)
    losses = np.where(planted, spec.noise_multiplier * base, clean)
    return LabelMap(labels), LossMap(losses), PlantedTruth(planted)


def probs_from_losses(labels: LabelMap, losses: LossMap, num_classes: int,
                      ignore_value: int = 255) -> ProbMap:
    """A probability map whose cross-entropy against ``labels`` reproduces ``losses``.

    The labelled class gets ``exp(-loss)``; the remainder is split evenly. Ignore
    pixels get a uniform distribution.
    """
    lab = labels.data.astype(np.intp)
    ignore = lab == ignore_value
    p_true = np.exp(-losses.data.astype(np.float64))
    if num_classes == 1:
        p_true = np.ones_like(p_true)
        rest = np.zeros_like(p_true)
    else:
        rest = (1.0 - p_true) / (num_classes - 1)
    probs = np.broadcast_to(rest, (num_classes,) + lab.shape).copy()
    np.put_along_axis(probs, np.where(ignore, 0, lab)[None], p_true[None], axis=0)
    probs[:, ignore] = 1.0 / num_classes
    return ProbMap(probs)


@dataclass(frozen=True)
class FilterScore:
    true_positives: int
    positives: int
    planted: int
    precision: Optional[float] = field(init=False)
    recall: Optional[float] = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "precision",
                           self.true_positives / self.positives if self.positives else None)
        object.__setattr__(self, "recall",
                           self.true_positives / self.planted if self.planted else None)

    def __add__(self, other: "FilterScore") -> "FilterScore":
        return FilterScore(self.true_positives + other.true_positives,
                           self.positives + other.positives, self.planted + other.planted)


def evaluate_filter(predicted: LabelMap, original: LabelMap, truth: PlantedTruth,
                    ignore_value: int = 255) -> FilterScore:
    """Precision/recall of newly ignored pixels against the planted set."""
    if not (predicted.shape == original.shape == truth.shape):
        raise ShapeError("predicted, original and truth grids must share dimensions")
    changed = predicted.data != original.data
    if (predicted.data[changed] != ignore_value).any():
        index = int(np.flatnonzero(changed & (predicted.data != ignore_value))[0])
        raise ValidationError(f"pixel {index} was changed to a non-ignore value")
    positives = changed  # only ever non-ignore -> ignore
    return FilterScore(
        true_positives=int((positives & truth.data).sum()),
        positives=int(positives.sum()),
        planted=int(truth.data.sum()),
    )


def scene_suite(n_scenes: int, base: SceneSpec) -> list[SceneSpec]:
    """``n_scenes`` specs sharing ``base`` except for a per-scene seed."""
    return [
        SceneSpec(width=base.width, height=base.height, num_classes=base.num_classes,
                  class_means=base.class_means, noise_fraction=base.noise_fraction,
                  noise_multiplier=base.noise_multiplier, seed=base.seed * 1_000_003 + i)
        for i in range(n_scenes)
    ]


def write_dataset(root: PathLike, specs: Sequence[SceneSpec], with_probs: bool = False,
                  with_losses: bool = True, prefix: str = "scene") -> list[str]:
    """Write ``masks/``, ``losses/`` (and optionally ``probs/``) and ``truth/`` under ``root``."""
    root = Path(root)
    dirs = ["masks", "truth"] + (["losses"] if with_losses else []) + (["probs"] if with_probs else [])
    for d in dirs:
        (root / d).mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(max(len(specs) - 1, 0))))
    ids = []
    for i, spec in enumerate(specs):
        sid = f"{prefix}_{i:0{width}d}"
        labels, losses, truth = generate_scene(spec)
        write_label_map(labels, root / "masks" / f"{sid}.png")
        if with_losses:
            write_loss_map(losses, root / "losses" / f"{sid}.npy")
        if with_probs:
            write_prob_map(probs_from_losses(labels, losses, spec.num_classes), root / "probs" / f"{sid}.npy")
        write_label_map(LabelMap(truth.data.astype(np.uint8)), root / "truth" / f"{sid}.png")
        ids.append(sid)
    return ids


def read_truth(path: PathLike) -> PlantedTruth:
    return PlantedTruth(read_label_map(path).data != 0)
