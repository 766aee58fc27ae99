"""Domain types and on-disk codecs for label, loss and probability maps.

Label maps are 8-bit single-channel PNGs (pixel value = class index, the
ignore sentinel marks excluded pixels). Loss maps are NPY files holding a
little-endian float32 ``(H, W)`` array; probability maps hold ``(K, H, W)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from maskcurate.errors import (
    ConfigError,
    DecodeError,
    EmptyDatasetError,
    MissingPairError,
    ShapeError,
    ValidationError,
)

PathLike = Union[str, os.PathLike]

LOSS_DTYPE = np.dtype("<f4")
PROB_SUM_TOL = 1e-5


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class CurationConfig:
    num_classes: int
    alpha: float = 1.25
    n_max: int = 20
    ignore_value: int = 255
    base_seed: int = 0

    def __post_init__(self) -> None:
        if int(self.num_classes) < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if not float(self.alpha) > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if int(self.n_max) < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.ignore_value < self.num_classes:
            raise ConfigError(
                f"ignore_value {self.ignore_value} collides with class range [0, {self.num_classes - 1}]"
            )
        if not 0 <= self.ignore_value <= 255:
            raise ConfigError(f"ignore_value must fit in 8 bits, got {self.ignore_value}")
        if not -(2**63) <= int(self.base_seed) < 2**64:
            raise ConfigError(f"base_seed must be a 64-bit integer, got {self.base_seed}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "CurationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "num_classes" not in mapping:
            raise ConfigError("config is missing num_classes")
        return cls(**mapping)

    @classmethod
    def from_json(cls, path: PathLike, **overrides) -> "CurationConfig":
        """Load a JSON config; non-None keyword overrides take precedence."""
        data = load_config_file(path)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)


def load_config_file(path: PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{path}: invalid JSON config: {exc}") from exc
    if not isinstance(data, dict):
        raise DecodeError(f"{path}: config must be a JSON object")
    return data


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Row-major grid of class indices, shape ``(height, width)``, uint8."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ShapeError(f"label map must be a non-empty 2D grid, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValidationError(f"label map must hold integers, got {arr.dtype}")
            if arr.min() < 0 or arr.max() > 255:
                raise ValidationError("label values must fit in 8 bits")
        object.__setattr__(self, "data", _frozen(np.array(arr, dtype=np.uint8, order="C")))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def validate(self, num_classes: int, ignore_value: int = 255) -> "LabelMap":
        bad = (self.data >= num_classes) & (self.data != ignore_value)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            value = int(self.data.flat[index])
            raise ValidationError(
                f"pixel {index} has value {value}, not a class in [0, {num_classes - 1}] "
                f"nor the ignore value {ignore_value}"
            )
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class LossMap:
    """Per-pixel non-negative loss (nats), float32 grid of shape ``(height, width)``."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ShapeError(f"loss map must be a non-empty 2D grid, got shape {arr.shape}")
        arr = np.array(arr, dtype=LOSS_DTYPE, order="C")
        bad = ~np.isfinite(arr) | (arr < 0)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"pixel {index} has invalid loss {arr.flat[index]!r}")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LossMap):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel class probabilities, float32 array of shape ``(K, height, width)``."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 3 or 0 in arr.shape:
            raise ShapeError(f"probability map must have shape (K, H, W), got {arr.shape}")
        arr = np.array(arr, dtype=LOSS_DTYPE, order="C")
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise ValidationError("probability map has negative or non-finite entries")
        sums = arr.sum(axis=0, dtype=np.float64)
        off = np.abs(sums - 1.0) > PROB_SUM_TOL
        if off.any():
            index = int(np.flatnonzero(off)[0])
            raise ValidationError(f"pixel {index} probabilities sum to {sums.flat[index]:.8f}, not 1")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    label_path: Path
    loss_path: Optional[Path] = None
    prob_path: Optional[Path] = None


@dataclass(frozen=True)
class DatasetIndex:
    records: tuple[SampleRecord, ...]

    def __post_init__(self) -> None:
        records = tuple(sorted(self.records, key=lambda r: r.sample_id))
        ids = [r.sample_id for r in records]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValidationError(f"duplicate sample ids: {dupes}")
        object.__setattr__(self, "records", records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def sample_ids(self) -> list[str]:
        return [r.sample_id for r in self.records]


def read_label_map(path: PathLike, config: Optional[CurationConfig] = None) -> LabelMap:
    """Decode an 8-bit single-channel PNG; validate against ``config`` when given."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P"):
                raise DecodeError(f"{path}: expected 8-bit single-channel image, got mode {img.mode!r}")
            arr = np.array(img, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode label map: {exc}") from exc
    except OSError as exc:
        if not os.path.exists(path):
            raise
        raise DecodeError(f"{path}: cannot decode label map: {exc}") from exc
    labels = LabelMap(arr)
    if config is not None:
        try:
            labels.validate(config.num_classes, config.ignore_value)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return labels


def write_label_map(m: LabelMap, path: PathLike) -> None:
    try:
        Image.fromarray(np.ascontiguousarray(m.data), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write label map to {path}: {exc}") from exc


def _load_npy(path: PathLike) -> np.ndarray:
    try:
        arr = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise
    except (ValueError, OSError, EOFError) as exc:
        raise DecodeError(f"{path}: cannot decode NPY array: {exc}") from exc
    if not isinstance(arr, np.ndarray) or arr.dtype != LOSS_DTYPE:
        raise DecodeError(f"{path}: expected little-endian float32 array, got {getattr(arr, 'dtype', type(arr))}")
    return arr


def read_loss_map(path: PathLike, expected_dims: Optional[tuple[int, int]] = None) -> LossMap:
    """Read a ``(H, W)`` float32 loss map; ``expected_dims`` is ``(height, width)``."""
    arr = _load_npy(path)
    if arr.ndim != 2:
        raise ShapeError(f"{path}: loss map must be 2D, got shape {arr.shape}")
    if expected_dims is not None and tuple(arr.shape) != tuple(expected_dims):
        raise ShapeError(f"{path}: loss map shape {arr.shape} != expected {tuple(expected_dims)}")
    try:
        return LossMap(arr)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_loss_map(m: LossMap, path: PathLike) -> None:
    with open(path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(m.data, dtype=LOSS_DTYPE), allow_pickle=False)


def read_prob_map(path: PathLike, expected_dims: Optional[tuple[int, int]] = None,
                  num_classes: Optional[int] = None) -> ProbMap:
    arr = _load_npy(path)
    if arr.ndim != 3:
        raise ShapeError(f"{path}: probability map must be 3D (K, H, W), got shape {arr.shape}")
    if expected_dims is not None and tuple(arr.shape[1:]) != tuple(expected_dims):
        raise ShapeError(f"{path}: probability map spatial shape {arr.shape[1:]} != expected {tuple(expected_dims)}")
    if num_classes is not None and arr.shape[0] != num_classes:
        raise ShapeError(f"{path}: probability map has {arr.shape[0]} classes, expected {num_classes}")
    try:
        return ProbMap(arr)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_prob_map(m: ProbMap, path: PathLike) -> None:
    with open(path, "wb") as fh:
        np.save(fh, np.ascontiguousarray(m.data, dtype=LOSS_DTYPE), allow_pickle=False)


def scan_dataset(root_dir: PathLike, config: Optional[CurationConfig] = None) -> DatasetIndex:
    """Index ``<root>/masks/*.png`` and pair each stem with ``losses/`` or ``probs/``.

    A loss map is preferred over a probability map when both exist. The result
    is sorted by sample id, independent of directory enumeration order.
    """
    root = Path(root_dir)
    masks_dir = root / "masks"
    losses_dir = root / "losses"
    probs_dir = root / "probs"
    if not masks_dir.is_dir():
        raise EmptyDatasetError(f"{root}: no masks/ directory")
    if not (losses_dir.is_dir() or probs_dir.is_dir()):
        raise MissingPairError([f"{root}: neither losses/ nor probs/ exists"])

    stems = sorted(p.stem for p in masks_dir.iterdir() if p.suffix == ".png" and p.is_file())
    if not stems:
        raise EmptyDatasetError(f"{masks_dir}: no mask files")

    records, missing = [], []
    for stem in stems:
        loss = losses_dir / f"{stem}.npy"
        prob = probs_dir / f"{stem}.npy"
        has_loss, has_prob = loss.is_file(), prob.is_file()
        if not (has_loss or has_prob):
            missing.append(stem)
            continue
        records.append(SampleRecord(
            sample_id=stem,
            label_path=masks_dir / f"{stem}.png",
            loss_path=loss if has_loss else None,
            prob_path=prob if has_prob and not has_loss else None,
        ))
    if missing:
        raise MissingPairError(missing)
    return DatasetIndex(tuple(records))


def list_mask_ids(root_dir: PathLike) -> list[str]:
    masks_dir = Path(root_dir) / "masks"
    if not masks_dir.is_dir():
        raise EmptyDatasetError(f"{root_dir}: no masks/ directory")
    ids = sorted(p.stem for p in masks_dir.iterdir() if p.suffix == ".png" and p.is_file())
    if not ids:
        raise EmptyDatasetError(f"{masks_dir}: no mask files")
    return ids


def worker_count(threads: Optional[int] = None) -> int:
    """Thread budget: explicit value, else ``FREEMASK_THREADS``, else CPU count."""
    if threads is None:
        env = os.environ.get("FREEMASK_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"FREEMASK_THREADS must be an integer, got {env!r}") from exc
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))
