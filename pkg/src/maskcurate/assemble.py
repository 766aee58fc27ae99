"""Synthesis manifests with a fixed seed sequence, and training-set plans.

Every mask draws its ``n`` seeds from the head of one shared sequence, so the
``i``-th synthetic sample of any mask uses the same seed. Plans are
declarative: they list which real and synthetic samples a training run
consumes, plus the schedule factors it should apply.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from maskcurate.core_io import CurationConfig, PathLike
from maskcurate.errors import DecodeError, ValidationError
from maskcurate.hardness import RankedMasks, sample_count

MASK64 = (1 << 64) - 1
MANIFEST_VERSION = 1

JOINT_ITERATION_MULTIPLIER = 2.0
PRETRAIN_ITERATION_MULTIPLIER = 1.0
FINETUNE_LR_FACTOR = 0.5


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (the state is advanced before mixing)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fixed_seed_sequence(base_seed: int, n_max: int) -> list[int]:
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    return [splitmix64((base_seed + i) & MASK64) for i in range(n_max)]


@dataclass(frozen=True)
class ManifestEntry:
    mask_id: str
    rank: int
    hardness: float
    count: int
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class SamplingManifest:
    n_max: int
    base_seed: int
    entries: tuple[ManifestEntry, ...]
    version: int = MANIFEST_VERSION

    def __post_init__(self) -> None:
        n = len(self.entries)
        sequence = fixed_seed_sequence(self.base_seed, self.n_max)
        for p, e in enumerate(self.entries):
            if e.rank != p:
                raise ValidationError(f"manifest entry {e.mask_id!r} has rank {e.rank} at position {p}")
            if e.count != sample_count(p, n, self.n_max):
                raise ValidationError(f"manifest entry {e.mask_id!r}: count {e.count} disagrees with its rank")
            if list(e.seeds) != sequence[:e.count]:
                raise ValidationError(f"manifest entry {e.mask_id!r}: seeds are not the fixed sequence head")

    @property
    def total(self) -> int:
        return sum(e.count for e in self.entries)

    def synthetic_samples(self) -> list[tuple[str, int]]:
        """Every ``(mask_id, seed)`` pair, in rank order then seed order."""
        return [(e.mask_id, s) for e in self.entries for s in e.seeds]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "n_max": self.n_max,
            "base_seed": self.base_seed,
            "entries": [
                {"mask_id": e.mask_id, "rank": e.rank, "hardness": e.hardness,
                 "count": e.count, "seeds": list(e.seeds)}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SamplingManifest":
        try:
            if doc["version"] != MANIFEST_VERSION:
                raise DecodeError(f"unsupported manifest version {doc['version']!r}")
            entries = tuple(
                ManifestEntry(str(e["mask_id"]), int(e["rank"]), float(e["hardness"]),
                              int(e["count"]), tuple(int(s) for s in e["seeds"]))
                for e in doc["entries"]
            )
            return cls(n_max=int(doc["n_max"]), base_seed=int(doc["base_seed"]), entries=entries)
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed manifest: {exc!r}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: PathLike) -> "SamplingManifest":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(doc)


def rank_counts(n: int, n_max: int) -> list[int]:
    return [sample_count(p, n, n_max) for p in range(n)]


def build_manifest(ranked: RankedMasks, config: CurationConfig) -> SamplingManifest:
    n = len(ranked)
    if n == 0:
        raise ValidationError("cannot build a manifest from zero masks")
    sequence = fixed_seed_sequence(config.base_seed, config.n_max)
    entries = []
    for p, record in ranked.entries:
        count = sample_count(p, n, config.n_max)
        entries.append(ManifestEntry(record.mask_id, p, record.hardness, count, tuple(sequence[:count])))
    return SamplingManifest(n_max=config.n_max, base_seed=config.base_seed, entries=tuple(entries))


@dataclass(frozen=True)
class TrainingPlan:
    mode: str
    real_entries: tuple[str, ...]
    synthetic_entries: tuple[tuple[str, int], ...]
    iteration_multiplier: float
    finetune_lr_factor: Optional[float] = None
    shuffle_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in ("joint", "pretrain_finetune"):
            raise ValidationError(f"unknown plan mode {self.mode!r}")
        if self.mode == "joint" and len(self.real_entries) != len(self.synthetic_entries):
            raise ValidationError("a joint plan needs as many real entries as synthetic entries")
        if self.mode == "pretrain_finetune" and self.finetune_lr_factor is None:
            raise ValidationError("a pretrain plan needs a fine-tune learning-rate factor")

    def header(self) -> dict:
        return {
            "type": "header",
            "mode": self.mode,
            "iteration_multiplier": self.iteration_multiplier,
            "finetune_lr_factor": self.finetune_lr_factor,
            "shuffle_seed": self.shuffle_seed,
            "num_real": len(self.real_entries),
            "num_synthetic": len(self.synthetic_entries),
        }

    def dumps(self) -> str:
        lines = [json.dumps(self.header())]
        lines += [json.dumps({"source": "real", "id": rid, "seed": None}) for rid in self.real_entries]
        lines += [json.dumps({"source": "synthetic", "id": mid, "seed": seed})
                  for mid, seed in self.synthetic_entries]
        return "\n".join(lines) + "\n"

    def save(self, path: PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "TrainingPlan":
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise DecodeError(f"invalid plan line: {exc}") from exc
        if not rows or rows[0].get("type") != "header":
            raise DecodeError("plan must start with a header record")
        head, body = rows[0], rows[1:]
        try:
            real = tuple(r["id"] for r in body if r["source"] == "real")
            synth = tuple((r["id"], int(r["seed"])) for r in body if r["source"] == "synthetic")
            if len(real) + len(synth) != len(body):
                raise DecodeError("plan records must have source 'real' or 'synthetic'")
            if (head["num_real"], head["num_synthetic"]) != (len(real), len(synth)):
                raise DecodeError("plan header counts disagree with its records")
            return cls(mode=head["mode"], real_entries=real, synthetic_entries=synth,
                       iteration_multiplier=float(head["iteration_multiplier"]),
                       finetune_lr_factor=head["finetune_lr_factor"],
                       shuffle_seed=head.get("shuffle_seed"))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed plan record: {exc!r}") from exc

    @classmethod
    def load(cls, path: PathLike) -> "TrainingPlan":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.loads(fh.read())


def _check_real_ids(real_ids: Sequence[str]) -> list[str]:
    real_ids = [str(r) for r in real_ids]
    if not real_ids:
        raise ValidationError("real id list is empty")
    if len(set(real_ids)) != len(real_ids):
        raise ValidationError("real ids must be unique")
    return real_ids


def joint_training_plan(real_ids: Sequence[str], manifest: SamplingManifest,
                        shuffle_seed: int = 0) -> TrainingPlan:
    """Over-sample the real list to the synthetic total.

    The real list is repeated ``S // R`` times and the ``S % R`` extra slots go
    to the head of a seeded shuffle of the real ids, so multiplicities differ
    by at most one.
    """
    real_ids = _check_real_ids(real_ids)
    synthetic = manifest.synthetic_samples()
    reps, extra = divmod(len(synthetic), len(real_ids))
    real_entries = real_ids * reps
    if extra:
        shuffled = list(real_ids)
        random.Random(shuffle_seed).shuffle(shuffled)
        real_entries += shuffled[:extra]
    return TrainingPlan(
        mode="joint",
        real_entries=tuple(real_entries),
        synthetic_entries=tuple(synthetic),
        iteration_multiplier=JOINT_ITERATION_MULTIPLIER,
        finetune_lr_factor=None,
        shuffle_seed=shuffle_seed,
    )


def pretrain_plan(real_ids: Sequence[str], manifest: SamplingManifest,
                  finetune_lr_factor: float = FINETUNE_LR_FACTOR) -> TrainingPlan:
    real_ids = _check_real_ids(real_ids)
    return TrainingPlan(
        mode="pretrain_finetune",
        real_entries=tuple(real_ids),
        synthetic_entries=tuple(manifest.synthetic_samples()),
        iteration_multiplier=PRETRAIN_ITERATION_MULTIPLIER,
        finetune_lr_factor=finetune_lr_factor,
    )
