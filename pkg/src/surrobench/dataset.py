"""Architecture-evaluation datasets: JSONL ingestion, stratified and
leave-one-optimizer-out splitting, and noise statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import space
from .metrics import EmptyInput
from .space import DEFAULT_CONFIG, Genotype, SpaceConfig

FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidRecord(DatasetError):
    def __init__(self, line: int | None, reason: str):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")
        self.line = line
        self.reason = reason


class EmptyStratum(DatasetError):
    pass


class UnknownOptimizer(DatasetError):
    pass


class InsufficientRepeats(DatasetError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    """One architecture evaluation."""

    genotype: Genotype
    train_acc: float
    val_acc: float
    test_acc: float
    runtime_s: float
    n_params: int
    optimizer: str
    seed: int

    def __post_init__(self) -> None:
        for name in ("train_acc", "val_acc", "test_acc"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidRecord(None, f"{name}={v} outside [0, 1]")
        if not self.runtime_s > 0:
            raise InvalidRecord(None, f"runtime_s={self.runtime_s} must be positive")
        if self.n_params <= 0:
            raise InvalidRecord(None, f"n_params={self.n_params} must be positive")
        if not self.optimizer:
            raise InvalidRecord(None, "optimizer tag is empty")


class Dataset:
    """Immutable sequence of records indexed by canonical genotype."""

    def __init__(self, records: Sequence[EvalRecord], cfg: SpaceConfig = DEFAULT_CONFIG):
        for r in records:
            space.validate(r.genotype, cfg)
        self._records = tuple(records)
        self.cfg = cfg
        index: dict[str, list[int]] = {}
        for i, r in enumerate(self._records):
            index.setdefault(space.to_json(r.genotype), []).append(i)
        self._by_genotype = {k: tuple(v) for k, v in index.items()}

    @property
    def records(self) -> tuple[EvalRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i: int) -> EvalRecord:
        return self._records[i]

    @property
    def by_genotype(self) -> dict[str, tuple[int, ...]]:
        return self._by_genotype

    def optimizers(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self._records:
            seen.setdefault(r.optimizer)
        return tuple(seen)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self._records[i] for i in indices], self.cfg)

    def val_acc(self) -> np.ndarray:
        return np.array([r.val_acc for r in self._records], dtype=np.float64)

    def runtime(self) -> np.ndarray:
        return np.array([r.runtime_s for r in self._records], dtype=np.float64)

    def genotypes(self) -> list[Genotype]:
        return [r.genotype for r in self._records]


@dataclass(frozen=True)
class SplitSpec:
    """Split fractions; the default is the 0.8/0.1/0.1 train/val/test split.
    A two-way (0.9, 0.1) spec serves the leave-one-optimizer-out protocol."""

    fractions: tuple[float, ...] = (0.8, 0.1, 0.1)
    seed: int = 0
    stratify_key: str = "optimizer"

    def __post_init__(self) -> None:
        if len(self.fractions) < 2:
            raise DatasetError("need at least two split fractions")
        if any(f <= 0 for f in self.fractions):
            raise DatasetError(f"fractions must be positive, got {self.fractions}")
        if not math.isclose(sum(self.fractions), 1.0, abs_tol=1e-9):
            raise DatasetError(f"fractions must sum to 1, got {self.fractions}")


def record_to_obj(r: EvalRecord) -> dict:
    return {
        "genotype": space.to_json_obj(r.genotype),
        "train_acc": r.train_acc,
        "val_acc": r.val_acc,
        "test_acc": r.test_acc,
        "runtime_s": r.runtime_s,
        "n_params": r.n_params,
        "optimizer": r.optimizer,
        "seed": r.seed,
        "format_version": FORMAT_VERSION,
    }


def record_from_obj(obj: dict, cfg: SpaceConfig, line: int | None = None) -> EvalRecord:
    try:
        genotype = space.from_json_obj(obj["genotype"], cfg)
        return EvalRecord(
            genotype=genotype,
            train_acc=float(obj["train_acc"]),
            val_acc=float(obj["val_acc"]),
            test_acc=float(obj["test_acc"]),
            runtime_s=float(obj["runtime_s"]),
            n_params=int(obj["n_params"]),
            optimizer=str(obj["optimizer"]),
            seed=int(obj["seed"]),
        )
    except InvalidRecord as e:
        raise InvalidRecord(line, e.reason) from None
    except (KeyError, TypeError, ValueError, space.SpaceError) as e:
        raise InvalidRecord(line, str(e)) from None


def save_jsonl(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for r in ds:
            fh.write(json.dumps(record_to_obj(r), separators=(",", ":")))
            fh.write("\n")


def load_jsonl(path: str | Path, cfg: SpaceConfig = DEFAULT_CONFIG) -> Dataset:
    """Load a JSONL dataset; malformed lines are reported with their number."""
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(lineno, str(e)) from None
            version = obj.get("format_version")
            if version != FORMAT_VERSION:
                raise InvalidRecord(lineno, f"unsupported format_version {version!r}")
            records.append(record_from_obj(obj, cfg, line=lineno))
    return Dataset(records, cfg)


def _group_indices(ds: Dataset) -> list[tuple[str, tuple[int, ...]]]:
    return list(ds.by_genotype.items())


def stratified_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, ...]:
    """Split into one dataset per fraction, stratified on the optimizer tag.

    Splitting is group-aware: all repeated evaluations of a genotype land on
    the same side, so no genotype straddles train and test.  Groups that mix
    optimizer tags follow their first record's tag.  Per stratum, the side
    boundaries are the rounded cumulative fractions of the group count.
    """
    if len(ds) == 0:
        raise EmptyStratum("dataset is empty")
    strata: dict[str, list[tuple[str, tuple[int, ...]]]] = {}
    for key, idxs in _group_indices(ds):
        tag = ds[idxs[0]].optimizer
        strata.setdefault(tag, []).append((key, idxs))
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5711]))
    n_sides = len(spec.fractions)
    parts: list[list[int]] = [[] for _ in range(n_sides)]
    cum = np.cumsum(spec.fractions)
    for tag in sorted(strata):
        groups = strata[tag]
        order = rng.permutation(len(groups))
        n = len(groups)
        bounds = [round(c * n) for c in cum[:-1]] + [n]
        side = 0
        for pos, gi in enumerate(order):
            while pos >= bounds[side]:
                side += 1
            parts[side].extend(groups[gi][1])
    return tuple(ds.subset(sorted(p)) for p in parts)


def loo_partition(ds: Dataset, left_out: str) -> tuple[Dataset, Dataset]:
    """Partition into (train_val, held_out) by the originating optimizer."""
    if left_out not in ds.optimizers():
        raise UnknownOptimizer(f"optimizer {left_out!r} not present in dataset")
    held, rest = [], []
    for i, r in enumerate(ds):
        (held if r.optimizer == left_out else rest).append(i)
    return ds.subset(rest), ds.subset(held)


@dataclass(frozen=True)
class NoiseStats:
    """Per-genotype repeat statistics over the validation accuracy."""

    table: tuple[tuple[str, float, float, int], ...]  # (genotype json, mean, std, n)
    mean_std: float


def noise_stats(ds: Dataset) -> NoiseStats:
    """Sample std (n-1 denominator) of val_acc per genotype with >= 2 repeats;
    the aggregate is the mean of the per-genotype stds."""
    rows = []
    for key, idxs in ds.by_genotype.items():
        if len(idxs) < 2:
            continue
        vals = np.array([ds[i].val_acc for i in idxs])
        rows.append((key, float(vals.mean()), float(vals.std(ddof=1)), len(idxs)))
    mean_std = float(np.mean([r[2] for r in rows])) if rows else float("nan")
    return NoiseStats(tuple(rows), mean_std)


def ecdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous ECDF: sorted unique support and cumulative probabilities.

    Duplicates collapse into a single step of height k/n.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyInput("ecdf of empty input")
    xs, counts = np.unique(v, return_counts=True)
    return xs, np.cumsum(counts) / v.size
