"""Datasets, pool bookkeeping and seeded random streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

OOD_LABEL = -1

_STREAM_MULT = 1_000_003


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Every call to :meth:`generator` returns a fresh generator positioned at the
    start of the stream, so two operations handed equal streams draw equal
    sequences.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(self.stream_id,))
        return np.random.default_rng(seq)

    def derive(self, key: int) -> RngStream:
        """Independent child stream (one per stochastic sub-operation)."""
        return RngStream(self.seed, (self.stream_id * _STREAM_MULT + int(key) + 1) % (1 << 63))


@dataclass(frozen=True, eq=False)
class DatasetTable:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, ndmin=2)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.class_count < 2:
            raise ValidationError(f"class_count must be >= 2, got {self.class_count}")
        if features.shape[0] != labels.shape[0]:
            raise ValidationError(
                f"features have {features.shape[0]} rows but labels have {labels.shape[0]}"
            )
        bad = (labels != OOD_LABEL) & ((labels < 0) | (labels >= self.class_count))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"label {labels[i]} at row {i} outside [0, {self.class_count}) and not OOD ({OOD_LABEL})"
            )
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def ood_mask(self) -> np.ndarray:
        return self.labels == OOD_LABEL

    def class_counts(self) -> np.ndarray:
        ind = self.labels[self.labels != OOD_LABEL]
        return np.bincount(ind, minlength=self.class_count)

    def subset(self, rows, name=None) -> DatasetTable:
        rows = np.asarray(rows, dtype=np.int64)
        return DatasetTable(self.features[rows], self.labels[rows], self.class_count, name or self.name)

    def same_as(self, other: DatasetTable) -> bool:
        return (
            self.class_count == other.class_count
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def _as_index(values) -> np.ndarray:
    arr = np.unique(np.asarray(values, dtype=np.int64).reshape(-1))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PoolState:
    """Partition of sample indices. Each set is stored sorted ascending."""

    labeled: np.ndarray = field(default_factory=lambda: _as_index([]))
    unlabeled: np.ndarray = field(default_factory=lambda: _as_index([]))
    discarded: np.ndarray = field(default_factory=lambda: _as_index([]))

    def __post_init__(self):
        for name in ("labeled", "unlabeled", "discarded"):
            object.__setattr__(self, name, _as_index(getattr(self, name)))
        sizes = len(self.labeled) + len(self.unlabeled) + len(self.discarded)
        union = np.union1d(np.union1d(self.labeled, self.unlabeled), self.discarded)
        if union.size != sizes:
            raise ValidationError("labeled, unlabeled and discarded sets overlap")
        if union.size and union[0] < 0:
            raise ValidationError("negative sample index in pool")

    @classmethod
    def all_unlabeled(cls, n: int) -> PoolState:
        return cls(unlabeled=np.arange(n))

    def validate(self, dataset: DatasetTable) -> None:
        n = len(dataset)
        for arr in (self.labeled, self.unlabeled, self.discarded):
            if arr.size and arr[-1] >= n:
                raise ValidationError(f"pool index {arr[-1]} outside dataset of size {n}")
        if (dataset.labels[self.labeled] == OOD_LABEL).any():
            raise ValidationError("labeled set contains an OOD sample")

    def equals(self, other: PoolState) -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("labeled", "unlabeled", "discarded")
        )

    def __repr__(self):
        return (
            f"PoolState(labeled={len(self.labeled)}, unlabeled={len(self.unlabeled)}, "
            f"discarded={len(self.discarded)})"
        )


def load_csv_dataset(path, class_count: int, name: str | None = None) -> DatasetTable:
    """Read ``D`` float columns followed by one integer label per line, no header."""
    path = Path(path)
    rows, labels = [], []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError("need at least one feature and a label", lineno)
            elif len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", lineno)
            try:
                rows.append([float(c) for c in row[:-1]])
            except ValueError as exc:
                raise ParseError(f"bad feature value ({exc})", lineno) from None
            try:
                labels.append(int(row[-1].strip()))
            except ValueError:
                raise ParseError(f"label {row[-1]!r} is not an integer", lineno) from None
    if not rows:
        raise ParseError(f"{path} contains no samples")
    return DatasetTable(np.array(rows), np.array(labels), class_count, name or path.stem)


def save_csv_dataset(dataset: DatasetTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def lattice_means(class_count: int, dim: int, separation: float = 1.0) -> np.ndarray:
    """Class centres on an integer lattice, so neighbours are ``separation`` apart."""
    side = 1
    while side**dim < class_count:
        side += 1
    idx = np.arange(class_count)
    coords = np.zeros((class_count, dim))
    for d in range(dim):
        coords[:, d] = (idx // side**d) % side
    return coords * separation


def generate_gaussian_blobs(
    class_count: int,
    per_class: int,
    dim: int,
    spread: float,
    rng: RngStream,
    separation: float = 1.0,
    offset: float = 0.0,
    name: str = "blobs",
) -> DatasetTable:
    """Isotropic Gaussian blobs around lattice-placed class means.

    Rows are grouped by class (class 0 first). Class means depend only on
    ``class_count``, ``dim``, ``separation`` and ``offset``, so a test set
    drawn from another stream shares the training distribution.
    """
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ValidationError("class_count >= 2, per_class >= 1 and dim >= 1 required")
    if not spread > 0 or not separation > 0:
        raise ValidationError("spread and separation must be positive")
    means = lattice_means(class_count, dim, separation) + offset
    gen = rng.generator()
    noise = gen.standard_normal((class_count, per_class, dim)) * spread
    features = (means[:, None, :] + noise).reshape(-1, dim)
    labels = np.repeat(np.arange(class_count), per_class)
    return DatasetTable(features, labels, class_count, name)


def sample_initial_labeled(
    pool: PoolState, dataset: DatasetTable, n_initial: int, rng: RngStream
) -> PoolState:
    """Move ``n_initial`` uniformly drawn in-distribution samples to the labeled set."""
    if n_initial < 0:
        raise ConfigError("n_initial must be non-negative")
    candidates = pool.unlabeled[dataset.labels[pool.unlabeled] != OOD_LABEL]
    if n_initial > candidates.size:
        raise ConfigError(
            f"n_initial={n_initial} exceeds the {candidates.size} in-distribution unlabeled samples"
        )
    if n_initial == 0:
        return pool
    picked = rng.generator().choice(candidates, size=n_initial, replace=False)
    return PoolState(
        labeled=np.concatenate([pool.labeled, picked]),
        unlabeled=np.setdiff1d(pool.unlabeled, picked),
        discarded=pool.discarded,
    )
