"""Named dataset resolution: built-in synthetic blobs or pre-extracted feature CSVs."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .data import DatasetTable, RngStream, generate_gaussian_blobs, load_csv_dataset
from .errors import ConfigError, DataError

BUILTIN = ("blobs",)

# distance of the OOD blob lattice from the ID lattice, in units of separation
OOD_OFFSET = 10.0


@dataclass(frozen=True)
class DataSpec:
    name: str = "blobs"
    n_class: int = 4
    samples_per_class: int = 500
    test_per_class: int = 250
    dim: int = 2
    spread: float = 0.25
    data_path: str | None = None
    test_path: str | None = None
    ood_path: str | None = None

    def __post_init__(self):
        if self.n_class < 2:
            raise ConfigError("n_class must be >= 2")

    @property
    def builtin(self) -> bool:
        return self.name.lower() in BUILTIN and not self.data_path

    @property
    def ood_source_name(self) -> str:
        return f"{self.name}-ood" if self.builtin else (self.ood_path or f"{self.name}-ood")


def blob_splits(spec: DataSpec, seed: int, ood_rate: float = 0.0):
    """Train pool, ID test set and (when ``ood_rate > 0``) a far-away OOD blob set."""
    train = generate_gaussian_blobs(
        spec.n_class, spec.samples_per_class, spec.dim, spec.spread, RngStream(seed, 7001), name=spec.name
    )
    test = generate_gaussian_blobs(
        spec.n_class, spec.test_per_class, spec.dim, spec.spread, RngStream(seed, 7002), name=f"{spec.name}-test"
    )
    ood = None
    if ood_rate > 0:
        needed = math.ceil(ood_rate / (1.0 - ood_rate) * len(train)) + 1
        ood = generate_gaussian_blobs(
            spec.n_class,
            math.ceil(needed / spec.n_class),
            spec.dim,
            spec.spread,
            RngStream(seed, 7003),
            offset=OOD_OFFSET,
            name=spec.ood_source_name,
        )
    return train, test, ood


def resolve(spec: DataSpec, seed: int = 0, ood_rate: float = 0.0):
    """Return ``(train, test, ood_source_or_None)`` for a data spec."""
    if spec.builtin:
        return blob_splits(spec, seed, ood_rate)
    if not (spec.data_path and spec.test_path):
        raise ConfigError(f"dataset {spec.name!r} is not built in; supply --data_path and --test-path feature CSVs")
    train = load_csv_dataset(spec.data_path, spec.n_class, spec.name)
    test = load_csv_dataset(spec.test_path, spec.n_class, f"{spec.name}-test")
    ood = None
    if ood_rate > 0:
        if not spec.ood_path:
            raise DataError("open-set run on a CSV dataset needs --ood-path")
        raw = load_csv_dataset(spec.ood_path, 2**62, spec.ood_path)  # label column is ignored
        ood = DatasetTable(raw.features, [0] * len(raw), spec.n_class, spec.ood_path)
    return train, test, ood
