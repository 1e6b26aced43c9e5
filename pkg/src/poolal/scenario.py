"""Long-tailed, open-set and compositional pool construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import OOD_LABEL, DatasetTable, PoolState, RngStream, sample_initial_labeled
from .errors import DataError, ValidationError

KINDS = ("standard", "imbalance", "openset", "compositional")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "standard"
    ood_rate: float = 0.0
    gamma: float = 1.0
    ood_source: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if not 0.0 <= self.ood_rate < 1.0:
            raise ValidationError(f"ood_rate must lie in [0, 1), got {self.ood_rate}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.kind in ("openset", "compositional") and not (self.ood_rate > 0 and self.ood_source):
            raise ValidationError(f"{self.kind} scenario needs ood_rate > 0 and an ood_source")

    @property
    def uses_imbalance(self) -> bool:
        return self.kind in ("imbalance", "compositional")

    @property
    def uses_openset(self) -> bool:
        return self.kind in ("openset", "compositional")

    @property
    def label(self) -> str:
        if self.kind == "standard":
            return "standard"
        parts = []
        if self.uses_imbalance:
            parts.append(f"imb{self.gamma:g}")
        if self.uses_openset:
            parts.append(f"ood{self.ood_rate:g}")
        return "-".join(parts)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def long_tail_counts(n_max: int, gamma: float, class_count: int) -> list[int]:
    """Per-class quotas ``round(n_max * gamma ** (i / (C - 1)))``, class 0 largest."""
    if not 0.0 < gamma <= 1.0:
        raise ValidationError(f"gamma must lie in (0, 1], got {gamma}")
    if class_count < 2:
        raise ValidationError("need at least two classes")
    return [_round_half_up(n_max * gamma ** (i / (class_count - 1))) for i in range(class_count)]


def apply_imbalance(dataset: DatasetTable, gamma: float, rng: RngStream) -> DatasetTable:
    """Subsample each class to its long-tail quota, keeping row order.

    OOD rows (if any) are left untouched.
    """
    counts = dataset.class_counts()
    quotas = long_tail_counts(int(counts.max()), gamma, dataset.class_count)
    gen = rng.generator()
    keep = [np.flatnonzero(dataset.labels == OOD_LABEL)]
    for c, quota in enumerate(quotas):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size < quota:
            raise DataError(f"class {c} has {rows.size} samples but its quota is {quota}")
        keep.append(gen.choice(rows, size=quota, replace=False) if quota < rows.size else rows)
    rows = np.sort(np.concatenate(keep))
    return dataset.subset(rows)


def ood_count_for(n_id_unlabeled: int, ood_rate: float) -> int:
    """Number of OOD samples making them ``ood_rate`` of the unlabeled pool."""
    if not 0.0 <= ood_rate < 1.0:
        raise ValidationError(f"ood_rate must lie in [0, 1), got {ood_rate}")
    return _round_half_up(ood_rate * n_id_unlabeled / (1.0 - ood_rate))


def apply_openset(
    id_pool: PoolState,
    id_dataset: DatasetTable,
    ood_source: DatasetTable,
    ood_rate: float,
    rng: RngStream,
) -> tuple[PoolState, DatasetTable]:
    """Append OOD rows (labelled ``OOD_LABEL``) and add them to the unlabeled pool."""
    n_ood = ood_count_for(len(id_pool.unlabeled), ood_rate)
    if n_ood == 0:
        return id_pool, id_dataset
    if len(ood_source) < n_ood:
        raise DataError(
            f"OOD source {ood_source.name!r} has {len(ood_source)} samples; {n_ood} required "
            f"for ood_rate={ood_rate}"
        )
    if ood_source.dim != id_dataset.dim:
        raise DataError(f"OOD source has dim {ood_source.dim}, dataset has {id_dataset.dim}")
    rows = np.sort(rng.generator().choice(len(ood_source), size=n_ood, replace=False))
    n = len(id_dataset)
    merged = DatasetTable(
        np.vstack([id_dataset.features, ood_source.features[rows]]),
        np.concatenate([id_dataset.labels, np.full(n_ood, OOD_LABEL)]),
        id_dataset.class_count,
        id_dataset.name,
    )
    pool = PoolState(
        labeled=id_pool.labeled,
        unlabeled=np.concatenate([id_pool.unlabeled, np.arange(n, n + n_ood)]),
        discarded=id_pool.discarded,
    )
    return pool, merged


def build_scenario(
    spec: ScenarioSpec,
    dataset: DatasetTable,
    rng: RngStream,
    ood_source: DatasetTable | None = None,
    n_initial: int = 0,
) -> tuple[DatasetTable, PoolState]:
    """Imbalance (ID rows only), then the initial labeled draw, then OOD injection.

    Drawing the initial set before injection keeps the OOD ratio exact on the
    pool the first query actually sees.
    """
    if spec.uses_imbalance:
        dataset = apply_imbalance(dataset, spec.gamma, rng.derive(0))
    pool = PoolState.all_unlabeled(len(dataset))
    pool = sample_initial_labeled(pool, dataset, n_initial, rng.derive(1))
    if spec.uses_openset:
        if ood_source is None:
            raise DataError(f"scenario {spec.kind} requires an OOD source dataset")
        pool, dataset = apply_openset(pool, dataset, ood_source, spec.ood_rate, rng.derive(2))
    return dataset, pool
