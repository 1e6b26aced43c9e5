"""The query -> label -> retrain -> evaluate loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import compute_metrics
from .data import OOD_LABEL, DatasetTable, PoolState, RngStream
from .datasets import DataSpec
from .errors import ConfigError, ValidationError
from .learner import TrainConfig, train
from .scenario import ScenarioSpec, build_scenario
from .strategies import SelectionContext, StrategyParams, normalize_strategy, select

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = "random"
    trials: int = 5
    cycles: int = 10
    n_initial: int = 100
    n_query: int = 100
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    params: StrategyParams = field(default_factory=StrategyParams)
    data: DataSpec = field(default_factory=DataSpec)

    def __post_init__(self):
        object.__setattr__(self, "strategy", normalize_strategy(self.strategy))
        if self.trials < 1 or self.cycles < 1 or self.n_query < 1:
            raise ConfigError("trials, cycles and n_query must all be >= 1")
        if self.n_initial < 1:
            raise ConfigError("n_initial must be >= 1 (cycle 1 trains on the initial set)")


@dataclass
class CycleRecord:
    cycle: int
    labeled_size: int
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    selection_seconds: float
    queried_class_histogram: list
    n_ood_queried: int
    n_queried: int = 0
    exhausted: bool = False
    discarded_size: int = 0

    @property
    def budget_spent(self) -> int:
        """Labels paid for so far, OOD queries included."""
        return self.labeled_size + self.discarded_size


@dataclass
class TrialResult:
    trial: int
    seed: int
    records: list

    @property
    def learning_curve(self):
        return [r.accuracy for r in self.records]

    @property
    def total_selection_seconds(self) -> float:
        return float(sum(r.selection_seconds for r in self.records))


def oracle_query(dataset: DatasetTable, pool: PoolState, chosen) -> PoolState:
    """Reveal labels: ID samples become labeled, OOD samples are discarded."""
    chosen = np.asarray(chosen, dtype=np.int64)
    if chosen.size == 0:
        return pool
    if np.unique(chosen).size != chosen.size:
        raise ValidationError("duplicate indices in query")
    if np.intersect1d(chosen, pool.labeled).size or np.intersect1d(chosen, pool.discarded).size:
        raise ValidationError("queried samples already labeled or discarded")
    if np.setdiff1d(chosen, pool.unlabeled).size:
        raise ValidationError("queried samples are not in the unlabeled pool")
    is_ood = dataset.labels[chosen] == OOD_LABEL
    return PoolState(
        labeled=np.concatenate([pool.labeled, chosen[~is_ood]]),
        unlabeled=np.setdiff1d(pool.unlabeled, chosen),
        discarded=np.concatenate([pool.discarded, chosen[is_ood]]),
    )


def _evaluate(model, test_set: DatasetTable):
    return compute_metrics(model.predict(test_set.features), test_set.labels, test_set.class_count)


def run_trial(
    config: ExperimentConfig,
    dataset: DatasetTable,
    test_set: DatasetTable,
    trial_index: int,
    ood_source: DatasetTable | None = None,
    clock=time.perf_counter,
) -> TrialResult:
    """One trial: scenario construction, initial fit, then ``cycles - 1`` query rounds.

    Cycle 1 evaluates the model fit on the initial labeled set; every later
    cycle queries, retrains from scratch and evaluates.
    """
    if (test_set.labels == OOD_LABEL).any():
        raise ValidationError("test set must contain in-distribution labels only")
    seed = config.seed + trial_index
    root = RngStream(seed, 0)
    data, pool = build_scenario(config.scenario, dataset, root.derive(1), ood_source, config.n_initial)
    C = data.class_count
    records = []
    sel_seconds = 0.0
    hist = [0] * (C + 1)
    n_ood = n_queried = 0
    exhausted = False
    for cycle in range(1, config.cycles + 1):
        if cycle > 1:
            k = min(config.n_query, len(pool.unlabeled))
            hist = [0] * (C + 1)
            if k == 0:
                exhausted = True
                sel_seconds, n_ood, n_queried = 0.0, 0, 0
                log.warning("trial %d cycle %d: unlabeled pool exhausted", trial_index, cycle)
            else:
                ctx = SelectionContext(data, pool, model, root.derive(100 + cycle), config.train, config.params)
                result = select(config.strategy, ctx, k, clock=clock)
                sel_seconds = result.elapsed_seconds
                chosen = result.chosen
                pool = oracle_query(data, pool, chosen)
                y = data.labels[chosen]
                n_ood = int((y == OOD_LABEL).sum())
                n_queried = int(chosen.size)
                counts = np.bincount(y[y != OOD_LABEL], minlength=C)
                hist = [int(c) for c in counts] + [n_ood]
        model = train(data, pool.labeled, config.train, root.derive(200 + cycle))
        acc, prec, rec, f1 = _evaluate(model, test_set)
        records.append(
            CycleRecord(
                cycle=cycle,
                labeled_size=len(pool.labeled),
                accuracy=acc,
                macro_precision=prec,
                macro_recall=rec,
                macro_f1=f1,
                selection_seconds=sel_seconds,
                queried_class_histogram=hist,
                n_ood_queried=n_ood,
                n_queried=n_queried,
                exhausted=exhausted,
                discarded_size=len(pool.discarded),
            )
        )
        log.info(
            "trial %d cycle %d: labeled=%d acc=%.4f sel=%.3fs", trial_index, cycle, len(pool.labeled), acc, sel_seconds
        )
    return TrialResult(trial_index, seed, records)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list

    @property
    def mean_final_accuracy(self) -> float:
        return float(np.mean([t.records[-1].accuracy for t in self.trials]))

    @property
    def mean_total_selection_seconds(self) -> float:
        return float(np.mean([t.total_selection_seconds for t in self.trials]))


def run_experiment(
    config: ExperimentConfig,
    dataset: DatasetTable,
    test_set: DatasetTable,
    ood_source: DatasetTable | None = None,
    trial_indices=None,
    clock=time.perf_counter,
) -> ExperimentResult:
    """Trials use seeds ``seed + 0 .. seed + trials - 1``; each is independent."""
    indices = range(config.trials) if trial_indices is None else trial_indices
    trials = [run_trial(config, dataset, test_set, i, ood_source, clock=clock) for i in indices]
    trials.sort(key=lambda t: t.trial)
    return ExperimentResult(config, trials)
