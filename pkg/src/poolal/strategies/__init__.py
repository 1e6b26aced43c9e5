"""Acquisition strategies.

Every strategy is a function ``(ctx, k) -> chosen`` returning dataset indices
from ``ctx.pool.unlabeled``; :func:`select` wraps one call with timing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..data import DatasetTable, PoolState, RngStream
from ..errors import ConfigError
from ..learner import InferenceBundle, MlpModel, TrainConfig, fit, grad_embedding, infer
from . import scores as S
from .selection import (
    alfamix_candidates,
    class_balanced_fill,
    kcenter_order,
    kmeans,
    nearest_distinct,
    rank_by_score,
    select_badge,
    select_coreset,
    select_random,
    select_top_k,
)

STRATEGIES = (
    "random",
    "conf",
    "entropy",
    "margin",
    "varratio",
    "meanstd",
    "bald",
    "coreset",
    "coreset_cb",
    "entropy_cb",
    "badge",
    "alfamix",
    "saal",
    "noise_stability",
    "coremse",
    "corelog",
    "lfosa",
)

UNCERTAINTY = ("conf", "entropy", "margin", "varratio", "meanstd", "bald")

_ALIASES = {s.replace("_", ""): s for s in STRATEGIES}
_ALIASES.update({"leastconfidence": "conf", "confidence": "conf", "alphamix": "alfamix", "noisestab": "noise_stability"})

CORESET_CB_OVERSAMPLE = 3


def normalize_strategy(name: str) -> str:
    key = "".join(ch for ch in name.lower() if ch.isalnum())
    try:
        return _ALIASES[key]
    except KeyError:
        raise ConfigError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}") from None


@dataclass(frozen=True)
class StrategyParams:
    rho: float = 0.05
    alpha_cap: float = 0.03125
    noise_scale: float = 0.001
    noise_sampling: int = 50
    acq_mode: str = "Max_Diversity"
    varratio_mode: str = "mode_frequency"

    def __post_init__(self):
        if self.rho < 0 or self.noise_scale < 0:
            raise ConfigError("rho and noise_scale must be non-negative")
        if not 0.0 < self.alpha_cap < 1.0:
            raise ConfigError("alpha_cap must lie in (0, 1)")
        if self.noise_sampling < 1:
            raise ConfigError("noise_sampling must be >= 1")
        S.saal_base_mode(self.acq_mode)
        if self.varratio_mode not in S.VARRATIO_MODES:
            raise ConfigError(f"varratio_mode must be one of {S.VARRATIO_MODES}")


@dataclass
class SelectionContext:
    dataset: DatasetTable
    pool: PoolState
    model: MlpModel
    rng: RngStream
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    params: StrategyParams = field(default_factory=StrategyParams)

    @cached_property
    def bundle(self) -> InferenceBundle:
        return infer(self.model, self.dataset, self.pool.unlabeled, self.train_cfg.n_drop, self.rng.derive(0))

    def embeddings_of(self, indices):
        return self.model.hidden(self.dataset.features[np.asarray(indices, dtype=np.int64)])

    def labeled_class_counts(self):
        return np.bincount(self.dataset.labels[self.pool.labeled], minlength=self.dataset.class_count)


@dataclass(frozen=True, eq=False)
class SelectionResult:
    chosen: np.ndarray
    scores: np.ndarray | None
    elapsed_seconds: float


def _scored(score_fn):
    def run(ctx, k):
        s = score_fn(ctx)
        return select_top_k(s, ctx.pool.unlabeled, k), s

    return run


def _full_embeddings(ctx):
    """Embedding matrix indexed by dataset row (only pool rows are filled)."""
    emb = np.zeros((len(ctx.dataset), ctx.model.W1.shape[1]))
    emb[ctx.pool.unlabeled] = ctx.bundle.embeddings
    if ctx.pool.labeled.size:
        emb[ctx.pool.labeled] = ctx.embeddings_of(ctx.pool.labeled)
    return emb


def _random(ctx, k):
    return select_random(ctx.pool.unlabeled, k, ctx.rng.derive(1)), None


def _coreset(ctx, k):
    return select_coreset(_full_embeddings(ctx), ctx.pool.labeled, ctx.pool.unlabeled, k), None


def _badge(ctx, k):
    g = grad_embedding(ctx.model, ctx.bundle)
    return select_badge(g, ctx.pool.unlabeled, k, ctx.rng.derive(1)), None


def _entropy_cb(ctx, k):
    s = S.score_entropy(ctx.bundle)
    ranking = rank_by_score(s, ctx.pool.unlabeled)
    pos = class_balanced_fill(ranking, ctx.bundle.pseudo_labels, ctx.labeled_class_counts(), k)
    return ctx.pool.unlabeled[pos], s


def _coreset_cb(ctx, k):
    unl = ctx.pool.unlabeled
    length = min(unl.size, CORESET_CB_OVERSAMPLE * k)
    order = kcenter_order(_full_embeddings(ctx), ctx.pool.labeled, unl, length)
    pos_of = np.searchsorted(unl, order)
    pos = class_balanced_fill(pos_of, ctx.bundle.pseudo_labels, ctx.labeled_class_counts(), k)
    return unl[pos], None


def _alfamix(ctx, k):
    unl = ctx.pool.unlabeled
    bundle = ctx.bundle
    k = min(k, unl.size)
    labeled = ctx.pool.labeled
    lab_emb = ctx.embeddings_of(labeled)
    lab_y = ctx.dataset.labels[labeled]
    anchors = [lab_emb[lab_y == c].mean(axis=0) for c in np.unique(lab_y)]
    cand = np.flatnonzero(
        alfamix_candidates(ctx.model, bundle.embeddings, bundle.pseudo_labels, anchors, ctx.params.alpha_cap)
    )
    if cand.size > k:
        centroids, _ = kmeans(bundle.embeddings[cand], k, ctx.rng.derive(1))
        pos = cand[nearest_distinct(bundle.embeddings[cand], centroids)]
    else:
        pos = cand
        if cand.size < k:
            rest = np.setdiff1d(np.arange(unl.size), cand)
            ent = S.score_entropy(bundle)[rest]
            pos = np.concatenate([cand, rest[rank_by_score(ent, unl[rest])[: k - cand.size]]])
    return unl[pos], None


def _saal(ctx, k):
    s = S.score_saal(ctx.model, ctx.dataset, ctx.pool.unlabeled, ctx.params.rho, ctx.params.acq_mode)
    return select_top_k(s, ctx.pool.unlabeled, k), s


def _noise_stability(ctx, k):
    p = ctx.params
    s = S.score_noise_stability(
        ctx.model, ctx.dataset, ctx.pool.unlabeled, p.noise_scale, p.noise_sampling, ctx.rng.derive(2)
    )
    return select_top_k(s, ctx.pool.unlabeled, k), s


def mav_scores(ctx):
    """Known-class MAV from an auxiliary model that treats discarded samples as one extra class.

    Returns ``(mav, predicted_unknown)`` for the unlabeled pool.
    """
    C = ctx.dataset.class_count
    lab, disc = ctx.pool.labeled, ctx.pool.discarded
    rows = np.concatenate([lab, disc])
    y = np.concatenate([ctx.dataset.labels[lab], np.full(disc.size, C)])
    aux = fit(ctx.dataset.features[rows], y, C + 1 if disc.size else C, ctx.train_cfg, ctx.rng.derive(3))
    logits = aux.forward(ctx.dataset.features[ctx.pool.unlabeled])[1]
    return logits[:, :C].max(axis=1), np.argmax(logits, axis=1) == C


def _lfosa(ctx, k):
    mav, unknown = mav_scores(ctx)
    unl = ctx.pool.unlabeled
    k = min(k, unl.size)
    # samples the detector calls unknown go last; MAV ranks within each group
    order = np.lexsort((unl, -mav, unknown))
    return unl[order[:k]], mav


REGISTRY = {
    "random": _random,
    "conf": _scored(lambda ctx: S.score_confidence(ctx.bundle)),
    "entropy": _scored(lambda ctx: S.score_entropy(ctx.bundle)),
    "margin": _scored(lambda ctx: S.score_margin(ctx.bundle)),
    "varratio": _scored(lambda ctx: S.score_varratio(ctx.bundle, ctx.params.varratio_mode)),
    "meanstd": _scored(lambda ctx: S.score_meanstd(ctx.bundle)),
    "bald": _scored(lambda ctx: S.score_bald(ctx.bundle)),
    "coremse": _scored(lambda ctx: S.score_coremse(ctx.bundle)),
    "corelog": _scored(lambda ctx: S.score_corelog(ctx.bundle)),
    "coreset": _coreset,
    "coreset_cb": _coreset_cb,
    "entropy_cb": _entropy_cb,
    "badge": _badge,
    "alfamix": _alfamix,
    "saal": _saal,
    "noise_stability": _noise_stability,
    "lfosa": _lfosa,
}

SCORE_BASED = ("conf", "entropy", "margin", "varratio", "meanstd", "bald", "coremse", "corelog", "saal", "noise_stability", "lfosa")


def select(strategy: str, ctx: SelectionContext, k: int, clock=time.perf_counter) -> SelectionResult:
    """Run one acquisition step and time it (inference included, training of the task model excluded)."""
    fn = REGISTRY[normalize_strategy(strategy)]
    start = clock()
    chosen, scores = fn(ctx, k)
    elapsed = max(0.0, clock() - start)
    return SelectionResult(np.asarray(chosen, dtype=np.int64), scores, elapsed)


__all__ = [
    "STRATEGIES",
    "UNCERTAINTY",
    "SCORE_BASED",
    "REGISTRY",
    "StrategyParams",
    "SelectionContext",
    "SelectionResult",
    "normalize_strategy",
    "select",
    "select_top_k",
    "select_random",
    "select_coreset",
    "select_badge",
]
