"""Index-selection routines shared by the strategies."""

import math
import warnings

import numpy as np

from .. import kernels
from ..errors import ValidationError


def _clamp(k, available, what="unlabeled pool"):
    if k < 0:
        raise ValidationError("budget k must be non-negative")
    if k > available:
        warnings.warn(f"budget {k} exceeds {what} of size {available}; clamping", RuntimeWarning, stacklevel=3)
        return available
    return k


def rank_by_score(scores, unlabeled):
    """Positions into ``unlabeled`` ordered by descending score, ties to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    unlabeled = np.asarray(unlabeled)
    if scores.shape != unlabeled.shape:
        raise ValidationError(f"{scores.shape[0]} scores for {unlabeled.shape[0]} unlabeled samples")
    return np.lexsort((unlabeled, -scores))


def select_top_k(scores, unlabeled, k):
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    k = _clamp(k, unlabeled.size)
    return unlabeled[rank_by_score(scores, unlabeled)[:k]]


def select_random(unlabeled, k, rng):
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    k = _clamp(k, unlabeled.size)
    return rng.generator().choice(unlabeled, size=k, replace=False)


def kcenter_order(embeddings, labeled, unlabeled, k):
    """k-center greedy over the unlabeled rows; returns dataset indices in pick order.

    ``embeddings`` is indexed by dataset index. Without labeled centers the
    first pick is the unlabeled point farthest from the unlabeled mean.
    """
    labeled = np.asarray(labeled, dtype=np.int64)
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    k = _clamp(k, unlabeled.size)
    if k == 0:
        return unlabeled[:0]
    x = np.ascontiguousarray(embeddings[unlabeled], dtype=np.float64)
    if labeled.size:
        min_sq = kernels.min_sqdist(x, embeddings[labeled])
        return unlabeled[kernels.kcenter_greedy(x, min_sq, k)]
    first = int(np.argmax(kernels.min_sqdist(x, x.mean(axis=0))))
    if k == 1:
        return unlabeled[[first]]
    min_sq = kernels.min_sqdist(x, x[first])
    min_sq[first] = -1.0
    rest = kernels.kcenter_greedy(x, min_sq, k - 1)
    return unlabeled[np.concatenate([[first], rest])]


def select_coreset(embeddings, labeled, unlabeled, k):
    return kcenter_order(embeddings, labeled, unlabeled, k)


def coverage_radius(embeddings, centers, points):
    """Largest distance from any of ``points`` to its nearest center."""
    d = kernels.min_sqdist(embeddings[np.asarray(points)], embeddings[np.asarray(centers)])
    return float(np.sqrt(d.max())) if d.size else 0.0


def select_badge(grad_embeddings, unlabeled, k, rng):
    """k-means++ seeds over the unlabeled gradient embeddings (rows aligned with ``unlabeled``)."""
    unlabeled = np.asarray(unlabeled, dtype=np.int64)
    k = _clamp(k, unlabeled.size)
    if k == 0:
        return unlabeled[:0]
    uniforms = rng.generator().random(k)
    return unlabeled[kernels.kmeanspp_seed(grad_embeddings, k, uniforms)]


def kmeans(x, k, rng, iterations=20):
    """Lloyd's algorithm from k-means++ seeds. Returns ``(centroids, seed_positions)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    seeds = kernels.kmeanspp_seed(x, k, rng.generator().random(k))
    centroids = x[seeds].copy()
    x_sq = np.einsum("ij,ij->i", x, x)
    for _ in range(iterations):
        d = x_sq[:, None] - 2.0 * x @ centroids.T + np.einsum("ij,ij->i", centroids, centroids)[None]
        assign = np.argmin(d, axis=1)
        moved = False
        for c in range(k):
            members = x[assign == c]
            if members.shape[0]:
                new = members.mean(axis=0)
                moved |= not np.array_equal(new, centroids[c])
                centroids[c] = new
        if not moved:
            break
    return centroids, seeds


def nearest_distinct(x, centroids):
    """For each centroid in turn, the closest row of ``x`` not already taken."""
    taken = np.zeros(x.shape[0], dtype=bool)
    out = []
    for c in centroids:
        d = ((x - c) ** 2).sum(axis=1)
        d[taken] = np.inf
        i = int(np.argmin(d))
        taken[i] = True
        out.append(i)
    return np.array(out, dtype=np.int64)


def alfamix_candidates(model, embeddings, pseudo_labels, anchors, alpha):
    """Mask of samples whose prediction flips when mixed toward any anchor by ``alpha``."""
    flipped = np.zeros(embeddings.shape[0], dtype=bool)
    for anchor in anchors:
        mixed = alpha * anchor[None, :] + (1.0 - alpha) * embeddings
        flipped |= np.argmax(model.head(mixed), axis=1) != pseudo_labels
    return flipped


def class_balanced_fill(ranking, pseudo_labels, labeled_counts, k):
    """Walk ``ranking`` (positions) honouring per-class quotas, then top up with skipped ones.

    ``pseudo_labels`` is aligned with positions. Target per class is
    ``ceil((|labeled| + k) / C)`` minus what the class already has.
    """
    ranking = np.asarray(ranking, dtype=np.int64)
    labeled_counts = np.asarray(labeled_counts)
    n_classes = labeled_counts.shape[0]
    k = min(k, ranking.size)
    target = math.ceil((int(labeled_counts.sum()) + k) / n_classes)
    quota = np.maximum(0, target - labeled_counts)
    chosen, skipped = [], []
    for pos in ranking:
        if len(chosen) == k:
            break
        c = pseudo_labels[pos]
        if quota[c] > 0:
            quota[c] -= 1
            chosen.append(pos)
        else:
            skipped.append(pos)
    if len(chosen) < k:
        chosen.extend(skipped[: k - len(chosen)])
    return np.array(chosen, dtype=np.int64)
