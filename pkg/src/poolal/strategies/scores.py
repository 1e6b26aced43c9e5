"""Per-sample acquisition scores. Larger score means higher query priority."""

import numpy as np
from scipy.special import entr

from ..errors import ConfigError, ValidationError
from ..learner import perturbed_outputs, sharpness_losses, softmax

LOG_EPS = 1e-12
SAAL_MODES = ("Max", "Diff", "Max_Diversity", "Diff_Diversity")
VARRATIO_MODES = ("mode_frequency", "max_prob")


def _entropy(p):
    return entr(p).sum(axis=-1)


def _agreeing(mc):
    """Mask of samples whose MC passes are all bitwise equal."""
    return (mc == mc[0]).all(axis=(0, 2))


def _zero_where_agreeing(scores, mc):
    scores = np.asarray(scores, dtype=np.float64)
    scores[_agreeing(mc)] = 0.0
    return scores


def score_confidence(bundle):
    return 1.0 - bundle.probs.max(axis=1)


def score_margin(bundle):
    p = bundle.probs
    if p.shape[1] < 2:
        raise ValidationError("margin needs at least two classes")
    top2 = np.partition(p, -2, axis=1)[:, -2:]
    return -(top2[:, 1] - top2[:, 0])


def score_entropy(bundle):
    return _entropy(bundle.probs)


def score_bald(bundle):
    mc = bundle.mc_probs
    mi = _entropy(mc.mean(axis=0)) - _entropy(mc).mean(axis=0)
    return _zero_where_agreeing(np.maximum(mi, 0.0), mc)


def score_varratio(bundle, mode="mode_frequency"):
    if mode == "max_prob":
        return score_confidence(bundle)
    if mode != "mode_frequency":
        raise ConfigError(f"unknown varratio mode {mode!r}; expected one of {VARRATIO_MODES}")
    mc = bundle.mc_probs
    T, _, C = mc.shape
    votes = np.argmax(mc, axis=2)
    counts = (votes[:, :, None] == np.arange(C)).sum(axis=0)
    return 1.0 - counts.max(axis=1) / T


def score_meanstd(bundle):
    mc = bundle.mc_probs
    return _zero_where_agreeing(mc.std(axis=0).mean(axis=1), mc)


def score_coremse(bundle):
    """Mean squared distance of the MC passes from their average."""
    mc = bundle.mc_probs
    diff = mc - mc.mean(axis=0)
    return _zero_where_agreeing((diff * diff).sum(axis=2).mean(axis=0), mc)


def score_corelog(bundle):
    """Mean KL divergence of the MC passes from their average, in log space."""
    mc = bundle.mc_probs
    mean = mc.mean(axis=0)
    kl = (mc * (np.log(np.maximum(mc, LOG_EPS)) - np.log(np.maximum(mean, LOG_EPS)))).sum(axis=2)
    return _zero_where_agreeing(np.maximum(kl.mean(axis=0), 0.0), mc)


def score_noise_stability(model, dataset, indices, noise_scale, draws, rng):
    base = softmax(model.forward(dataset.features[np.asarray(indices, dtype=np.int64)])[1])
    noisy = perturbed_outputs(model, dataset, indices, noise_scale, draws, rng)
    return np.linalg.norm(noisy - base[None], axis=2).mean(axis=0)


def saal_base_mode(mode: str) -> str:
    if mode not in SAAL_MODES:
        raise ConfigError(f"unknown SAAL acquisition mode {mode!r}; expected one of {SAAL_MODES}")
    return mode.split("_")[0]


def score_saal(model, dataset, indices, rho, mode="Max_Diversity"):
    base_mode = saal_base_mode(mode)
    X = dataset.features[np.asarray(indices, dtype=np.int64)]
    base, perturbed = sharpness_losses(model, X, rho)
    if base_mode == "Max":
        return perturbed
    return perturbed - base
