"""One-hidden-layer ReLU network trained with SGD, plus the inference hooks
the acquisition strategies need (MC dropout, embeddings, gradient
embeddings, weight-noise and sharpness perturbations)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DatasetTable, RngStream
from .errors import ValidationError

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    scheduler_step: int = 50
    scheduler_gamma: float = 0.5
    batch_size: int = 64
    n_drop: int = 5
    hidden: int = 128
    dropout: float = 0.5

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        for name in ("learning_rate", "scheduler_gamma"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValidationError("momentum and weight_decay must be non-negative")
        if self.scheduler_step < 1 or self.batch_size < 1 or self.n_drop < 1 or self.hidden < 1:
            raise ValidationError("scheduler_step, batch_size, n_drop and hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must lie in [0, 1)")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.5
    loss_history: list = field(default_factory=list)

    @classmethod
    def initialize(cls, dim, hidden, n_classes, dropout_rate, gen: np.random.Generator):
        # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
        a1, a2 = 1.0 / np.sqrt(dim), 1.0 / np.sqrt(hidden)
        return cls(
            W1=gen.uniform(-a1, a1, (dim, hidden)),
            b1=gen.uniform(-a1, a1, hidden),
            W2=gen.uniform(-a2, a2, (hidden, n_classes)),
            b2=gen.uniform(-a2, a2, n_classes),
            dropout_rate=dropout_rate,
        )

    @property
    def layer_dims(self):
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def with_params(self, params: dict) -> MlpModel:
        return MlpModel(**params, dropout_rate=self.dropout_rate)

    def copy(self) -> MlpModel:
        return MlpModel(
            *(getattr(self, k).copy() for k in PARAM_NAMES),
            dropout_rate=self.dropout_rate,
            loss_history=list(self.loss_history),
        )

    def hidden(self, X):
        return np.maximum(X @ self.W1 + self.b1, 0.0)

    def head(self, h):
        return h @ self.W2 + self.b2

    def forward(self, X, keep_mask=None):
        """Return ``(hidden, logits)``; ``keep_mask`` applies inverted dropout to the hidden layer."""
        h = self.hidden(X)
        if keep_mask is not None:
            h_used = h * keep_mask / (1.0 - self.dropout_rate)
        else:
            h_used = h
        return h, self.head(h_used)

    def predict(self, X):
        return np.argmax(self.forward(X)[1], axis=1)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits, y):
    """Per-sample cross-entropy (natural log)."""
    return -log_softmax(logits)[np.arange(len(y)), y]


def loss_and_grads(model: MlpModel, X, y, keep_mask=None):
    """Mean cross-entropy over the batch and its gradients w.r.t. every parameter."""
    n = X.shape[0]
    pre = X @ model.W1 + model.b1
    h = np.maximum(pre, 0.0)
    if keep_mask is not None:
        scale = keep_mask / (1.0 - model.dropout_rate)
        h_used = h * scale
    else:
        scale = None
        h_used = h
    logits = h_used @ model.W2 + model.b2
    loss = float(cross_entropy(logits, y).mean())
    delta = softmax(logits)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = {"W2": h_used.T @ delta, "b2": delta.sum(axis=0)}
    dh = delta @ model.W2.T
    if scale is not None:
        dh = dh * scale
    dpre = dh * (pre > 0)
    grads["W1"] = X.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    return loss, grads


def fit(X, y, n_classes: int, cfg: TrainConfig, rng: RngStream) -> MlpModel:
    """Train a freshly initialised model with SGD + momentum, weight decay and StepLR."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValidationError("cannot train on an empty labeled set")
    gen = rng.generator()
    model = MlpModel.initialize(X.shape[1], cfg.hidden, n_classes, cfg.dropout, gen)
    velocity = {k: np.zeros_like(v) for k, v in model.params().items()}
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * cfg.scheduler_gamma ** (epoch // cfg.scheduler_step)
        order = gen.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            keep = None
            if cfg.dropout > 0:
                keep = gen.random((idx.size, cfg.hidden)) >= cfg.dropout
            loss, grads = loss_and_grads(model, X[idx], y[idx], keep)
            total += loss * idx.size
            for k in PARAM_NAMES:
                p = getattr(model, k)
                g = grads[k] + cfg.weight_decay * p
                v = velocity[k]
                v *= cfg.momentum
                v += g
                p -= lr * v
        model.loss_history.append(total / n)
    return model


def train(dataset: DatasetTable, labeled, cfg: TrainConfig, rng: RngStream) -> MlpModel:
    labeled = np.asarray(labeled, dtype=np.int64)
    if labeled.size == 0:
        raise ValidationError("cannot train on an empty labeled set")
    return fit(dataset.features[labeled], dataset.labels[labeled], dataset.class_count, cfg, rng)


@dataclass(frozen=True, eq=False)
class InferenceBundle:
    indices: np.ndarray
    probs: np.ndarray  # (N, C), dropout off
    mc_probs: np.ndarray  # (T, N, C), dropout on
    embeddings: np.ndarray  # (N, H), dropout off
    logits: np.ndarray  # (N, C), dropout off

    @property
    def pseudo_labels(self):
        # argmax returns the first maximum: ties go to the lowest class
        return np.argmax(self.probs, axis=1)

    def __len__(self):
        return self.indices.shape[0]


def infer(model: MlpModel, dataset: DatasetTable, indices, n_drop: int, rng: RngStream) -> InferenceBundle:
    if n_drop < 1:
        raise ValidationError("n_drop must be >= 1")
    indices = np.asarray(indices, dtype=np.int64)
    X = dataset.features[indices]
    h, logits = model.forward(X)
    probs = softmax(logits)
    gen = rng.generator()
    mc = np.empty((n_drop,) + probs.shape)
    for t in range(n_drop):
        if model.dropout_rate > 0:
            keep = gen.random(h.shape) >= model.dropout_rate
            mc[t] = softmax(model.head(h * keep / (1.0 - model.dropout_rate)))
        else:
            mc[t] = probs
    return InferenceBundle(indices, probs, mc, h, logits)


def grad_embedding(model: MlpModel, bundle: InferenceBundle):
    """Output-layer cross-entropy gradient under the pseudo-label, ``(p - e_yhat) (x) h``.

    Row layout is class-major: entry ``c * H + j`` is ``(p_c - [c == yhat]) * h_j``.
    """
    p = bundle.probs
    h = bundle.embeddings
    if p.shape[0] != h.shape[0]:
        raise ValidationError("probs and embeddings disagree on sample count")
    delta = p.copy()
    delta[np.arange(p.shape[0]), np.argmax(p, axis=1)] -= 1.0
    return (delta[:, :, None] * h[:, None, :]).reshape(p.shape[0], -1)


def _rms(a):
    return float(np.sqrt(np.mean(a * a))) if a.size else 0.0


def perturbed_outputs(model: MlpModel, dataset: DatasetTable, indices, noise_scale: float, draws: int, rng: RngStream):
    """Softmax outputs under ``draws`` independent Gaussian weight perturbations.

    Noise on each tensor has std ``noise_scale * rms(tensor)``. The model is
    never mutated: perturbed copies are built per draw.
    """
    if noise_scale < 0 or draws < 1:
        raise ValidationError("noise_scale >= 0 and draws >= 1 required")
    X = dataset.features[np.asarray(indices, dtype=np.int64)]
    gen = rng.generator()
    base = model.params()
    out = np.empty((draws, X.shape[0], model.n_classes))
    for d in range(draws):
        noisy = {}
        for k, p in base.items():
            noisy[k] = p + gen.standard_normal(p.shape) * (noise_scale * _rms(p))
        out[d] = softmax(model.with_params(noisy).forward(X)[1])
    return out


def sharpness_losses(model: MlpModel, X, rho: float):
    """Per-sample pseudo-label loss before and after one normalised ascent step of radius ``rho``.

    Each sample gets its own step ``theta + rho * g / ||g||`` with ``g`` that
    sample's full-parameter gradient. For this architecture the perturbed
    forward pass has a closed form, so no per-sample weight copies are built.
    """
    if rho < 0:
        raise ValidationError("rho must be non-negative")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    rows = np.arange(n)
    pre = X @ model.W1 + model.b1
    h = np.maximum(pre, 0.0)
    logits = h @ model.W2 + model.b2
    yhat = np.argmax(logits, axis=1)
    base = cross_entropy(logits, yhat)
    delta = softmax(logits)
    delta[rows, yhat] -= 1.0
    g_pre = (delta @ model.W2.T) * (pre > 0)
    x_sq = np.einsum("ij,ij->i", X, X)
    h_sq = np.einsum("ij,ij->i", h, h)
    d_sq = np.einsum("ij,ij->i", delta, delta)
    g_sq = np.einsum("ij,ij->i", g_pre, g_pre)
    gnorm = np.sqrt(h_sq * d_sq + d_sq + x_sq * g_sq + g_sq)
    eps = np.zeros(n)
    nz = gnorm > 0
    eps[nz] = rho / gnorm[nz]
    pre_p = pre + (eps * (x_sq + 1.0))[:, None] * g_pre
    h_p = np.maximum(pre_p, 0.0)
    hh = np.einsum("ij,ij->i", h_p, h)
    logits_p = h_p @ model.W2 + model.b2 + (eps * (hh + 1.0))[:, None] * delta
    perturbed = cross_entropy(logits_p, yhat)
    perturbed[~nz] = base[~nz]
    return base, perturbed


def ascent_perturbed_loss(model: MlpModel, dataset: DatasetTable, indices, rho: float):
    X = dataset.features[np.asarray(indices, dtype=np.int64)]
    return sharpness_losses(model, X, rho)[1]
