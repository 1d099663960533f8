"""The 784-20-10 MLP, its gradients, and the server-side parameter updates.

Parameters live in one flat float64 vector of length 15910 with the fixed
layout [hidden weights (784x20, row-major) | hidden biases (20) |
output weights (20x10, row-major) | output biases (10)]. All math is done
in 64-bit floats; ReLU-blocked backprop produces exact zeros, which is what
makes the transmitted signals sparse downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mnist import Dataset

N_INPUT = 784
N_HIDDEN = 20
N_CLASSES = 10
N_PARAMS = N_INPUT * N_HIDDEN + N_HIDDEN + N_HIDDEN * N_CLASSES + N_CLASSES  # 15910

_W1_END = N_INPUT * N_HIDDEN
_B1_END = _W1_END + N_HIDDEN
_W2_END = _B1_END + N_HIDDEN * N_CLASSES


@dataclass
class TrainingConfig:
    """Optimizer constants; defaults are the ADAM setting used throughout."""

    optimizer: str = "adam"  # "adam" or "gd"
    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eta: float = 0.01  # learning rate for plain gradient descent


@dataclass
class ModelState:
    """Flat parameter vector plus the ADAM moment accumulators."""

    w: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0  # number of updates applied so far

    def copy(self) -> "ModelState":
        return ModelState(self.w.copy(), self.m.copy(), self.v.copy(), self.t)


@dataclass
class GradientVector:
    """A device's batch-averaged gradient with the side info it reports."""

    g: np.ndarray
    norm: float = field(init=False)
    batch_size: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        self.norm = float(np.linalg.norm(self.g))


def unflatten(w: np.ndarray):
    """Views (no copies) of the four parameter tensors inside the flat vector."""
    if w.shape != (N_PARAMS,):
        raise ValueError(f"expected parameter vector of length {N_PARAMS}, got {w.shape}")
    w1 = w[:_W1_END].reshape(N_INPUT, N_HIDDEN)
    b1 = w[_W1_END:_B1_END]
    w2 = w[_B1_END:_W2_END].reshape(N_HIDDEN, N_CLASSES)
    b2 = w[_W2_END:]
    return w1, b1, w2, b2


def flatten(w1, b1, w2, b2) -> np.ndarray:
    return np.concatenate([np.ravel(w1), b1, np.ravel(w2), b2])


def init_model_state(rng: np.random.Generator) -> ModelState:
    """Glorot-uniform weights, zero biases, zero ADAM moments."""
    lim1 = np.sqrt(6.0 / (N_INPUT + N_HIDDEN))
    lim2 = np.sqrt(6.0 / (N_HIDDEN + N_CLASSES))
    w1 = rng.uniform(-lim1, lim1, size=(N_INPUT, N_HIDDEN))
    w2 = rng.uniform(-lim2, lim2, size=(N_HIDDEN, N_CLASSES))
    w = flatten(w1, np.zeros(N_HIDDEN), w2, np.zeros(N_CLASSES))
    return ModelState(w=w, m=np.zeros(N_PARAMS), v=np.zeros(N_PARAMS), t=0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(w: np.ndarray, images: np.ndarray):
    """Hidden pre-activations, activations, and class probabilities for a batch."""
    w1, b1, w2, b2 = unflatten(w)
    z1 = images @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ w2 + b2
    return z1, a1, logits, _softmax(logits)


def forward(w: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Class probabilities (length 10, summing to 1) for one 784-pixel image."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (N_INPUT,):
        raise ValueError(f"expected a {N_INPUT}-pixel image, got shape {image.shape}")
    return _forward_batch(w, image[None, :])[3][0]


def local_gradient(w: np.ndarray, images: np.ndarray, labels: np.ndarray) -> GradientVector:
    """Cross-entropy gradient averaged over the batch, as a GradientVector."""
    images = np.atleast_2d(np.asarray(images, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    n = len(images)
    if n == 0:
        raise ValueError("empty batch")
    z1, a1, _, probs = _forward_batch(w, images)
    _, _, w2, _ = unflatten(w)

    # dL/dlogits for mean cross-entropy: (p - onehot)/n
    delta2 = probs
    delta2[np.arange(n), labels] -= 1.0
    delta2 /= n
    g_w2 = a1.T @ delta2
    g_b2 = delta2.sum(axis=0)
    delta1 = (delta2 @ w2.T) * (z1 > 0)
    g_w1 = images.T @ delta1
    g_b1 = delta1.sum(axis=0)
    return GradientVector(g=flatten(g_w1, g_b1, g_w2, g_b2), batch_size=n)


def adam_step(state: ModelState, grad: np.ndarray, cfg: TrainingConfig | None = None) -> ModelState:
    """One bias-corrected ADAM update; returns a new ModelState."""
    cfg = cfg or TrainingConfig()
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.w.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {state.w.shape}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    w = state.w - cfg.alpha * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return ModelState(w=w, m=m, v=v, t=t)


def gd_step(w: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """Plain gradient-descent update w - eta * grad."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != w.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {w.shape}")
    return w - eta * grad


def evaluate_accuracy(w: np.ndarray, dataset: Dataset) -> float:
    """Argmax classification accuracy; logit ties break toward the smaller class."""
    _, _, logits, _ = _forward_batch(w, dataset.images)
    predictions = np.argmax(logits, axis=1)
    return float(np.mean(predictions == dataset.labels))
