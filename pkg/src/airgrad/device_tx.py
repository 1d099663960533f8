"""Device-side transmit construction: permutation, power scaling, side info.

Each device scrambles its gradient with a private random permutation that
the server can regenerate from a shared seed, then scales the result to a
fixed transmit power. Because the permutations differ across devices, the
per-resource vector seen by the server collects gradient entries belonging
to unrelated weights, and a sparse gradient yields a sparse received signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import substream


@dataclass
class Permutation:
    """Bijection on gradient positions, regenerable from (shared seed, device)."""

    device_index: int
    forward: np.ndarray  # x[i] = g[forward[i]]
    seed: int

    @property
    def inverse(self) -> np.ndarray:
        return np.argsort(self.forward)


@dataclass
class TransmitFrame:
    """One round of per-device transmit vectors plus the error-free side info."""

    signals: np.ndarray  # (K, N_w); row k is device k+1's transmit vector
    gradient_norms: np.ndarray  # (K,)
    batch_sizes: np.ndarray  # (K,)
    silent: np.ndarray  # (K,) bool; devices whose gradient was exactly zero


def make_permutation(shared_seed: int, device_index: int, length: int) -> Permutation:
    """Uniform random permutation keyed by (shared seed, device index)."""
    rng = substream(shared_seed, "permutation", device_index)
    return Permutation(device_index=device_index,
                       forward=rng.permutation(length),
                       seed=shared_seed)


def build_transmit_signal(gradient: np.ndarray, perm: Permutation) -> tuple[np.ndarray, bool]:
    """Permute and scale a gradient so that ||x||^2 equals its length.

    Returns (signal, silent): a zero gradient cannot be normalized, so the
    device stays silent this round and sends the all-zero signal.
    """
    g = np.asarray(gradient, dtype=np.float64)
    norm_sq = float(g @ g)
    if norm_sq == 0.0:
        return np.zeros_like(g), True
    return np.sqrt(len(g) / norm_sq) * g[perm.forward], False


def invert_permutation(x_hat: np.ndarray, perm: Permutation, gradient_norm: float) -> np.ndarray:
    """Undo the transmit-side permutation and scaling given the reported norm."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_hat.shape != perm.forward.shape:
        raise ValueError(f"estimate length {x_hat.shape} != permutation length {perm.forward.shape}")
    if gradient_norm == 0.0:
        return np.zeros_like(x_hat)
    g_hat = np.empty_like(x_hat)
    g_hat[perm.forward] = x_hat
    return np.sqrt(gradient_norm**2 / len(x_hat)) * g_hat


def magnitude_ratio(x: np.ndarray) -> np.ndarray:
    """Per-device magnitude over the resource's max magnitude; all-zero -> all zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 1:
        raise ValueError("need at least one device")
    mags = np.abs(x)
    peak = mags.max()
    if peak == 0.0:
        return np.zeros_like(mags)
    return mags / peak


def build_transmit_frame(gradients: np.ndarray, perms: list[Permutation],
                         batch_sizes: np.ndarray) -> TransmitFrame:
    """Assemble the whole round's frame from per-device gradients (K, N_w)."""
    n_devices, length = gradients.shape
    signals = np.zeros_like(gradients)
    norms = np.linalg.norm(gradients, axis=1)
    silent = np.zeros(n_devices, dtype=bool)
    for k in range(n_devices):
        signals[k], silent[k] = build_transmit_signal(gradients[k], perms[k])
    return TransmitFrame(signals=signals, gradient_norms=norms,
                         batch_sizes=np.asarray(batch_sizes), silent=silent)
