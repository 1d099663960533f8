"""Frequency-selective uplink channel: CIR draws, OFDM responses, real stacking.

Each device-antenna link is an L-tap complex impulse response, redrawn
independently every communication round and held fixed across all OFDM
symbols of that round (quasi-static uplink). Radio resource n maps to
subcarrier f_n of OFDM symbol u_n; the per-resource channel matrix is the
real-domain stack [Re; Im] of the complex frequency responses, one column
per device.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .rng import substream

DEFAULT_TAPS = 10
DEFAULT_TAP_VARIANCE = 0.1
DEFAULT_SUBCARRIERS = 1024


@dataclass
class NoiseModel:
    """Complex noise variance and its per-real-dimension counterpart."""

    complex_variance: float

    @property
    def real_variance(self) -> float:
        return self.complex_variance / 2.0


@dataclass
class Cir:
    """One link's impulse response: L complex taps."""

    taps: np.ndarray
    device_index: int = 0
    round_index: int = 0


@dataclass
class ResourceChannel:
    """The channel of a single radio resource: complex responses and their 2MxK real stack."""

    round_index: int
    resource_index: int
    complex_responses: np.ndarray  # (K, M) complex
    matrix: np.ndarray  # (2M, K) real


def draw_cir(n_taps: int, per_tap_variance: float, rng: np.random.Generator,
             device_index: int = 0, round_index: int = 0) -> Cir:
    """i.i.d. circularly symmetric complex Gaussian taps, variance per tap as given."""
    if n_taps < 1:
        raise ConfigurationError("CIR needs at least one tap")
    if per_tap_variance <= 0:
        raise ConfigurationError("per-tap variance must be positive")
    parts = rng.standard_normal((n_taps, 2)) * np.sqrt(per_tap_variance / 2.0)
    return Cir(taps=parts[:, 0] + 1j * parts[:, 1],
               device_index=device_index, round_index=round_index)


def frequency_response(cir: Cir, n_subcarriers: int) -> np.ndarray:
    """Response at each subcarrier bin f: sum_l taps[l] * exp(-2j*pi*f*l/N)."""
    taps = np.asarray(cir.taps)
    if len(taps) > n_subcarriers:
        raise ConfigurationError(
            f"{len(taps)} taps exceed {n_subcarriers} subcarriers")
    bins = np.arange(n_subcarriers)
    lags = np.arange(len(taps))
    phases = np.exp(-2j * np.pi * np.outer(bins, lags) / n_subcarriers)
    return phases @ taps


def assemble_real_channel(complex_responses: np.ndarray, n_antennas: int, n_devices: int,
                          round_index: int = 0, resource_index: int = 1) -> ResourceChannel:
    """Stack per-device complex M-vectors into the 2MxK real matrix [Re; Im]."""
    h = np.asarray(complex_responses)
    if h.shape != (n_devices, n_antennas):
        raise ValueError(f"expected responses of shape ({n_devices}, {n_antennas}), got {h.shape}")
    matrix = np.vstack([h.real.T, h.imag.T])
    return ResourceChannel(round_index=round_index, resource_index=resource_index,
                           complex_responses=h, matrix=matrix)


def resource_index_map(n: int, n_subcarriers: int) -> tuple[int, int]:
    """Radio resource n (1-based) -> (subcarrier f_n, OFDM symbol u_n), both 1-based."""
    if n < 1:
        raise ValueError(f"resource index {n} out of range")
    u = -(-n // n_subcarriers)  # ceil
    f = n - (u - 1) * n_subcarriers
    return f, u


def subcarrier_bins(n_resources: int, n_subcarriers: int) -> np.ndarray:
    """0-based subcarrier bin of each resource 1..n_resources, vectorized."""
    return np.arange(n_resources) % n_subcarriers


def transmit_over_resource(channel: ResourceChannel, x: np.ndarray, real_variance: float,
                           rng: np.random.Generator) -> np.ndarray:
    """Received real vector y = H x + z with z ~ N(0, real_variance * I)."""
    x = np.asarray(x, dtype=np.float64)
    two_m, n_devices = channel.matrix.shape
    if x.shape != (n_devices,):
        raise ValueError(f"expected {n_devices} transmit values, got shape {x.shape}")
    if real_variance < 0:
        raise ConfigurationError("noise variance must be nonnegative")
    y = channel.matrix @ x
    if real_variance > 0:
        y = y + rng.standard_normal(two_m) * np.sqrt(real_variance)
    return y


def draw_round_cirs(master_seed: int, round_index: int, n_devices: int, n_antennas: int,
                    n_taps: int = DEFAULT_TAPS,
                    per_tap_variance: float = DEFAULT_TAP_VARIANCE) -> np.ndarray:
    """All device/antenna CIRs for one round, (K, M, L) complex.

    Device k's taps depend only on (master seed, round, k), so any subset of
    devices or rounds reproduces identically.
    """
    if per_tap_variance <= 0:
        raise ConfigurationError("per-tap variance must be positive")
    scale = np.sqrt(per_tap_variance / 2.0)
    taps = np.empty((n_devices, n_antennas, n_taps), dtype=np.complex128)
    for k in range(1, n_devices + 1):
        rng = substream(master_seed, "channel", round_index, k)
        parts = rng.standard_normal((n_antennas, n_taps, 2)) * scale
        taps[k - 1] = parts[..., 0] + 1j * parts[..., 1]
    return taps


def round_channel_stack(cirs: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Real channel matrices for every subcarrier bin of one round.

    cirs: (K, M, L) complex; returns (n_subcarriers, 2M, K).
    """
    n_devices, n_antennas, n_taps = cirs.shape
    if n_taps > n_subcarriers:
        raise ConfigurationError(f"{n_taps} taps exceed {n_subcarriers} subcarriers")
    bins = np.arange(n_subcarriers)
    lags = np.arange(n_taps)
    phases = np.exp(-2j * np.pi * np.outer(bins, lags) / n_subcarriers)  # (F, L)
    flat = cirs.reshape(n_devices * n_antennas, n_taps)
    resp = (phases @ flat.T).reshape(n_subcarriers, n_devices, n_antennas)
    stack = np.empty((n_subcarriers, 2 * n_antennas, n_devices))
    stack[:, :n_antennas, :] = resp.real.transpose(0, 2, 1)
    stack[:, n_antennas:, :] = resp.imag.transpose(0, 2, 1)
    return stack
