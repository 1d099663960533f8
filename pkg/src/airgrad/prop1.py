"""Monte Carlo validation of the analytical residual-energy expectations.

Builds a fixed channel and a fixed support trajectory (grow along the true
support, then one overshoot pick), evaluates the closed-form expected
residual energies for the three support configurations at their natural
iterations, and checks them against empirical means under the two-point
signal model: each true-support device transmits +/- sqrt(alpha_k)
equiprobably, independently across devices and trials. The greedy
selection step is deliberately not run; the expectations are derived for
a given support history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel
from .recovery import expected_residual_norms, omega_update
from .rng import substream


@dataclass
class Prop1Construction:
    """Fixed channel, powers, and support trajectory shared by the three cases."""

    channels: np.ndarray  # (2M, K)
    support: list[int]  # true support, in selection order
    alphas: np.ndarray  # true powers for the support
    extra_index: int  # the overshoot pick
    extra_alpha: float
    omegas: list[np.ndarray]  # inverse after 0..|support|+1 updates
    noise_var: float


def build_construction(n_antennas: int, n_devices: int, support_size: int,
                       noise_var: float, master_seed: int) -> Prop1Construction:
    if not 0 <= support_size < n_devices:
        raise ValueError("support size must be in [0, K)")
    cirs = channel.draw_round_cirs(master_seed, 1, n_devices, n_antennas)
    h_stack = channel.round_channel_stack(cirs, channel.DEFAULT_SUBCARRIERS)
    channels = h_stack[3]  # any single subcarrier; bin 3 is arbitrary but fixed

    rng = substream(master_seed, "prop1", 0)
    picks = rng.permutation(n_devices)[: support_size + 1]
    support = [int(k) for k in picks[:support_size]]
    extra = int(picks[support_size])
    alphas = rng.uniform(0.5, 2.0, size=support_size)
    extra_alpha = float(rng.uniform(0.5, 2.0))

    omegas = [np.eye(2 * n_antennas) / noise_var]
    for k, a in zip(support, alphas):
        omegas.append(omega_update(omegas[-1], channels[:, k], a))
    omegas.append(omega_update(omegas[-1], channels[:, extra], extra_alpha))
    return Prop1Construction(channels=channels, support=support, alphas=alphas,
                             extra_index=extra, extra_alpha=extra_alpha,
                             omegas=omegas, noise_var=noise_var)


def analytical_energies(c: Prop1Construction) -> dict[int, float]:
    """Closed-form E[||r||^2] for cases 1..3 along the trajectory."""
    s = len(c.support)
    values = {}
    if s >= 1:
        values[1] = expected_residual_norms(
            1, c.omegas[s - 1], c.noise_var,
            leftover_alphas=c.alphas[s - 1:],
            leftover_channels=c.channels[:, c.support[s - 1:]])
    values[2] = expected_residual_norms(2, c.omegas[s], c.noise_var)
    values[3] = expected_residual_norms(
        3, c.omegas[s + 1], c.noise_var, omega_prev=c.omegas[s],
        alpha_last=c.extra_alpha, h_last=c.channels[:, c.extra_index])
    return values


def empirical_energies(c: Prop1Construction, trials: int, master_seed: int,
                       batch: int = 20000) -> dict[int, float]:
    """Monte Carlo means of ||r||^2 under the two-point signal model."""
    s = len(c.support)
    h_sup = c.channels[:, c.support]  # (2M, s)
    roots = np.sqrt(c.alphas)
    rng = substream(master_seed, "prop1", 1)
    cases = [(1, c.omegas[s - 1])] if s >= 1 else []
    cases += [(2, c.omegas[s]), (3, c.omegas[s + 1])]
    sums = {case: 0.0 for case, _ in cases}
    done = 0
    while done < trials:
        n = min(batch, trials - done)
        signs = rng.integers(0, 2, size=(s, n)) * 2.0 - 1.0
        y = h_sup @ (roots[:, None] * signs) if s else 0.0
        y = y + rng.standard_normal((c.channels.shape[0], n)) * np.sqrt(c.noise_var)
        for case, omega in cases:
            r = c.noise_var * (omega @ y)
            sums[case] += float(np.einsum("mn,mn->", r, r))
        done += n
    return {case: sums[case] / trials for case, _ in cases}


def prop1_table(n_antennas: int, n_devices: int, support_size: int, trials: int,
                noise_var: float, master_seed: int) -> list[dict]:
    """Rows of (case, analytical, empirical, relative error) plus the ordering."""
    c = build_construction(n_antennas, n_devices, support_size, noise_var, master_seed)
    analytical = analytical_energies(c)
    empirical = empirical_energies(c, trials, master_seed)
    rows = []
    for case in sorted(analytical):
        a, e = analytical[case], empirical[case]
        rows.append({
            "case": case,
            "analytical": a,
            "empirical": e,
            "rel_error": abs(e - a) / abs(a),
        })
    return rows
