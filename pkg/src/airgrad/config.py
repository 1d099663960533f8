"""Experiment configuration shared by the round loop and the CLI."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError
from .rng import substream

ENV_DATA_DIR = "AIRGRAD_MNIST_DIR"

METHODS = ("proposed", "lmmse", "mrc", "perfect")


@dataclass
class BatchPolicy:
    """How many local samples each device uses per round.

    "stochastic" is one sample per device per round; "minibatch" draws each
    device's size uniformly from [lo, hi], fresh every round unless `fixed`
    pins the first draw for the whole run.
    """

    mode: str = "stochastic"
    lo: int = 1
    hi: int = 30
    fixed: bool = False

    def validate(self):
        if self.mode not in ("stochastic", "minibatch"):
            raise ConfigurationError(f"batch.mode: unknown mode {self.mode!r}")
        if self.mode == "minibatch" and not (1 <= self.lo <= self.hi):
            raise ConfigurationError(f"batch: need 1 <= lo <= hi, got [{self.lo}, {self.hi}]")

    def realized_sizes(self, master_seed: int, round_index: int, n_devices: int) -> np.ndarray:
        if self.mode == "stochastic":
            return np.ones(n_devices, dtype=np.int64)
        draw_round = 1 if self.fixed else round_index
        rng = substream(master_seed, "batch-size", draw_round)
        return rng.integers(self.lo, self.hi + 1, size=n_devices)


@dataclass
class ExperimentConfig:
    """One run's knobs; defaults mirror the standard simulation setting."""

    n_devices: int = 75
    n_antennas: int = 25
    n_taps: int = 10
    tap_variance: float = 0.1
    n_subcarriers: int = 1024
    noise_variance_c: float = 1.0  # complex-domain; real-domain is half this
    rounds: int = 30
    batch: BatchPolicy = field(default_factory=BatchPolicy)
    methods: tuple = ("proposed", "lmmse", "mrc", "perfect")
    master_seed: int = 1
    permute: bool = True
    optimizer: str = "adam"
    eta: float = 0.01  # only used with optimizer="gd"
    data_dir: str | None = None
    out_dir: str | None = None
    trials: int = 100_000
    dump_channels: bool = False  # debug CSV of per-round CIR realizations
    dump_recovery: bool = False  # debug CSV of per-resource recovery diagnostics

    @property
    def noise_variance(self) -> float:
        return self.noise_variance_c / 2.0

    def resolved_data_dir(self) -> str | None:
        return self.data_dir or os.environ.get(ENV_DATA_DIR)

    def validate(self):
        if self.n_devices < 1:
            raise ConfigurationError("K: need at least one device")
        if self.n_antennas < 1:
            raise ConfigurationError("M: need at least one antenna")
        if self.rounds < 0:
            raise ConfigurationError("T: round count cannot be negative")
        if self.n_taps < 1:
            raise ConfigurationError("L: need at least one CIR tap")
        if self.n_subcarriers < self.n_taps:
            raise ConfigurationError("nsub: need at least as many subcarriers as CIR taps")
        if self.noise_variance_c <= 0:
            raise ConfigurationError("noise: complex noise variance must be positive")
        if self.tap_variance <= 0:
            raise ConfigurationError("tap_variance: must be positive")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"methods: unknown method {m!r}")
        if not self.methods:
            raise ConfigurationError("methods: need at least one")
        if self.optimizer not in ("adam", "gd"):
            raise ConfigurationError(f"optimizer: unknown optimizer {self.optimizer!r}")
        if self.trials < 1:
            raise ConfigurationError("trials: must be positive")
        self.batch.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)
