"""The end-to-end federated round loop.

Each communication round: devices compute local gradients on their shards,
build permuted power-normalized transmit signals, and send one gradient
element per radio resource; the server recovers every resource with the
configured method (or bypasses the channel entirely for the centralized
"perfect" reference), undoes the permutations, forms the batch-size
weighted global gradient, and applies one optimizer step.

All randomness flows through purpose-keyed substreams of the master seed,
per round and per device, so any method subset reproduces bit-identically
and the perfect path never touches channel or noise draws.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel, device_tx, model, recovery
from .config import ExperimentConfig
from .errors import DataError
from .mnist import Dataset, LocalDataset, load_mnist_dir, partition_non_iid
from .rng import substream

METRICS_SCHEMA = "airgrad.metrics.v1"
METRICS_COLUMNS = ("run_id", "method", "K", "M", "round", "accuracy",
                   "mean_reconstruction_mse", "mean_I_star", "wall_ms")


@dataclass
class RoundRecord:
    """Everything worth keeping from one communication round."""

    round_index: int
    method: str
    accuracy: float
    gradient_norms: np.ndarray
    batch_sizes: np.ndarray
    reconstruction_mse: np.ndarray  # per device, NaN for silent devices
    global_gradient: np.ndarray
    mean_istar: float | None
    wall_ms: float

    @property
    def mean_reconstruction_mse(self) -> float:
        finite = self.reconstruction_mse[np.isfinite(self.reconstruction_mse)]
        return float(finite.mean()) if finite.size else float("nan")


@dataclass
class FederatedSetup:
    """Immutable per-run context: data shards, permutations, channel knobs."""

    cfg: ExperimentConfig
    train: Dataset
    test: Dataset
    shards: list[LocalDataset]
    perms: list[device_tx.Permutation]
    sparsity_hook: object = None  # called with (round, signals) when collecting xi stats
    dump_dir: Path | None = None  # destination for the flag-gated debug CSVs


def aggregate(gradient_rows: np.ndarray, batch_sizes: np.ndarray) -> np.ndarray:
    """Batch-size weighted mean of the per-device gradients."""
    sizes = np.asarray(batch_sizes, dtype=np.float64)
    total = sizes.sum()
    if total <= 0:
        raise ValueError("all batch sizes are zero")
    return (sizes / total) @ np.asarray(gradient_rows)


def prepare_setup(cfg: ExperimentConfig, train: Dataset | None = None,
                  test: Dataset | None = None) -> FederatedSetup:
    """Load data, carve the non-IID shards, and fix per-device permutations."""
    cfg.validate()
    if train is None or test is None:
        data_dir = cfg.resolved_data_dir()
        if not data_dir:
            raise DataError("no dataset directory configured (flag --data or AIRGRAD_MNIST_DIR)")
        train = load_mnist_dir(data_dir, "train")
        test = load_mnist_dir(data_dir, "test")
    shards = partition_non_iid(train, cfg.n_devices, substream(cfg.master_seed, "partition"))
    perms = [device_tx.make_permutation(cfg.master_seed, k, model.N_PARAMS)
             for k in range(1, cfg.n_devices + 1)]
    return FederatedSetup(cfg=cfg, train=train, test=test, shards=shards, perms=perms)


def _local_gradients(setup: FederatedSetup, round_index: int, sizes: np.ndarray,
                     w: np.ndarray) -> np.ndarray:
    rows = np.empty((setup.cfg.n_devices, model.N_PARAMS))
    for k, shard in enumerate(setup.shards, start=1):
        rng = substream(setup.cfg.master_seed, "batch-select", round_index, k)
        picks = rng.choice(shard.indices, size=int(sizes[k - 1]), replace=False)
        grad = model.local_gradient(w, setup.train.images[picks], setup.train.labels[picks])
        rows[k - 1] = grad.g
    return rows


def _uplink_round(setup: FederatedSetup, round_index: int, method: str,
                  gradients: np.ndarray, sizes: np.ndarray):
    """Transmit, recover, and reconstruct all device gradients for one round."""
    cfg = setup.cfg
    n_res = model.N_PARAMS
    noise_var = cfg.noise_variance

    if cfg.permute:
        frame = device_tx.build_transmit_frame(gradients, setup.perms, sizes)
    else:
        # ablation: identical scaling but no permutation
        norms = np.linalg.norm(gradients, axis=1)
        silent = norms == 0
        scale = np.where(silent, 0.0, np.sqrt(n_res) / np.where(silent, 1.0, norms))
        frame = device_tx.TransmitFrame(signals=scale[:, None] * gradients,
                                        gradient_norms=norms, batch_sizes=sizes,
                                        silent=silent)
    if setup.sparsity_hook is not None:
        setup.sparsity_hook(round_index, frame.signals)

    cirs = channel.draw_round_cirs(cfg.master_seed, round_index, cfg.n_devices,
                                   cfg.n_antennas, cfg.n_taps, cfg.tap_variance)
    if cfg.dump_channels and setup.dump_dir is not None:
        _dump_channels(setup.dump_dir / "channels.csv", round_index, cirs)
    h_stack = channel.round_channel_stack(cirs, cfg.n_subcarriers)
    bins = channel.subcarrier_bins(n_res, cfg.n_subcarriers)

    y_block = np.empty((n_res, 2 * cfg.n_antennas))
    for lo in range(0, n_res, cfg.n_subcarriers):
        hi = min(lo + cfg.n_subcarriers, n_res)
        y_block[lo:hi] = np.einsum("fmk,fk->fm", h_stack[: hi - lo],
                                   frame.signals[:, lo:hi].T)
    if noise_var > 0:
        noise_rng = substream(cfg.master_seed, "noise", round_index)
        y_block += noise_rng.standard_normal(y_block.shape) * np.sqrt(noise_var)

    want_diag = cfg.dump_recovery and setup.dump_dir is not None
    diagnostics = [] if (want_diag and method == "proposed") else None
    x_hat, istar = recovery.recover_all(method, y_block, h_stack, bins, noise_var,
                                        diagnostics=diagnostics)
    if want_diag:
        _dump_recovery(setup.dump_dir / "recovery.csv", round_index, method,
                       istar, diagnostics, cfg)

    reconstructed = np.empty_like(gradients)
    for k in range(cfg.n_devices):
        if cfg.permute:
            reconstructed[k] = device_tx.invert_permutation(
                x_hat[:, k], setup.perms[k], frame.gradient_norms[k])
        else:
            reconstructed[k] = (frame.gradient_norms[k] / np.sqrt(n_res)) * x_hat[:, k]
    mean_istar = float(istar.mean()) if istar is not None else None
    return reconstructed, frame, mean_istar


def run_round(state: model.ModelState, setup: FederatedSetup, method: str,
              round_index: int) -> tuple[model.ModelState, RoundRecord]:
    """Advance the model by one communication round under the given method."""
    cfg = setup.cfg
    started = time.perf_counter()
    sizes = cfg.batch.realized_sizes(cfg.master_seed, round_index, cfg.n_devices)
    gradients = _local_gradients(setup, round_index, sizes, state.w)
    norms = np.linalg.norm(gradients, axis=1)

    if method == "perfect":
        reconstructed, mean_istar = gradients, None
        mse = np.zeros(cfg.n_devices)
        mse[norms == 0] = np.nan
    else:
        reconstructed, frame, mean_istar = _uplink_round(
            setup, round_index, method, gradients, sizes)
        err = np.linalg.norm(reconstructed - gradients, axis=1) ** 2
        with np.errstate(invalid="ignore", divide="ignore"):
            mse = np.where(norms > 0, err / norms**2, np.nan)

    global_grad = aggregate(reconstructed, sizes)
    if cfg.optimizer == "adam":
        new_state = model.adam_step(state, global_grad)
    else:
        new_state = model.ModelState(model.gd_step(state.w, global_grad, cfg.eta),
                                     state.m, state.v, state.t + 1)
    accuracy = model.evaluate_accuracy(new_state.w, setup.test)
    record = RoundRecord(
        round_index=round_index,
        method=method,
        accuracy=accuracy,
        gradient_norms=norms,
        batch_sizes=sizes,
        reconstruction_mse=mse,
        global_gradient=global_grad,
        mean_istar=mean_istar,
        wall_ms=(time.perf_counter() - started) * 1e3,
    )
    return new_state, record


def _dump_channels(path: Path, round_index: int, cirs: np.ndarray):
    """Debug CSV of CIR realizations: one row per (device, antenna, tap)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(["round", "device", "antenna", "tap", "re", "im"])
        n_devices, n_antennas, n_taps = cirs.shape
        for k in range(n_devices):
            for m in range(n_antennas):
                for tap in range(n_taps):
                    value = cirs[k, m, tap]
                    writer.writerow([round_index, k + 1, m + 1, tap,
                                     f"{value.real:.10e}", f"{value.imag:.10e}"])


def _dump_recovery(path: Path, round_index: int, method: str, istar,
                   diagnostics, cfg: ExperimentConfig):
    """Debug CSV of per-resource recovery diagnostics, one row per iteration."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(["round", "resource", "method", "iteration",
                             "residual_norm_sq", "threshold", "istar", "mult_count"])
        if method == "proposed":
            counts = {n: recovery.complexity_count("proposed", cfg.n_devices,
                                                   cfg.n_antennas, int(i))
                      for n, i in enumerate(istar)}
            for rows, iteration, rn2, e_th in diagnostics:
                for local, n in enumerate(rows):
                    writer.writerow([round_index, int(n) + 1, method, iteration,
                                     f"{rn2[local]:.8e}", f"{e_th[local]:.8e}",
                                     int(istar[n]), counts[int(n)]])
        else:
            count = recovery.complexity_count(method, cfg.n_devices, cfg.n_antennas)
            for n in range(model.N_PARAMS):
                writer.writerow([round_index, n + 1, method, "", "", "", "", count])


class MetricsWriter:
    """Streams one CSV row per (method, round); schema versioned in a comment line."""

    def __init__(self, path, run_id: str, cfg: ExperimentConfig):
        self.path = Path(path)
        self.run_id = run_id
        self.cfg = cfg
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(f"# schema: {METRICS_SCHEMA}\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(METRICS_COLUMNS)
        self._fh.flush()

    def write(self, method: str, round_index: int, accuracy: float,
              mean_mse: float, mean_istar: float | None, wall_ms: float):
        self._writer.writerow([
            self.run_id, method, self.cfg.n_devices, self.cfg.n_antennas,
            round_index, f"{accuracy:.6f}",
            "" if np.isnan(mean_mse) else f"{mean_mse:.8e}",
            "" if mean_istar is None else f"{mean_istar:.4f}",
            f"{wall_ms:.1f}",
        ])
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_manifest(out_dir, run_id: str, cfg: ExperimentConfig, extra: dict | None = None):
    manifest = {"run_id": run_id, "schema": METRICS_SCHEMA, "config": cfg.to_dict()}
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / f"{run_id}.manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def run_experiment(cfg: ExperimentConfig, setup: FederatedSetup | None = None,
                   sink: MetricsWriter | None = None) -> list[RoundRecord]:
    """Run every configured method for T rounds from a common initialization.

    Streams metrics to `sink` after each round (initial accuracy goes out as
    a round-0 row). Returns all RoundRecords; reproducible to the bit from
    (config, master seed), timing aside.
    """
    cfg.validate()
    if setup is None:
        setup = prepare_setup(cfg)
    records: list[RoundRecord] = []
    for method in cfg.methods:
        state = model.init_model_state(substream(cfg.master_seed, "init"))
        if sink is not None:
            initial = model.evaluate_accuracy(state.w, setup.test)
            _sink_write(sink, method, 0, initial, float("nan"), None, 0.0)
        for t in range(1, cfg.rounds + 1):
            state, record = run_round(state, setup, method, t)
            records.append(record)
            if sink is not None:
                _sink_write(sink, method, t, record.accuracy,
                            record.mean_reconstruction_mse, record.mean_istar,
                            record.wall_ms)
    return records


def _sink_write(sink, method, round_index, accuracy, mean_mse, mean_istar, wall_ms):
    try:
        sink.write(method, round_index, accuracy, mean_mse, mean_istar, wall_ms)
    except OSError as exc:
        raise RuntimeError(f"metrics sink failed at round {round_index}: {exc}") from exc
