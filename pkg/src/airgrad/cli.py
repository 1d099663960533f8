"""Command-line experiment recipes.

Subcommands:
  train       accuracy-vs-round sweeps over the configured methods
  sparsity    magnitude-ratio CDF with the permutation on vs off
  prop1       Monte Carlo check of the residual-energy expectations
  complexity  multiplication-count table and proposed/LMMSE ratios

Every command is a pure function of (config, seed) to its output files,
wall-clock timing columns aside. Exit codes: 0 success, 2 usage error,
3 data error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import model, recovery
from .config import ENV_DATA_DIR, METHODS, BatchPolicy, ExperimentConfig
from .errors import ConfigurationError, DataError
from .orchestrator import MetricsWriter, prepare_setup, run_experiment, write_manifest
from .prop1 import prop1_table
from .rng import substream

XI_RESERVOIR_CAP = 1_000_000
XI_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


def _parse_batch(text: str) -> BatchPolicy:
    if text == "stochastic":
        return BatchPolicy(mode="stochastic")
    if text.startswith("minibatch:"):
        lo, hi = text.split(":", 1)[1].split(",")
        return BatchPolicy(mode="minibatch", lo=int(lo), hi=int(hi))
    if text == "minibatch":
        return BatchPolicy(mode="minibatch")
    raise argparse.ArgumentTypeError(
        f"batch must be 'stochastic' or 'minibatch:lo,hi', got {text!r}")


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airgrad", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--K", type=int, help="number of devices")
        p.add_argument("--M", type=int, help="number of server antennas")
        p.add_argument("--L", type=int, help="CIR taps")
        p.add_argument("--nsub", type=int, help="OFDM subcarriers")
        p.add_argument("--noise", type=float, help="complex noise variance")
        p.add_argument("--T", type=int, help="communication rounds")
        p.add_argument("--batch", type=_parse_batch, help="stochastic | minibatch:lo,hi")
        p.add_argument("--methods", type=str, help=f"comma list from {','.join(METHODS)}")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--config", type=str, help="JSON config file; flags override it")
        p.add_argument("--trials", type=int, help="Monte Carlo trials")
        p.add_argument("--no-permute", action="store_true", default=None,
                       help="disable the transmit-side random permutation")
        p.add_argument("--data", type=str,
                       help=f"dataset directory (default ${ENV_DATA_DIR})")

    p_train = sub.add_parser("train", help="accuracy sweep over methods")
    add_common(p_train)
    p_train.add_argument("--dump-channels", action="store_true", default=None,
                         help="debug CSV of the per-round channel realizations")
    p_train.add_argument("--dump-recovery", action="store_true", default=None,
                         help="debug CSV of per-resource recovery diagnostics")

    p_sparsity = sub.add_parser("sparsity", help="magnitude-ratio CDF, permutation on vs off")
    add_common(p_sparsity)
    p_sparsity.add_argument("--dump-xi", action="store_true",
                            help="also dump raw (round, resource, device, xi) samples")

    p_prop1 = sub.add_parser("prop1", help="residual-expectation Monte Carlo table")
    add_common(p_prop1)
    p_prop1.add_argument("--support", type=int, default=3,
                         help="true support size (must be < K)")

    p_complex = sub.add_parser("complexity", help="multiplication-count ratio table")
    add_common(p_complex)
    p_complex.add_argument("--K-list", dest="k_list", type=_parse_int_list,
                           help="comma list of device counts")
    p_complex.add_argument("--M-list", dest="m_list", type=_parse_int_list,
                           help="comma list of antenna counts")
    p_complex.add_argument("--istar", type=str, default="measured",
                           help="'measured' or a fixed integer support size")
    return parser


_CONFIG_KEYS = {
    "K": "n_devices", "M": "n_antennas", "L": "n_taps", "nsub": "n_subcarriers",
    "noise": "noise_variance_c", "T": "rounds", "seed": "master_seed",
    "out": "out_dir", "trials": "trials", "data": "data_dir",
}


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        try:
            blob = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DataError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config: invalid JSON ({exc})") from exc
        for key, value in blob.items():
            field = _CONFIG_KEYS.get(key, key)
            if field == "batch":
                cfg.batch = BatchPolicy(**value) if isinstance(value, dict) else _parse_batch(value)
            elif field == "methods":
                cfg.methods = tuple(value.split(",")) if isinstance(value, str) else tuple(value)
            elif field == "permute":
                cfg.permute = bool(value)
            elif hasattr(cfg, field):
                setattr(cfg, field, type(getattr(cfg, field))(value)
                        if getattr(cfg, field) is not None else value)
            else:
                raise ConfigurationError(f"config: unknown key {key!r}")
    for flag, field in _CONFIG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, field, value)
    if args.batch is not None:
        cfg.batch = args.batch
    if args.methods is not None:
        cfg.methods = tuple(tok for tok in args.methods.split(",") if tok)
    if args.no_permute:
        cfg.permute = False
    if getattr(args, "dump_channels", None):
        cfg.dump_channels = True
    if getattr(args, "dump_recovery", None):
        cfg.dump_recovery = True
    cfg.validate()
    return cfg


def _run_id(prefix: str, cfg: ExperimentConfig) -> str:
    return (f"{prefix}-K{cfg.n_devices}-M{cfg.n_antennas}-T{cfg.rounds}"
            f"-{cfg.batch.mode}-seed{cfg.master_seed}")


def cmd_train(cfg: ExperimentConfig) -> Path:
    """Run the configured methods and stream the metrics CSV plus a manifest."""
    out_dir = Path(cfg.out_dir or ".")
    run_id = _run_id("train", cfg)
    setup = prepare_setup(cfg)
    if cfg.dump_channels or cfg.dump_recovery:
        setup.dump_dir = out_dir / f"{run_id}.debug"
    sink = MetricsWriter(out_dir / f"{run_id}.metrics.csv", run_id, cfg)
    try:
        run_experiment(cfg, setup=setup, sink=sink)
    finally:
        sink.close()
    write_manifest(out_dir, run_id, cfg)
    return out_dir / f"{run_id}.metrics.csv"


class XiCollector:
    """Streams magnitude-ratio samples into a bounded uniform subsample.

    Resources whose maximum magnitude is zero carry no signal at all; the
    ratio is 0/0 there, so they are excluded from the CDF population (exact
    zero/nonzero counts over all elements are tracked separately).
    """

    def __init__(self, master_seed: int, variant: int, cap: int = XI_RESERVOIR_CAP,
                 dump_limit: int = 0):
        self._rng = substream(master_seed, "reservoir", variant)
        self.cap = cap
        self._keys = np.empty(0)
        self._values = np.empty(0)
        self.zero_defined = 0
        self.defined_total = 0
        self.nonzero_all = 0
        self.total_all = 0
        self.undefined_resources = 0
        self.dump_rows: list[tuple] = []
        self._dump_limit = dump_limit

    def __call__(self, round_index: int, signals: np.ndarray):
        mags = np.abs(signals)  # (K, N_w)
        peaks = mags.max(axis=0)
        defined = peaks > 0
        self.total_all += mags.size
        self.nonzero_all += int(np.count_nonzero(mags))
        self.undefined_resources += int(np.count_nonzero(~defined))
        ratios = mags[:, defined] / peaks[defined]
        self.defined_total += ratios.size
        self.zero_defined += int(ratios.size - np.count_nonzero(ratios))
        flat = ratios.ravel()
        keys = self._rng.random(flat.size)
        self._keys = np.concatenate([self._keys, keys])
        self._values = np.concatenate([self._values, flat])
        if len(self._keys) > self.cap:
            order = np.argpartition(self._keys, self.cap)[: self.cap]
            self._keys = self._keys[order]
            self._values = self._values[order]
        if self._dump_limit and len(self.dump_rows) < self._dump_limit:
            res_idx = np.flatnonzero(defined)[:40]
            for n in res_idx:
                for k in range(mags.shape[0]):
                    self.dump_rows.append((round_index, int(n) + 1, k + 1,
                                           mags[k, n] / peaks[n]))
                if len(self.dump_rows) >= self._dump_limit:
                    break

    def cdf(self, grid: np.ndarray) -> np.ndarray:
        if self._values.size == 0:
            return np.zeros_like(grid)
        samples = np.sort(self._values)
        return np.searchsorted(samples, grid, side="right") / samples.size

    def summary(self) -> dict:
        return {
            "nonzero_fraction_all": self.nonzero_all / max(self.total_all, 1),
            "zero_fraction_defined": self.zero_defined / max(self.defined_total, 1),
            "nonzero_fraction_defined":
                1.0 - self.zero_defined / max(self.defined_total, 1),
            "undefined_resources": self.undefined_resources,
            "samples_kept": int(self._values.size),
        }


def cmd_sparsity(cfg: ExperimentConfig, dump_xi: bool = False) -> Path:
    """Train with the permutation on and off, emitting the xi CDF for both."""
    out_dir = Path(cfg.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    method = next((m for m in cfg.methods if m != "perfect"), "proposed")
    collectors = {}
    for variant, permute in (("permuted", True), ("unpermuted", False)):
        run_cfg = dataclasses.replace(
            cfg, methods=(method,), permute=permute,
            batch=dataclasses.replace(cfg.batch))
        collector = XiCollector(cfg.master_seed, variant=int(permute),
                                dump_limit=200_000 if dump_xi else 0)
        setup = prepare_setup(run_cfg)
        setup.sparsity_hook = collector
        run_experiment(run_cfg, setup=setup)
        collectors[variant] = collector

    cdf_path = out_dir / f"{_run_id('sparsity', cfg)}.csv"
    with open(cdf_path, "w", newline="") as fh:
        fh.write("# schema: airgrad.sparsity.v1\n")
        writer = csv.writer(fh)
        writer.writerow(["variant", "xi", "cdf"])
        for variant, collector in collectors.items():
            for q, c in zip(XI_GRID, collector.cdf(XI_GRID)):
                writer.writerow([variant, f"{q:.2f}", f"{c:.6f}"])
    summary = {variant: c.summary() for variant, c in collectors.items()}
    summary_path = out_dir / f"{_run_id('sparsity', cfg)}.summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    if dump_xi:
        dump_path = out_dir / f"{_run_id('sparsity', cfg)}.samples.csv"
        with open(dump_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "resource", "device", "xi"])
            for variant, collector in collectors.items():
                for row in collector.dump_rows:
                    writer.writerow([row[0], row[1], row[2], f"{row[3]:.6f}"])
    return cdf_path


def cmd_prop1(cfg: ExperimentConfig, support_size: int) -> Path:
    """Emit the analytical-vs-empirical residual-energy table."""
    if support_size >= cfg.n_devices or support_size < 0:
        raise ConfigurationError("support: must satisfy 0 <= support < K")
    rows = prop1_table(cfg.n_antennas, cfg.n_devices, support_size,
                       cfg.trials, cfg.noise_variance, cfg.master_seed)
    out_dir = Path(cfg.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / (f"prop1-M{cfg.n_antennas}-K{cfg.n_devices}-s{support_size}"
                      f"-seed{cfg.master_seed}.csv")
    with open(path, "w", newline="") as fh:
        fh.write("# schema: airgrad.prop1.v1\n")
        writer = csv.writer(fh)
        writer.writerow(["case", "analytical", "empirical", "rel_error"])
        for row in rows:
            writer.writerow([row["case"], f"{row['analytical']:.8e}",
                             f"{row['empirical']:.8e}", f"{row['rel_error']:.6f}"])
    values = [row["analytical"] for row in rows]
    ordered = all(a >= b for a, b in zip(values, values[1:]))
    print(f"prop1: ordering E1 >= E2 >= E3 {'holds' if ordered else 'VIOLATED'}; "
          f"max rel error {max(r['rel_error'] for r in rows):.4f}")
    return path


def cmd_complexity(cfg: ExperimentConfig, k_list, m_list, istar_source: str) -> Path:
    """Tabulate multiplication counts and proposed/LMMSE ratios over a (K, M) grid."""
    k_list = k_list or [cfg.n_devices]
    m_list = m_list or [cfg.n_antennas]
    measured = istar_source == "measured"
    if not measured:
        try:
            fixed_istar = int(istar_source)
        except ValueError:
            raise ConfigurationError(
                f"istar: expected 'measured' or an integer, got {istar_source!r}") from None
    out_dir = Path(cfg.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"complexity-seed{cfg.master_seed}.csv"
    with open(path, "w", newline="") as fh:
        fh.write("# schema: airgrad.complexity.v1\n")
        writer = csv.writer(fh)
        writer.writerow(["K", "M", "istar_source", "istar", "C_proposed", "C_lmmse",
                         "C_mrc", "ratio_general", "ratio_large_scale"])
        for k in k_list:
            for m in m_list:
                if measured:
                    run_cfg = dataclasses.replace(
                        cfg, n_devices=k, n_antennas=m, methods=("proposed",),
                        batch=dataclasses.replace(cfg.batch))
                    records = run_experiment(run_cfg)
                    istar = float(np.mean([r.mean_istar for r in records]))
                else:
                    istar = float(fixed_istar)
                ledger = recovery.complexity_ledger(k, m, istar)
                writer.writerow([
                    k, m, istar_source, f"{istar:.4f}",
                    f"{ledger.proposed:.1f}", f"{ledger.lmmse:.1f}", f"{ledger.mrc:.1f}",
                    f"{ledger.ratio_general:.6f}",
                    f"{ledger.ratio_large_scale:.6f}",
                ])
    return path


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "train":
            path = cmd_train(cfg)
        elif args.command == "sparsity":
            path = cmd_sparsity(cfg, dump_xi=args.dump_xi)
        elif args.command == "prop1":
            path = cmd_prop1(cfg, args.support)
        elif args.command == "complexity":
            path = cmd_complexity(cfg, args.k_list, args.m_list, args.istar)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command}")
        print(f"wrote {path}")
        return 0
    except ConfigurationError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
