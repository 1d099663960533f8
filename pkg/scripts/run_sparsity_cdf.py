#!/usr/bin/env python3
"""Magnitude-ratio CDF of the transmitted signals, permutation on vs off.

Runs two trainings (identical except for the transmit-side permutation)
and writes the empirical CDF on a 101-point grid plus exact zero/nonzero
counts. The value at xi=0 is the fraction of exactly-zero elements among
resources that carry any signal.

Usage: python scripts/run_sparsity_cdf.py [--K 100] [--M 25] [--T 30]
           [--seed 606] [--out runs/sparsity]
"""

import argparse
import sys

from airgrad.cli import main as airgrad_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--K", default="100")
    parser.add_argument("--M", default="25")
    parser.add_argument("--T", default="30")
    parser.add_argument("--seed", default="606")
    parser.add_argument("--out", default="runs/sparsity")
    args = parser.parse_args()
    return airgrad_main([
        "sparsity", "--K", args.K, "--M", args.M, "--T", args.T,
        "--seed", args.seed, "--batch", "stochastic",
        "--methods", "proposed", "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
