#!/usr/bin/env python3
"""Accuracy-vs-round comparison of all four reconstruction methods.

Defaults reproduce the stochastic K=75, M=25 setting; pass --K/--M/--batch
to move to the other operating points (e.g. --K 150 --M 50, or
--batch minibatch:1,30 for the mini-batch variant).

Usage: python scripts/run_accuracy_sweep.py [--K 75] [--M 25] [--T 30]
           [--seed 11] [--batch stochastic] [--out runs/accuracy]
"""

import argparse
import sys

from airgrad.cli import main as airgrad_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--K", default="75")
    parser.add_argument("--M", default="25")
    parser.add_argument("--T", default="30")
    parser.add_argument("--seed", default="11")
    parser.add_argument("--batch", default="stochastic")
    parser.add_argument("--out", default="runs/accuracy")
    args = parser.parse_args()
    return airgrad_main([
        "train", "--K", args.K, "--M", args.M, "--T", args.T,
        "--seed", args.seed, "--batch", args.batch,
        "--methods", "proposed,lmmse,mrc,perfect", "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
