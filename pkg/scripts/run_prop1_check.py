#!/usr/bin/env python3
"""Analytical vs Monte Carlo residual energies for the three support cases.

Usage: python scripts/run_prop1_check.py [--M 16] [--K 8] [--support 3]
           [--trials 100000] [--out runs/prop1]
"""

import argparse
import sys

from airgrad.cli import main as airgrad_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--M", default="16")
    parser.add_argument("--K", default="8")
    parser.add_argument("--support", default="3")
    parser.add_argument("--trials", default="100000")
    parser.add_argument("--seed", default="101")
    parser.add_argument("--out", default="runs/prop1")
    args = parser.parse_args()
    return airgrad_main([
        "prop1", "--M", args.M, "--K", args.K, "--support", args.support,
        "--trials", args.trials, "--seed", args.seed, "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
