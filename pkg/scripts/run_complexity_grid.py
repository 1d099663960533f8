#!/usr/bin/env python3
"""Proposed-vs-LMMSE multiplication-count ratios over a (K, M) grid.

With --istar measured (default), each grid cell runs a short stochastic
training with the proposed method and plugs the measured mean support
size into the closed-form counts; pass an integer to skip the runs.

Usage: python scripts/run_complexity_grid.py [--K-list 100,150,200]
           [--M-list 25,50,100] [--istar measured] [--T 8]
           [--out runs/complexity]
"""

import argparse
import sys

from airgrad.cli import main as airgrad_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--K-list", dest="k_list", default="100,150,200")
    parser.add_argument("--M-list", dest="m_list", default="25,50,100")
    parser.add_argument("--istar", default="measured")
    parser.add_argument("--T", default="8")
    parser.add_argument("--seed", default="505")
    parser.add_argument("--out", default="runs/complexity")
    args = parser.parse_args()
    return airgrad_main([
        "complexity", "--K-list", args.k_list, "--M-list", args.m_list,
        "--istar", args.istar, "--T", args.T, "--seed", args.seed,
        "--batch", "stochastic", "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
