#!/usr/bin/env python3
"""Generate the procedural digit corpus in MNIST's IDX format.

Usage: python scripts/make_dataset.py [OUT_DIR] [--seed N] [--force]
"""

import argparse

from airgrad.digits import DEFAULT_SEED, generate_digit_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", nargs="?", default=".data")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--force", action="store_true",
                        help="regenerate even if the files exist")
    args = parser.parse_args()
    root = generate_digit_corpus(args.out_dir, seed=args.seed, force=args.force)
    print(f"digit corpus ready under {root}")
    print(f"export AIRGRAD_MNIST_DIR={root.resolve()}")


if __name__ == "__main__":
    main()
