"""Hierarchical, purpose-keyed RNG substreams.

Every random draw in a run comes from a substream addressed by
(master seed, purpose, *indices). Enabling or disabling one consumer
(e.g. switching the recovery method) never perturbs the draws seen by
another, which keeps ablations comparable under a shared master seed.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose ids; never renumber, or archived runs stop being reproducible.
_PURPOSES = {
    "init": 0,
    "partition": 1,
    "permutation": 2,
    "channel": 3,
    "noise": 4,
    "batch-size": 5,
    "batch-select": 6,
    "reservoir": 7,
    "prop1": 8,
    "dataset": 9,
}


def _key_part(part) -> int:
    if isinstance(part, str):
        try:
            return _PURPOSES[part]
        except KeyError:
            raise ValueError(f"unknown RNG purpose {part!r}") from None
    return int(part)


def substream(master_seed: int, *key) -> np.random.Generator:
    """Return a Generator for (master_seed, *key), independent across keys.

    `key` parts are purpose names from the registry or plain integers
    (round index, device index, ...).
    """
    spawn_key = tuple(_key_part(p) for p in key)
    seq = np.random.SeedSequence(int(master_seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(seq))
