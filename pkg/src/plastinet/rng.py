"""Named, independent PRNG streams derived from one run seed.

Each purpose (weight init, sampler, data split, ...) gets its own PCG64
generator seeded from ``SeedSequence(seed, spawn_key=(stream_id,))``, so
the order in which modules consume randomness cannot perturb each other.
"""

import zlib

import numpy as np

STREAMS = {
    "init": 1,
    "sampler": 2,
    "noise": 3,
    "pretext": 4,
    "data:train": 10,
    "data:val": 11,
    "data:test": 12,
    "data:labels": 13,
}


def stream_id(name: str) -> int:
    if name in STREAMS:
        return STREAMS[name]
    # stable id for ad-hoc names
    return 1000 + zlib.crc32(name.encode())


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(stream_id(name),))
    return np.random.Generator(np.random.PCG64(ss))
