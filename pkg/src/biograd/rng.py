"""Named random sub-streams derived from one master seed.

Every stochastic feature draws from its own stream so that switching one
feature on or off leaves the draws of all the others untouched.
"""

import zlib

import numpy as np

STREAMS = ("weight-init", "poisson-encode", "error-spikes", "sleep-spikes", "shuffle")


def stream_id(name: str) -> int:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    return zlib.crc32(name.encode("ascii"))


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator for ``name`` under ``seed``, further split by integer ``keys``.

    The same (seed, name, keys) always yields the same sequence, and distinct
    key tuples give statistically independent sequences.
    """
    entropy = [int(seed), stream_id(name), *(int(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
