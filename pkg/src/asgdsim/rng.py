"""Named, reproducible random streams.

Every source of randomness in a run is drawn from its own named stream so
that traces replay bit-for-bit from one master seed.  Stream names in use:

* ``objective-gen``     problem-instance synthesis
* ``noise-worker-<i>``  gradient noise drawn by worker ``i``
* ``client-sampling``   client draws for sampled scheduling policies
* ``delay-model``       compute-time draws for stochastic worker models
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import InvalidSpecError


def stream_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    """Seed material for one named stream of ``master_seed``.

    The name is folded in through a CRC so that streams are independent of
    the order in which they are created.
    """
    if master_seed < 0:
        raise InvalidSpecError(f"master seed must be non-negative, got {master_seed}")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(key,))


def named_stream(master_seed: int, name: str) -> np.random.Generator:
    """Fresh generator for the named stream of ``master_seed``."""
    return np.random.default_rng(stream_seed(master_seed, name))
