"""Counter-based random streams.

Every random draw in the package comes from ``stream(seed, purpose, index)``,
so results do not depend on the order in which workers consume streams.
"""

from __future__ import annotations

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose_key(purpose), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def pairwise_sum(values) -> float:
    """Order-fixed tree reduction (independent of how values were produced)."""
    vals = [float(v) for v in values]
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[k] + vals[k + 1] for k in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]
