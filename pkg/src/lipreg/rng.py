"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(master seed, purpose, *counters)``.  Rows are generated in fixed-size
blocks, each with its own stream, so results never depend on how work is
split across threads.
"""
import zlib

import numpy as np

BLOCK_ROWS = 1 << 15


def _word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode())
    key = int(key)
    if key < 0:
        raise ValueError("stream keys must be non-negative")
    return key


def stream(seed, *keys):
    """Independent generator for ``(seed, *keys)``; keys are ints or strings."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_word(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *keys):
    """Derive a 63-bit integer seed, for handing to code that takes a plain seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_word(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def blocks(n, block=BLOCK_ROWS):
    """Yield ``(block_index, start, stop)`` covering ``range(n)``."""
    for b, start in enumerate(range(0, n, block)):
        yield b, start, min(start + block, n)
