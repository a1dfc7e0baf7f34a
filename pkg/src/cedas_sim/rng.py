"""Counter-based random streams.

Every stochastic draw in the simulator comes from a stream keyed by an
explicit integer path, e.g. (master_seed, rep, iteration, purpose). Streams
with distinct paths are statistically independent, and a stream's output
depends only on its path, never on how many other streams exist or in which
order they are consumed. That makes runs reproducible regardless of worker
count or scheduling.
"""

import numpy as np

# Purpose tags used by the iteration engine. Arbitrary small ints; part of
# the determinism contract, so do not renumber.
DATA = 1       # problem synthesis
GRAD = 2       # minibatch index draws
COMPRESS = 3   # compressor randomness

_MASK = (1 << 64) - 1


def _word(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK  # two's complement keeps k = -1 valid
    if isinstance(part, str):
        import zlib
        return zlib.crc32(part.encode())
    raise TypeError(f"stream path parts must be ints or strs, got {type(part).__name__}")


def substream(master_seed, *path):
    """Independent Generator keyed by (master_seed, *path).

    Philox is counter-based, so construction is cheap and streams never
    collide for distinct paths.
    """
    words = (_word(master_seed),) + tuple(_word(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
