"""Seeded random streams.

Every random draw in the package goes through a ``numpy.random.Generator``
backed by the Philox-4x64 counter-based bit generator. Philox produces the
same stream on every platform for a given seed, and independent child
streams come from ``SeedSequence.spawn``.
"""

import numpy as np

__all__ = ["make_rng", "spawn_rngs", "BIT_GENERATOR"]

BIT_GENERATOR = "Philox-4x64 (numpy.random.Philox), seeded through numpy.random.SeedSequence"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n: int) -> list:
    """``n`` independent streams; stream ``i`` does not depend on ``n``."""
    return [np.random.Generator(np.random.Philox(s))
            for s in np.random.SeedSequence(int(seed)).spawn(n)]
