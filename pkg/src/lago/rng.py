"""Named, independent random streams derived from a single run seed.

Each purpose owns its own PCG64 stream keyed by a fixed spawn key, so adding
draws for one feature never shifts the draws of another.
"""

import numpy as np

STREAMS = ("profiles", "subsets", "tasks", "rates", "frequencies", "coefficients", "exploration")


def stream(seed: int, purpose: str) -> np.random.Generator:
    if purpose not in STREAMS:
        raise KeyError(f"unknown stream {purpose!r}; expected one of {STREAMS}")
    seq = np.random.SeedSequence(int(seed), spawn_key=(STREAMS.index(purpose),))
    return np.random.Generator(np.random.PCG64(seq))
