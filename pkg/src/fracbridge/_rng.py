"""Counter-based random substreams keyed by (seed, purpose, index...)."""
import numpy as np

# purpose tags, kept stable so that seeds stay meaningful across releases
WIENER = 1
FBM_EXACT = 2
BRIDGE = 3
PAST = 4
FAST = 5
CONTRACTION = 6
EULER = 7
TAIL = 8
SUBGRID = 9


def generator(seed, *key):
    """Philox generator for the substream `key` of `seed`.

    Every (seed, key) pair maps to one independent stream, so work can be
    split over any number of workers without changing the draws.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
