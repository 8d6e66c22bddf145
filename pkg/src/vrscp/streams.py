"""Deterministic RNG stream derivation.

Every random draw in a run comes from a generator keyed by
``(master seed, purpose, iteration, index)``.  Two layouts that sample the
same trajectories in a different order (or on different workers) therefore
see identical random numbers.
"""

import numpy as np

# purpose tags
CHECKPOINT = 0
HVP = 1
CORRECTION = 2
EVALUATION = 3
SUBSOLVER = 4
INIT = 5
DIAGNOSTIC = 6
BATCH = 7


def stream(seed, purpose, iteration=0, index=0):
    """Return the generator for one (purpose, iteration, index) key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(purpose), int(iteration), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def streams(seed, purpose, iteration, count, offset=0):
    return [stream(seed, purpose, iteration, offset + i) for i in range(count)]
