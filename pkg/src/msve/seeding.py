"""Deterministic RNG streams derived from a single run seed.

Every stochastic component draws from its own named substream so results
are bit-reproducible regardless of execution order or worker count.
"""

import numpy as np

# Stream tags.  Never reuse a tag for a different purpose: the tag tuple is
# the identity of the stream.
POLICY_INIT = 1
MODEL_INIT = 2
ROLLOUT = 3
SELECTION = 4
MODEL_TRAIN = 5
GOALS = 6
FINETUNE_ROLLOUT = 7
FINETUNE_EVAL = 8
EVAL = 9


def substream(seed: int, *tags: int) -> np.random.Generator:
    """Return a generator for the (seed, *tags) stream."""
    return np.random.default_rng(np.random.SeedSequence((seed, *tags)))
