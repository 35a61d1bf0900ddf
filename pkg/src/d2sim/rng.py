"""Deterministic counter-based random streams.

Every stochastic draw in the library flows through a Philox generator keyed
by an explicit tuple, so a sample sequence depends only on its key and never
on execution order or thread count.  Two key families are kept disjoint by a
leading tag: per-round minibatch streams and auxiliary streams (data
generation, variance probing).
"""

from __future__ import annotations

import numpy as np

_TAG_SAMPLE = 2
_TAG_AUX = 1


def sample_stream(root_seed: int, worker: int, iteration: int) -> np.random.Generator:
    """Minibatch stream for `worker` at round `iteration` under `root_seed`.

    The stream is a pure function of the key triple, so every algorithm run
    with the same root seed draws identical sample sequences per worker and
    round regardless of when or in what order the streams are consumed.
    """
    seq = np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=(_TAG_SAMPLE, int(worker), int(iteration))
    )
    return np.random.Generator(np.random.Philox(seq))


def aux_stream(root_seed: int, *labels: int) -> np.random.Generator:
    """Auxiliary stream (instance generation, probing) keyed off `root_seed`."""
    seq = np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=(_TAG_AUX, *(int(l) for l in labels))
    )
    return np.random.Generator(np.random.Philox(seq))
