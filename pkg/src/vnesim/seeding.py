"""Deterministic fan-out of one experiment seed into per-component RNG streams.

Each component draws from its own stream so that, for example, changing the
agent's exploration schedule never perturbs workload generation.
"""

import numpy as np

_STREAMS = {
    "substrate": 1,
    "stream": 2,
    "split": 3,
    "svm": 4,
    "rbr": 5,
    "mlc": 6,
    "sarsa": 7,
    "evaluate": 8,
    "baseline": 9,
    "oracle": 10,
}


def component_rng(seed: int, stream: str) -> np.random.Generator:
    """Return the dedicated RNG for one named component of an experiment."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[stream]]))
