"""Deterministic RNG streams.

Every distinct source of randomness in a run gets its own labelled stream
derived from the master seed, so ablations (same seed, different estimator
or graph type) hold everything else fixed, and results never depend on
scheduling or parallelism.
"""

import numpy as np

# Stream labels.  Keep stable: changing them changes every generated dataset.
GRAPH = 0
FEATURES = 1
CONFOUNDERS = 2
TREATMENT = 3
OUTCOME = 4
TRAINING = 5


def stream(seed: int, label: int, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, label, index).

    Two calls with equal arguments produce identical streams; distinct
    labels/indices give statistically independent streams.
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(label, index))
    )
