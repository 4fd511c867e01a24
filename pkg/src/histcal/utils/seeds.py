"""Per-consumer random streams derived from one run seed.

Every consumer gets its own counter-based Philox generator keyed by the run seed
and a fixed consumer id, so adding draws in one consumer never shifts another.
"""

import numpy as np

from histcal.utils.errors import ConfigError

CONSUMERS = {
    "model_init": 1,
    "batch_source": 2,
    "batch_target_labeled": 3,
    "batch_target_unlabeled": 4,
    "synthetic": 5,
}


def derive_rng(seed: int, consumer: str) -> np.random.Generator:
    if consumer not in CONSUMERS:
        raise ConfigError(f"unknown random consumer '{consumer}', known {sorted(CONSUMERS)}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence([int(seed), CONSUMERS[consumer]])
    return np.random.Generator(np.random.Philox(seq))
