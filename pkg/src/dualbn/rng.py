"""Keyed, counter-based random streams.

Every random draw in the library comes from a stream keyed by integers
(experiment seed plus a domain tag plus indices such as epoch / image /
branch).  The same key always yields the same draws, regardless of
evaluation order or thread count, which is what makes training and
evaluation bit-reproducible.
"""

import numpy as np

# Domain tags keep streams for unrelated purposes disjoint even when the
# remaining key parts collide.
DOMAIN_INIT = 1
DOMAIN_AUGMENT = 2
DOMAIN_SHUFFLE = 3
DOMAIN_SYNTH = 4
DOMAIN_CORRUPT = 5
DOMAIN_FOURIER = 6
DOMAIN_AFFINITY = 7

BRANCH_KEY_MAIN = 0
BRANCH_KEY_AUX = 1


def stream(*key: int) -> np.random.Generator:
    """Return a Generator determined entirely by the integer key tuple."""
    if any(k < 0 for k in key):
        raise ValueError(f"rng key parts must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def augment_stream(seed: int, epoch: int, image_index: int, branch_key: int) -> np.random.Generator:
    """Per-image augmentation stream; keyed by image identity, not batch position."""
    return stream(seed, DOMAIN_AUGMENT, epoch, image_index, branch_key)
