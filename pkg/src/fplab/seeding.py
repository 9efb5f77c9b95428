"""Deterministic RNG derivation.

Every stochastic operation draws from a Generator derived from the experiment
seed plus integer context tags (round, client id, purpose), so results are
independent of execution order across clients and reproducible bit-for-bit.
"""

import numpy as np

TAG_INIT = 0x101
TAG_SELECT = 0x5E1
TAG_LOCAL = 0x10C
TAG_POISON = 0xF01
TAG_MIX = 0x314
TAG_FLAME = 0xF1A
TAG_PSG = 0x9A7
TAG_GEN = 0x6E7
TAG_SPLIT = 0x5F1
TAG_NOISE = 0x201

_MASK = (1 << 64) - 1


def rng_from(*parts):
    return np.random.default_rng(np.random.SeedSequence([int(p) & _MASK for p in parts]))


def sub_seed(*parts):
    """Collapse context parts into a single derived integer seed."""
    ss = np.random.SeedSequence([int(p) & _MASK for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])
