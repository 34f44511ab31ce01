"""Seeded Poisson draws for the simulation and df loops.

Every realization owns a random stream keyed by the content of its cell
(``theta``, ``beta``, ``N``) and its index, so results do not depend on
scheduling or on which other cells are run.
"""

from __future__ import annotations

import struct

import numpy as np

from .data import PairedDataset, ParentModel

# stream tags keep the fitted data and the out-of-sample draws independent
FIT_STREAM = 0
REPLAY_STREAM = 1


def _bits(value: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(value)))[0]


def stream(master_seed: int, theta: float, beta: float, N: int, index: int, tag: int = FIT_STREAM) -> np.random.Generator:
    """Independent generator for realization ``index`` of cell ``(theta, beta, N)``."""
    if master_seed < 0:
        raise ValueError("seed must be non-negative")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(tag, _bits(theta), _bits(beta), int(N), int(index)))
    return np.random.Generator(np.random.PCG64(seq))


def sample_dataset(parent: ParentModel, N: int, t_S: float = 1.0, t_B: float = 1.0,
                   stream_seed: int | np.random.Generator | np.random.SeedSequence = 0) -> PairedDataset:
    """Draw ``S_i ~ Poisson((theta+beta) t_S)`` and ``B_i ~ Poisson(beta t_B)`` for ``N`` bins.

    numpy's Poisson sampler inverts the CDF for small means and switches to
    transformed rejection above 10, so draws are exact at every intensity.
    """
    rng = stream_seed if isinstance(stream_seed, np.random.Generator) else np.random.default_rng(stream_seed)
    S = rng.poisson(parent.source_mean(t_S), int(N))
    B = rng.poisson(parent.background_mean(t_B), int(N))
    return PairedDataset(S=S, B=B, t_S=t_S, t_B=t_B)
