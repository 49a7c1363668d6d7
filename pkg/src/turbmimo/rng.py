"""Counter-based random streams addressed by integer keys."""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(master_seed, *key)``.

    Any two distinct keys give statistically independent streams, so work can be
    split across processes in any order without changing results.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
