"""Counter-based random substreams.

Each replication (or draw chunk) gets its own Philox generator keyed on
``(master_seed, index)``, so any stream can be regenerated on its own and
results do not depend on scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(master_seed: int, index: int) -> np.random.Generator:
    if index < 0:
        raise ValueError("substream index must be nonnegative")
    key = np.array([master_seed & _MASK64, index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
