"""Counter-based random substreams.

Every random draw in the package flows through :func:`substream`, which keys a
Philox counter-based generator by ``(seed, purpose tag, setting i, shot j)``.
Streams are therefore fully deterministic, independent of execution order and
thread count, and any (i, j) cell can be regenerated in isolation.

Unitary draws are keyed *without* the circuit-family code so that two datasets
sampled with the same seed over the same ensemble share per-setting unitaries
(required when combining a Controlled-V_O dataset with a plain hybrid dataset
in the fourth-moment observable estimator); outcome draws include the family
code, keeping outcomes of the two datasets conditionally independent given U.
"""

from __future__ import annotations

import numpy as np

# purpose tags (top byte of the low key word)
TAG_UNITARY = 1
TAG_OUTCOME = 2
TAG_CONTROL_BASIS = 3
TAG_BOOTSTRAP = 4
TAG_TRIAL = 5

_MAX_INDEX = 1 << 24


def substream(seed: int, tag: int, i: int = 0, j: int = 0, extra: int = 0) -> np.random.Generator:
    """Independent Generator for purpose ``tag`` at setting ``i``, shot ``j``.

    ``extra`` distinguishes draws of the same purpose within a cell (e.g. the
    circuit-family code for outcome draws).
    """
    if not 0 <= seed < (1 << 63):
        raise ValueError(f"seed must be in [0, 2^63), got {seed}")
    if not (0 <= i < _MAX_INDEX and 0 <= j < _MAX_INDEX):
        raise ValueError(f"setting/shot indices out of range: i={i}, j={j}")
    if not 0 <= tag < 256 or not 0 <= extra < 256:
        raise ValueError(f"tag/extra out of range: tag={tag}, extra={extra}")
    low = (tag << 56) | (extra << 48) | (i << 24) | j
    key = (int(seed) << 64) | low
    return np.random.Generator(np.random.Philox(key=key))
