"""Counter-based random streams keyed by (seed, stream, chunk).

Every chunk of work draws from its own Philox stream, so results do not depend
on how chunks are scheduled across workers.
"""

from __future__ import annotations

import numpy as np

# stream identifiers, one per experiment kind
STREAMS = {
    "lyapunov": 1,
    "returns": 2,
    "correlations": 3,
    "clt": 4,
    "ldp": 5,
    "bounds": 6,
    "ratio": 7,
    "carrier": 8,
    "simulate": 9,
    "invariant": 10,
}


def stream(seed: int, name: str | int, chunk: int = 0) -> np.random.Generator:
    sid = STREAMS[name] if isinstance(name, str) else int(name)
    ss = np.random.SeedSequence([int(seed), sid, int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    """Split ``total`` items into fixed-size chunks (last one may be short)."""
    if total <= 0:
        return []
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])
