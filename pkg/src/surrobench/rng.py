"""Deterministic named RNG substreams.

All randomness in the package flows from a single 64-bit root seed.  Every
unit of work (an optimizer run, a cross-validation fold, a repeat) derives
its own independent generator from the root seed plus a path of names, so
partial reruns and parallel execution are stable.
"""

from __future__ import annotations

import zlib

import numpy as np


def _token_key(token: object) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFF
    return zlib.crc32(str(token).encode("utf-8"))


def substream(seed: int, *tokens: object) -> np.random.Generator:
    """Return a generator for the substream named by ``tokens`` under ``seed``."""
    keys = [_token_key(t) for t in tokens]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys]))
