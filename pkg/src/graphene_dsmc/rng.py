"""Counter-based random numbers for the parallel engine.

Each uniform is a pure function of ``(seed, particle id, event counter, slot)``,
so a particle's random stream does not depend on how particles are split
across workers or on the order in which they are processed.  The mixing
function is the splitmix64 finalizer applied in a chain over the key words.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

# slots used by the engine for one event draw
SLOT_TIME = 0
SLOT_CHANNEL = 1
SLOT_ANGLE = 2
SLOT_ETA1 = 3
SLOT_PARTNER = 4
SLOT_ETA2 = 5


def _mix(x: np.ndarray) -> np.ndarray:
    x = x + _GOLDEN
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def hash64(seed, pid, counter, slot) -> np.ndarray:
    """64-bit hash of the key; all arguments broadcast."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(seed, dtype=np.uint64))
        for word in (pid, counter, slot):
            h = _mix(h ^ np.asarray(word, dtype=np.uint64))
    return h


def uniform(seed, pid, counter, slot) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits of the hash."""
    return (hash64(seed, pid, counter, slot) >> _S11).astype(np.float64) * _INV53


def exponential(seed, pid, counter, rate) -> np.ndarray:
    """Exp(rate) waiting times keyed like :func:`uniform` on the time slot."""
    u = uniform(seed, pid, counter, SLOT_TIME)
    return -np.log1p(-u) / np.asarray(rate, dtype=float)
