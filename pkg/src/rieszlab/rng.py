"""Counter-based uniform streams.

Every draw is a pure function of ``(seed, stream, sample, counter)``, so
samples can be generated in any order or in parallel chunks and still be
reproduced bit for bit. The mixing function is the splitmix64 finalizer.
"""
from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_K_STREAM = np.uint64(0xD6E8FEB86659FD93)
_K_SAMPLE = np.uint64(0xA0761D6478BD642F)
_MASK = (1 << 64) - 1
_INV53 = 1.0 / (1 << 53)


def _mix(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _mix_int(x: int) -> int:
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def sample_keys(seed: int, stream: int, samples) -> np.ndarray:
    """Per-sample 64-bit keys; ``samples`` is an array of global sample indices."""
    base = _mix_int((seed * 0x9E3779B97F4A7C15 + stream * 0xD6E8FEB86659FD93) & _MASK)
    s = np.asarray(samples, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(base) ^ (s * _K_SAMPLE + _GOLDEN))


def sample_key(seed: int, stream: int, sample: int) -> int:
    base = _mix_int((seed * 0x9E3779B97F4A7C15 + stream * 0xD6E8FEB86659FD93) & _MASK)
    return _mix_int(base ^ ((sample * 0xA0761D6478BD642F + 0x9E3779B97F4A7C15) & _MASK))


def uniforms(keys: np.ndarray, counter) -> np.ndarray:
    """Uniforms in (0, 1] for each key at the given draw counter(s)."""
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = _mix(keys + (c + np.uint64(1)) * _GOLDEN)
    return ((x >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53


def uniform(key: int, counter: int) -> float:
    x = _mix_int((key + (counter + 1) * 0x9E3779B97F4A7C15) & _MASK)
    return ((x >> 11) + 1) * _INV53
