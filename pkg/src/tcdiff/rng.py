"""Counter-based Gaussian increments.

Every normal deviate is a pure function of ``(seed, path_index, step_index,
component)``, so a path's noise does not depend on how paths are batched or
which worker simulates them.  The generator is Philox4x32-10 (Salmon et al.,
"Parallel random numbers: as easy as 1, 2, 3"), written against numpy uint64
arrays so a whole batch of paths is advanced in one call.
"""

from __future__ import annotations

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_SHIFT = np.uint64(32)
_TWO_POW_M32 = 1.0 / 4294967296.0


def philox4x32(counter, key, rounds: int = 10):
    """Apply Philox4x32 to broadcastable counter words.

    ``counter`` is a sequence of four integer arrays (each word < 2**32) and
    ``key`` a pair of integers.  Returns four uint64 arrays holding 32-bit
    output words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(int(key[0]) & 0xFFFFFFFF)
    k1 = np.uint64(int(key[1]) & 0xFFFFFFFF)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _split64(value):
    value = np.asarray(value, dtype=np.uint64)
    return value & _MASK32, value >> _SHIFT


def uniforms(seed: int, path_index, step_index: int, block: int = 0):
    """Four open-interval uniforms per path for one ``(step, block)`` counter.

    Returns an array of shape ``(len(path_index), 4)``.
    """
    plo, phi = _split64(path_index)
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    words = philox4x32(
        (np.uint64(int(step_index) & 0xFFFFFFFF), np.uint64(int(block) & 0xFFFFFFFF), plo, phi),
        (seed & 0xFFFFFFFF, seed >> 32),
    )
    out = np.stack(words, axis=-1).astype(np.float64)
    return (out + 0.5) * _TWO_POW_M32


def normals(seed: int, path_index, step_index: int, dim: int):
    """Standard normal deviates of shape ``(len(path_index), dim)``.

    Box-Muller on uniform pairs; each counter block yields four deviates.
    """
    path_index = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    n_blocks = (dim + 3) // 4
    cols = []
    for block in range(n_blocks):
        u = uniforms(seed, path_index, step_index, block)
        r01 = np.sqrt(-2.0 * np.log(u[:, 0]))
        r23 = np.sqrt(-2.0 * np.log(u[:, 2]))
        a01 = 2.0 * np.pi * u[:, 1]
        a23 = 2.0 * np.pi * u[:, 3]
        cols.extend([r01 * np.cos(a01), r01 * np.sin(a01), r23 * np.cos(a23), r23 * np.sin(a23)])
    return np.stack(cols[:dim], axis=-1)


def derive_seed(master_seed: int, *labels) -> int:
    """Deterministic 64-bit sub-seed for a labelled experiment component."""
    acc = int(master_seed) & 0xFFFFFFFFFFFFFFFF
    for label in labels:
        for ch in str(label).encode():
            acc = (acc ^ ch) * 0x100000001B3 & 0xFFFFFFFFFFFFFFFF
        out = philox4x32((acc & 0xFFFFFFFF, acc >> 32, 0, 0), (0x5EED, 0xC0FFEE))
        acc = (int(out[0]) | (int(out[1]) << 32)) & 0xFFFFFFFFFFFFFFFF
    return acc
