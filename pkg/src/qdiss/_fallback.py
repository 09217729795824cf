"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np

M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = 0x9E3779B9
W1 = 0xBB67AE85
MASK32 = np.uint64(0xFFFFFFFF)
SHIFT = np.uint64(32)
TWO53 = 9007199254740992.0


def _philox_cols(c0, c1, c2, c3, k0: int, k1: int):
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    for _ in range(10):
        p0 = M0 * c0
        p1 = M1 * c2
        c0, c1, c2, c3 = ((p1 >> SHIFT) ^ c1 ^ np.uint64(k0), p1 & MASK32,
                          (p0 >> SHIFT) ^ c3 ^ np.uint64(k1), p0 & MASK32)
        k0 = (k0 + W0) & 0xFFFFFFFF
        k1 = (k1 + W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def philox4x32(ctr: np.ndarray, key: np.ndarray) -> np.ndarray:
    ctr = np.ascontiguousarray(ctr, dtype=np.uint32)
    out = _philox_cols(ctr[:, 0], ctr[:, 1], ctr[:, 2], ctr[:, 3], int(key[0]), int(key[1]))
    return np.stack(out, axis=1).astype(np.uint32)


def _uniform(a, b):
    return ((a >> np.uint64(5)).astype(np.float64) * 67108864.0 + (b >> np.uint64(6)).astype(np.float64) + 0.5) / TWO53


def normal_pairs(ids: np.ndarray, step: int, purpose: int, key: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.uint64)
    n = ids.size
    c0, c1, c2, c3 = _philox_cols(ids & MASK32, ids >> SHIFT, np.full(n, step, np.uint64),
                                  np.full(n, purpose, np.uint64), int(key[0]), int(key[1]))
    u1 = _uniform(c0, c1)
    u2 = _uniform(c2, c3)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty((n, 2))
    out[:, 0] = r * np.cos(2.0 * np.pi * u2)
    out[:, 1] = r * np.sin(2.0 * np.pi * u2)
    return out


def normals(ids, step, purpose, key):
    ids = np.asarray(ids, dtype=np.uint64)
    n = ids.size
    c0, c1, c2, c3 = _philox_cols(ids & MASK32, ids >> SHIFT, np.full(n, step, np.uint64),
                                  np.full(n, purpose, np.uint64), int(key[0]), int(key[1]))
    return np.sqrt(-2.0 * np.log(_uniform(c0, c1))) * np.cos(2.0 * np.pi * _uniform(c2, c3))


def em_step(x, v, dU, fq, noise, dt, gamma, inv_m, sig):
    f = np.zeros_like(x)
    for c in dU[::-1]:
        f = f * x + c
    f = -f
    if fq.size:
        f = f + fq
    vn = v + dt * (f * inv_m) - dt * gamma * v
    if noise.size:
        vn = vn + sig * noise
    v[:] = vn
    x[:] = x + dt * vn


def linear_bin(x, x0, dx, n):
    s = (np.asarray(x, dtype=float) - x0) / dx
    s = s[(s >= 0) & (s < n - 1)]
    k = s.astype(np.intp)
    w = s - k
    return np.bincount(k, 1.0 - w, minlength=n) + np.bincount(k + 1, w, minlength=n)
