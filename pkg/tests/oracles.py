"""Independent brute-force oracles the engine implementations are checked against.

These deliberately avoid the library's computation routes: convolutions are
shift-and-accumulate loops over taps (plus a pure scalar micro-oracle for
tiny cases), dot products use int64 arithmetic, pooling uses np.maximum
over the four window corners, and step uses scalar comparisons.
"""

import numpy as np


def dot_oracle(a_vals, b_vals, mask) -> int:
    """Plain integer +-1 dot product over valid positions."""
    total = 0
    for a, b, m in zip(a_vals, b_vals, mask):
        if m:
            total += int(a) * int(b)
    return total


def conv_same3_oracle(vals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """3x3 same-padding conv by shift-and-accumulate over (k, c, dy, dx).

    vals: (B, C, H, W) integers (invalid positions already zeroed);
    weights: (K, C, 3, 3) in {-1, +1}.
    """
    b, c, h, w = vals.shape
    k = weights.shape[0]
    padded = np.zeros((b, c, h + 2, w + 2), dtype=np.int64)
    padded[:, :, 1:-1, 1:-1] = vals
    out = np.zeros((b, k, h, w), dtype=np.int64)
    for ki in range(k):
        for ci in range(c):
            for dy in range(3):
                for dx in range(3):
                    out[:, ki] += int(weights[ki, ci, dy, dx]) * padded[:, ci, dy:dy + h, dx:dx + w]
    return out


def conv_same3_scalar_oracle(vals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Quadruple-loop scalar conv for tiny cases; the slowest, surest route."""
    b, c, h, w = vals.shape
    k = weights.shape[0]
    out = np.zeros((b, k, h, w), dtype=np.int64)
    for bi in range(b):
        for ki in range(k):
            for i in range(h):
                for j in range(w):
                    acc = 0
                    for ci in range(c):
                        for dy in range(3):
                            for dx in range(3):
                                y, x = i + dy - 1, j + dx - 1
                                if 0 <= y < h and 0 <= x < w:
                                    acc += int(weights[ki, ci, dy, dx]) * int(vals[bi, ci, y, x])
                    out[bi, ki, i, j] = acc
    return out


def maxpool_oracle(vals: np.ndarray) -> np.ndarray:
    """2x2/stride-2 max as np.maximum over the four window corners."""
    a = vals[:, :, 0::2, 0::2]
    b = vals[:, :, 0::2, 1::2]
    c = vals[:, :, 1::2, 0::2]
    d = vals[:, :, 1::2, 1::2]
    return np.maximum(np.maximum(a, b), np.maximum(c, d))


def step_oracle(vals: np.ndarray, thresholds, positive) -> np.ndarray:
    """Scalar per-element threshold comparison; +1/-1 output."""
    out = np.empty(vals.shape, dtype=np.int8)
    flat = vals.reshape(vals.shape[0], vals.shape[1], -1)
    oflat = out.reshape(out.shape[0], out.shape[1], -1)
    for b in range(flat.shape[0]):
        for c in range(flat.shape[1]):
            t = int(thresholds[c])
            for i in range(flat.shape[2]):
                v = int(flat[b, c, i])
                hit = v > t if positive[c] else v < t
                oflat[b, c, i] = 1 if hit else -1
    return out


def fc_oracle(in_vals: np.ndarray, w_vals: np.ndarray) -> np.ndarray:
    """int64 matrix multiply: (B, L) x (M, L) -> (B, M)."""
    return in_vals.astype(np.int64) @ w_vals.astype(np.int64).T


def flat_index(c: int, i: int, j: int, h: int, w: int) -> int:
    """Channel-major flat position of (c, i, j) in an (C, H, W) sample."""
    return c * h * w + i * w + j
