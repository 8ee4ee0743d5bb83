"""Binary-indexed (Fenwick) tree primitives over a dense float64 array.

The tree is stored 1-based in ``tree[1..n]``; ``tree[0]`` is unused.
All functions are hot kernels (see ``_accel``). ``find`` implements the
classic top-down bit-mask search and returns the smallest 0-based atom
index whose cumulative weight strictly exceeds ``r``, so zero-weight
atoms are never selected for r in [0, total).
"""

from __future__ import annotations

import numpy as np

from ._accel import hot


@hot
def build(tree: np.ndarray, weights: np.ndarray, n: int) -> None:
    for i in range(1, n + 1):
        tree[i] = weights[i - 1]
    tree[n + 1 :] = 0.0
    for i in range(1, n + 1):
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@hot
def add(tree: np.ndarray, n: int, index: int, delta: float) -> None:
    i = index + 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@hot
def add_range(tree: np.ndarray, n: int, start: int, k: int, w: float) -> None:
    """Add weight w to each of the k fresh slots start..start+k-1."""
    for i in range(start, start + k):
        add(tree, n, i, w)


@hot
def prefix(tree: np.ndarray, index: int) -> float:
    """Cumulative weight of atoms 0..index inclusive."""
    i = index + 1
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@hot
def total(tree: np.ndarray, n: int) -> float:
    return prefix(tree, n - 1)


@hot
def find(tree: np.ndarray, n: int, r: float) -> int:
    idx = 0
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    while bit > 0:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= r:
            idx = nxt
            r -= tree[nxt]
        bit >>= 1
    if idx >= n:  # float edge at r ~ total
        idx = n - 1
    return idx
