"""Pure numpy versions of the compiled kernels (same signatures and results)."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

_CHUNK = 1024


def count_inversions(seq) -> int:
    """Number of pairs ``i < j`` with ``seq[i] > seq[j]`` (integer input).

    Bottom-up merge sort, one vectorized pass per level: with every block of
    width ``w`` already sorted, the inversions between a left/right block pair
    are counted by binary search of the right values in the left block.
    """
    a = np.asarray(seq, dtype=np.int64)
    n = a.shape[0]
    if n < 2:
        return 0
    # dense ranks keep the combined sort keys small and exact
    _, vals = np.unique(a, return_inverse=True)
    vals = vals.astype(np.int64)
    span = int(vals.max()) + 1
    idx = np.arange(n, dtype=np.int64)
    inv = 0
    width = 1
    while width < n:
        pair = idx // (2 * width)
        is_right = (idx // width) % 2 == 1
        keys = pair * span + vals
        left_keys = keys[~is_right]            # sorted: blocks are sorted and pairs ascend
        right_vals = vals[is_right]
        right_pair = pair[is_right]
        left_pair = pair[~is_right]
        # left elements of the same pair strictly greater than each right value
        pos = np.searchsorted(left_keys, right_pair * span + right_vals, side="right")
        end = np.searchsorted(left_pair, right_pair, side="right")
        inv += int(np.sum(end - pos))
        vals = vals[np.argsort(keys, kind="stable")]
        width *= 2
    return inv


def pairwise_distance_sum(a, b) -> float:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError("column mismatch")
    total = 0.0
    for start in range(0, a.shape[0], _CHUNK):
        total += float(cdist(a[start:start + _CHUNK], b).sum())
    return total


def pairwise_distance_sum_within(a) -> float:
    a = np.ascontiguousarray(a, dtype=np.float64)
    total = 0.0
    for start in range(0, a.shape[0], _CHUNK):
        block = cdist(a[start:start + _CHUNK], a[start:])
        total += float(np.triu(block, k=1).sum())
    return total
