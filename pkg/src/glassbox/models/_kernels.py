"""Compiled inner loops shared by the tree learners."""
import numpy as np
from numba import njit

MAX_BINS = 256


@njit(cache=True, nogil=True)
def node_histogram(codes, rows, target, hess):
    """Per-feature bin sums over ``rows``: (count, target sum, hessian sum)."""
    p = codes.shape[1]
    out = np.zeros((3, p, MAX_BINS))
    for r in rows:
        t = target[r]
        h = hess[r]
        for j in range(p):
            b = codes[r, j]
            out[0, j, b] += 1.0
            out[1, j, b] += t
            out[2, j, b] += h
    return out


def complete_layout(trees, depth: int):
    """Re-encode trees as complete binary trees of ``depth`` levels.

    Node ``k`` has children ``2k+1`` / ``2k+2``; leaves shallower than
    ``depth`` are padded with an always-left split so every row walks
    exactly ``depth`` levels.
    """
    n_inner = 2**depth - 1
    T = len(trees)
    feature = np.zeros((T, max(n_inner, 1)), dtype=np.int32)
    threshold = np.full((T, max(n_inner, 1)), np.inf)
    value = np.zeros((T, 2**depth))
    for t, tree in enumerate(trees):
        stack = [(0, 0, 0)]
        while stack:
            src, pos, level = stack.pop()
            if level == depth:
                value[t, pos - n_inner] = tree.value[src]
                continue
            if tree.feature[src] < 0:
                stack.append((src, 2 * pos + 1, level + 1))
                stack.append((src, 2 * pos + 2, level + 1))
            else:
                feature[t, pos] = tree.feature[src]
                threshold[t, pos] = tree.threshold[src]
                stack.append((tree.left[src], 2 * pos + 1, level + 1))
                stack.append((tree.right[src], 2 * pos + 2, level + 1))
    return feature, threshold, value


@njit(cache=True, nogil=True)
def predict_complete(X, feature, threshold, value, depth):
    """Sum over trees of the leaf value reached by each row of ``X``.

    Rows are walked in small blocks so independent lookups overlap.
    """
    n = X.shape[0]
    T = feature.shape[0]
    n_inner = 2**depth - 1
    out = np.zeros(n)
    B = 32
    k = np.zeros(B, dtype=np.int64)
    for lo in range(0, n, B):
        m = min(n, lo + B) - lo
        for t in range(T):
            k[:m] = 0
            for _ in range(depth):
                for r in range(m):
                    kk = k[r]
                    k[r] = 2 * kk + 1 + (X[lo + r, feature[t, kk]] > threshold[t, kk])
            for r in range(m):
                out[lo + r] += value[t, k[r] - n_inner]
    return out
