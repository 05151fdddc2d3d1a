"""Numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature.
Inputs are C-contiguous float64 arrays; rows are reduced along the last axis.
"""
import numpy as np


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm_rows(x, gain, bias, eps):
    """Return ``(out, xhat, rstd)``; ``rstd`` has shape ``(rows,)``."""
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd[:, None]
    return xhat * gain + bias, xhat, rstd


def iou_matrix(a):
    """Pairwise generalized IoU between the rows of a non-negative matrix."""
    n = a.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        num = np.minimum(a[i], a).sum(axis=1)
        den = np.maximum(a[i], a).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out[i] = num / den
    return out


def threshold_components(a, threshold):
    """Connected components of the graph joining rows with IoU > threshold.

    Labels are the smallest row index in each component.
    """
    n = a.shape[0]
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    sim = iou_matrix(a)
    rows, cols = np.nonzero(np.triu(sim > threshold, k=1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj
    return np.array([find(i) for i in range(n)], dtype=np.int64)
