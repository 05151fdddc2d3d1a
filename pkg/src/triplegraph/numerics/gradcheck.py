"""Central finite differences, independent of the tape."""
import numpy as np


def numerical_grad(f, arrays, h=1e-5):
    """d f / d array for each array, perturbing entries in place.

    ``f`` takes no arguments and returns a float computed from the current
    contents of ``arrays``.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric, floor=1e-8):
    """``|a - n| / max(|a|, |n|, floor)`` in the Euclidean norm over the whole array."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)
