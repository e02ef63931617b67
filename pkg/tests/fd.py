"""Central finite-difference oracle shared by the gradient tests.

Independent of the autodiff engine: it only re-evaluates a closure at
perturbed parameter values.
"""

import numpy as np


def central_diff(fn, arrays, h: float = 1e-5):
    """d fn / d arrays by central differences.

    `fn` takes no arguments and reads `arrays` (numpy) by reference;
    entries are perturbed in place and restored.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn()
            flat[i] = orig - h
            fm = fn()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def central_diff_sample(fn, arr, flat_indices, h: float = 1e-5):
    """Central differences at selected flat indices of one array.

    Returns a dict {flat_index: derivative}; used where full-grid
    differencing would be too slow (e.g. plane code grids).
    """
    flat = arr.reshape(-1)
    out = {}
    for i in flat_indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        out[int(i)] = (fp - fm) / (2.0 * h)
    return out


def sample_indices(grad, rng, k: int = 20):
    """Flat indices to probe: mostly where |grad| is largest, plus a few
    uniformly random ones so zero-gradient entries get checked too."""
    flat = np.abs(np.asarray(grad).reshape(-1))
    top = np.argsort(flat)[::-1][:max(k - 4, 1)]
    extra = rng.integers(0, flat.size, size=4)
    return np.unique(np.concatenate([top, extra]))


def rel_err(a, b):
    """Max elementwise |a-b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
