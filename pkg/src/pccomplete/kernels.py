"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is selected. Both produce bit-identical results.
"""
import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = _BACKENDS.get("cython", _kernels_py)


def available_backends():
    return sorted(_BACKENDS)


def active_backend():
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name):
    """Switch the process-wide kernel backend ("cython" or "python")."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    _active = _BACKENDS[name]


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sqdist(q, ref):
    return _active.sqdist(_f64(q), _f64(ref))


def knn(query, ref, k):
    return np.asarray(_active.knn(_f64(query), _f64(ref), int(k)))


def nn_search(query, ref):
    """Squared distance to, and index of, the nearest ``ref`` row per query row."""
    d2, idx = _active.nn_search(_f64(query), _f64(ref))
    return np.asarray(d2), np.asarray(idx)


def fps(points, m):
    return np.asarray(_active.fps(_f64(points), int(m)))


def splat_min(rows, cols, depth, height, width, radius):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    return np.asarray(
        _active.splat_min(rows, cols, _f64(depth), int(height), int(width), int(radius))
    )
