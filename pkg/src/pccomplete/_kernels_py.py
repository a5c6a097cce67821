"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation. Squared distances
are accumulated coordinate by coordinate in ascending order so both
backends produce bit-identical floats, and every tie is resolved towards
the lower index.
"""
import numpy as np

# pairwise distance blocks are capped at this many entries
_BLOCK = 1 << 22


def _sqdist_block(q, ref):
    d2 = np.zeros((q.shape[0], ref.shape[0]))
    for c in range(q.shape[1]):
        diff = q[:, c, None] - ref[None, :, c]
        d2 += diff * diff
    return d2


def _row_chunks(m, n):
    step = max(1, _BLOCK // max(n, 1))
    for start in range(0, m, step):
        yield start, min(m, start + step)


def sqdist(q, ref):
    """Full (M, N) matrix of squared distances."""
    return _sqdist_block(q, ref)


def knn(query, ref, k):
    m, n = query.shape[0], ref.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    for a, b in _row_chunks(m, n):
        d2 = _sqdist_block(query[a:b], ref)
        out[a:b] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def nn_search(query, ref):
    m, n = query.shape[0], ref.shape[0]
    best = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for a, b in _row_chunks(m, n):
        d2 = _sqdist_block(query[a:b], ref)
        j = np.argmin(d2, axis=1)
        idx[a:b] = j
        best[a:b] = d2[np.arange(b - a), j]
    return best, idx


def fps(points, m):
    n = points.shape[0]
    out = np.empty(m, dtype=np.int64)
    mind = np.full(n, np.inf)
    cur = 0
    for i in range(m):
        out[i] = cur
        d2 = np.zeros(n)
        for c in range(points.shape[1]):
            diff = points[:, c] - points[cur, c]
            d2 += diff * diff
        np.minimum(mind, d2, out=mind)
        mind[cur] = -1.0
        # argmax returns the first maximum, i.e. the lowest index on ties
        cur = int(np.argmax(mind))
    return out


def splat_min(rows, cols, depth, height, width, radius):
    buf = np.full(height * width, np.inf)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            r = rows + dr
            c = cols + dc
            ok = (r >= 0) & (r < height) & (c >= 0) & (c < width)
            np.minimum.at(buf, r[ok] * width + c[ok], depth[ok])
    buf[np.isinf(buf)] = 0.0
    return buf.reshape(height, width)
