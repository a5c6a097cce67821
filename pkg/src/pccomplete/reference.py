"""Slow, literal reference implementations used as test oracles.

Everything here is written with explicit Python loops over plain floats,
independent of the numpy/Cython kernels it is used to check.
"""
import math


def _sq(a, b):
    return sum((ai - bi) * (ai - bi) for ai, bi in zip(a, b))


def knn(query, ref, k):
    out = []
    for q in query:
        scored = [(_sq(q, r), j) for j, r in enumerate(ref)]
        scored.sort()
        out.append([j for _, j in scored[:k]])
    return out


def fps(points, m):
    chosen = [0]
    mind = [math.inf] * len(points)
    taken = [False] * len(points)
    taken[0] = True
    while len(chosen) < m:
        last = points[chosen[-1]]
        best, best_d = None, -1.0
        for j, p in enumerate(points):
            mind[j] = min(mind[j], _sq(p, last))
            if not taken[j] and mind[j] > best_d:
                best, best_d = j, mind[j]
        chosen.append(best)
        taken[best] = True
    return chosen


def nearest(query, ref):
    """(distance, index) of the nearest ref point, lowest index on ties."""
    out = []
    for q in query:
        best_d, best_j = math.inf, -1
        for j, r in enumerate(ref):
            d = math.dist(q, r)
            if d < best_d:
                best_d, best_j = d, j
        out.append((best_d, best_j))
    return out


def chamfer(x, y, variant):
    a = nearest(x, y)
    b = nearest(y, x)
    if variant == "l2-squared":
        return sum(d * d for d, _ in a) / len(x) + sum(d * d for d, _ in b) / len(y)
    val = sum(d for d, _ in a) / len(x) + sum(d for d, _ in b) / len(y)
    return val / 2.0 if variant == "l1-half" else val


def dcd(x, y, alpha):
    def side(src, dst):
        nn = nearest(src, dst)
        counts = {}
        for _, j in nn:
            counts[j] = counts.get(j, 0) + 1
        return sum(1.0 - math.exp(-alpha * d * d) / counts[j] for d, j in nn) / len(src)

    return (side(x, y) + side(y, x)) / 2.0


def f1(x, y, tau):
    p = sum(1 for d, _ in nearest(x, y) if d <= tau) / len(x)
    r = sum(1 for d, _ in nearest(y, x) if d <= tau) / len(y)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def mmd(pred, gallery):
    scores = [chamfer(pred, g, "l2-squared") for g in gallery]
    best = min(range(len(scores)), key=lambda i: (scores[i], i))
    return scores[best], best


def matmul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(m)] for i in range(n)]


def linear(x, W, b):
    y = matmul(x, W)
    return [[v + b[j] for j, v in enumerate(row)] for row in y]


def softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def attention(x_q, x_kv, Wq, bq, Wk, bk, Wv, bv, scale=1.0, hq=None, hk=None):
    """Attention output rows ``sum_j a_ij v_j`` (no residual)."""
    q = linear(x_q, Wq, bq)
    k = linear(x_kv, Wk, bk)
    v = linear(x_kv, Wv, bv)
    if hq is not None:
        q = [[a + b for a, b in zip(r, h)] for r, h in zip(q, hq)]
        k = [[a + b for a, b in zip(r, h)] for r, h in zip(k, hk)]
    out = []
    for qi in q:
        a = softmax([scale * sum(s * t for s, t in zip(qi, kj)) for kj in k])
        out.append([sum(a[j] * v[j][c] for j in range(len(v))) for c in range(len(v[0]))])
    return out


def conv2d_s2(img, W, b):
    """3x3, stride 2, pad 1 convolution of ``img[y][x][c]`` with ``W[dy][dx][c][o]``."""
    H, Wd, cin = len(img), len(img[0]), len(img[0][0])
    cout = len(b)
    ho, wo = (H + 1) // 2, (Wd + 1) // 2
    out = [[[0.0] * cout for _ in range(wo)] for _ in range(ho)]
    for i in range(ho):
        for j in range(wo):
            for o in range(cout):
                s = b[o]
                for dy in range(3):
                    for dx in range(3):
                        y, x = 2 * i + dy - 1, 2 * j + dx - 1
                        if 0 <= y < H and 0 <= x < Wd:
                            for c in range(cin):
                                s += img[y][x][c] * W[dy][dx][c][o]
                out[i][j][o] = s
    return out


def conv_transpose1d(inp, W, b, stride):
    """General 1D transposed convolution, ``inp[t][c]``, ``W[c][o][k]``."""
    length, cin = len(inp), len(inp[0])
    cout, ksize = len(W[0]), len(W[0][0])
    n_out = (length - 1) * stride + ksize
    out = [[b[o] for o in range(cout)] for _ in range(n_out)]
    for t in range(length):
        for c in range(cin):
            for o in range(cout):
                for kk in range(ksize):
                    out[t * stride + kk][o] += inp[t][c] * W[c][o][kk]
    return out


def central_difference(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` at nested-list point set ``x``."""
    grad = [[0.0] * len(p) for p in x]
    for i in range(len(x)):
        for c in range(len(x[i])):
            orig = x[i][c]
            x[i][c] = orig + eps
            fp = f(x)
            x[i][c] = orig - eps
            fm = f(x)
            x[i][c] = orig
            grad[i][c] = (fp - fm) / (2 * eps)
    return grad


def projected_pixels(points, position, look_at, resolution, fov_degrees):
    """Set of distinct (row, col) pixels hit by in-frustum points, by an explicit pinhole loop."""
    fwd = [t - p for t, p in zip(look_at, position)]
    n = math.sqrt(sum(v * v for v in fwd))
    fwd = [v / n for v in fwd]
    up0 = (0.0, 0.0, 1.0) if abs(fwd[1]) > 1 - 1e-9 else (0.0, 1.0, 0.0)
    right = (fwd[1] * up0[2] - fwd[2] * up0[1], fwd[2] * up0[0] - fwd[0] * up0[2], fwd[0] * up0[1] - fwd[1] * up0[0])
    n = math.sqrt(sum(v * v for v in right))
    right = [v / n for v in right]
    up = (right[1] * fwd[2] - right[2] * fwd[1], right[2] * fwd[0] - right[0] * fwd[2], right[0] * fwd[1] - right[1] * fwd[0])
    f = (resolution / 2) / math.tan(math.radians(fov_degrees) / 2)
    hit = set()
    for p in points:
        rel = [a - b for a, b in zip(p, position)]
        x = sum(a * b for a, b in zip(rel, right))
        y = sum(a * b for a, b in zip(rel, up))
        z = sum(a * b for a, b in zip(rel, fwd))
        if z <= 1e-6:
            continue
        u = resolution / 2 + f * x / z
        v = resolution / 2 - f * y / z
        if 0 <= u < resolution and 0 <= v < resolution:
            hit.add((math.floor(v), math.floor(u)))
    return hit
