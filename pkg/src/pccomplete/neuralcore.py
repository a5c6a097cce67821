"""Deterministic forward-only neural building blocks.

Weights live in a :class:`WeightStore` (float32, as persisted) and are
read back as float64 for computation. Linear layers use the row-vector
convention ``y = x @ W + b`` with ``W`` of shape ``(in, out)``.

Every op takes the weight container as any ``name -> ndarray`` mapping,
so callers can hand in sliced views of a store.
"""
import math
import struct
import zlib
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError, ShapeError
from .profiles import PROFILES, Profile, tensor_decls

PSW_MAGIC = b"PSW1"


def make_rng(seed):
    """numpy ``Generator`` over PCG64: a documented, platform-stable stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


class MissingTensorError(KeyError):
    def __str__(self):
        return f"weight store has no tensor named {self.args[0]!r}"


class WeightStore(Mapping):
    """Immutable mapping from dotted tensor name to float32 data.

    Indexing returns a cached float64 copy; :attr:`tensors` holds the raw
    float32 arrays.
    """

    def __init__(self, tensors, profile=None, seed=None):
        self.tensors = {}
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float32)
            arr.setflags(write=False)
            self.tensors[name] = arr
        self.profile = profile
        self.seed = seed
        self._cache = {}

    def __getitem__(self, name):
        if name not in self.tensors:
            raise MissingTensorError(name)
        out = self._cache.get(name)
        if out is None:
            out = self.tensors[name].astype(np.float64)
            out.setflags(write=False)
            self._cache[name] = out
        return out

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def identical(self, other):
        """Bitwise equality of names, order, shapes and data."""
        if list(self.tensors) != list(other.tensors):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.tensors.values(), other.tensors.values())
        )

    def check_profile(self, prof):
        """Raise ShapeError unless every tensor the profile declares is present with its shape."""
        for decl in tensor_decls(prof):
            if decl.name not in self.tensors:
                raise MissingTensorError(decl.name)
            if self.tensors[decl.name].shape != decl.shape:
                raise ShapeError(
                    f"{decl.name}: stored shape {self.tensors[decl.name].shape} "
                    f"but profile {prof.name!r} expects {decl.shape}"
                )


def init_weights(profile, seed):
    """Xavier-uniform weights and zero biases, drawn in declaration order.

    ``profile`` is a profile name or a :class:`Profile`. Each weight tensor
    consumes ``size`` doubles from one PCG64 stream seeded with ``seed``
    (mapped to ``[-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``) in
    the order given by :func:`pccomplete.profiles.tensor_decls`.
    """
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise InvalidArgumentError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        profile = PROFILES[profile]
    elif not isinstance(profile, Profile):
        raise InvalidArgumentError(f"not a profile: {profile!r}")
    rng = make_rng(seed)
    tensors = {}
    for decl in tensor_decls(profile):
        if decl.bias:
            tensors[decl.name] = np.zeros(decl.shape, dtype=np.float32)
            continue
        a = math.sqrt(6.0 / (decl.fan_in + decl.fan_out))
        vals = (rng.random(int(np.prod(decl.shape))) * 2.0 - 1.0) * a
        tensors[decl.name] = vals.astype(np.float32).reshape(decl.shape)
    return WeightStore(tensors, profile=profile.name, seed=seed)


# ---------------------------------------------------------------------------
# persistence


def save_weights(w, path):
    parts = [PSW_MAGIC, struct.pack("<I", len(w.tensors))]
    for name, arr in w.tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_weights(path):
    raw = Path(path).read_bytes()
    if raw[:4] != PSW_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {PSW_MAGIC!r}", 0)
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated file", len(raw))
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError(f"{path}: CRC32 mismatch", len(raw) - 4)

    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise FormatError(f"{path}: truncated file", pos)
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        start = pos
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: tensor name is not UTF-8", start + 2) from None
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor name {name!r}", start)
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
    if pos != len(body):
        raise FormatError(f"{path}: {len(body) - pos} trailing bytes", pos)
    return WeightStore(tensors)


# ---------------------------------------------------------------------------
# forward ops


def linear(x, name, w):
    W = w[f"{name}.weight"]
    b = w[f"{name}.bias"]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"{name}: input shape {x.shape} incompatible with weight shape {W.shape}")
    return x @ W + b


def relu(x):
    return np.maximum(x, 0.0)


def mlp(x, name, w, dims=None):
    """Linear layers ``name.0``, ``name.1``, ... with ReLU between them.

    With ``dims`` given, the stored layer widths are checked against it.
    """
    n_layers = 0
    while f"{name}.{n_layers}.weight" in w:
        n_layers += 1
    if n_layers == 0:
        raise MissingTensorError(f"{name}.0.weight")
    if dims is not None:
        stored = [w[f"{name}.0.weight"].shape[0]] + [
            w[f"{name}.{i}.weight"].shape[1] for i in range(n_layers)
        ]
        if list(dims) != stored:
            raise ShapeError(f"{name}: requested dims {list(dims)} but stored layers are {stored}")
    for i in range(n_layers):
        x = linear(x, f"{name}.{i}", w)
        if i < n_layers - 1:
            x = relu(x)
    return x


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    # split by sign so neither branch overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sinusoidal_embed(t, C):
    """Transformer position encoding of scalar(s) ``t`` into ``C`` channels.

    Channel ``2k`` is ``sin(t / 10000**(2k/C))`` and ``2k+1`` the cosine.
    Returns shape ``(len(t), C)``, or ``(C,)`` for scalar input.
    """
    if C < 2 or C % 2:
        raise InvalidArgumentError(f"embedding width must be even and >= 2, got {C}")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freq = 10000.0 ** (np.arange(0, C, 2) / C)
    arg = t[:, None] / freq[None, :]
    out = np.empty((t.shape[0], C))
    out[:, 0::2] = np.sin(arg)
    out[:, 1::2] = np.cos(arg)
    return out[0] if scalar else out


def attend(q, k, v, scaled):
    logits = q @ k.T
    if scaled:
        logits = logits / math.sqrt(q.shape[1])
    a = softmax_rows(logits)
    return a @ v, a


def _feed_forward(x, prefix, w):
    return x + mlp(x, f"{prefix}.ff", w)


def self_attention(x, w, prefix, scaled=True):
    """Single-head attention block with residual and feed-forward residual."""
    q = linear(x, f"{prefix}.q", w)
    k = linear(x, f"{prefix}.k", w)
    v = linear(x, f"{prefix}.v", w)
    out, _ = attend(q, k, v, scaled)
    return _feed_forward(x + out, prefix, w)


def cross_attention(q_src, kv_src, w, prefix, scaled=False, return_map=False):
    """Queries from ``q_src``, keys and values from ``kv_src``; residual on ``q_src``."""
    q = linear(q_src, f"{prefix}.q", w)
    k = linear(kv_src, f"{prefix}.k", w)
    v = linear(kv_src, f"{prefix}.v", w)
    if q.shape[1] != q_src.shape[1]:
        raise ShapeError(f"{prefix}: value width {v.shape[1]} cannot be added to query rows of width {q_src.shape[1]}")
    out, a = attend(q, k, v, scaled)
    out = _feed_forward(q_src + out, prefix, w)
    return (out, a) if return_map else out


def ia_self_attention(f, h, w, prefix, scaled=False):
    """Self-attention whose queries and keys are offset by a per-token code ``h``.

    ``a_ij = softmax_j((f_i W_Q + h_i) . (f_j W_K + h_j))``; values are
    ``f_j W_V``. With ``h = 0`` this is exactly the unscaled
    :func:`self_attention`.
    """
    f = np.asarray(f, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if f.shape != h.shape:
        raise InvalidArgumentError(f"feature shape {f.shape} differs from embedding shape {h.shape}")
    q = linear(f, f"{prefix}.q", w) + h
    k = linear(f, f"{prefix}.k", w) + h
    v = linear(f, f"{prefix}.v", w)
    out, _ = attend(q, k, v, scaled)
    return _feed_forward(f + out, prefix, w)


def conv2d_s2(x, weight, bias):
    """3x3 convolution, stride 2, zero padding 1, on an ``(H, W, Cin)`` image."""
    H, W, cin = x.shape
    if weight.shape[:3] != (3, 3, cin):
        raise ShapeError(f"conv weight {weight.shape} incompatible with input {x.shape}")
    ho, wo = (H + 1) // 2, (W + 1) // 2
    xp = np.zeros((H + 2, W + 2, cin))
    xp[1:-1, 1:-1] = x
    cols = np.empty((ho, wo, 3, 3, cin))
    for dy in range(3):
        for dx in range(3):
            cols[:, :, dy, dx] = xp[dy : dy + 2 * ho : 2, dx : dx + 2 * wo : 2]
    out = cols.reshape(ho * wo, 9 * cin) @ weight.reshape(9 * cin, -1) + bias
    return out.reshape(ho, wo, -1)


def conv2d_encoder(images, w, prefix="svf.cnn"):
    """Five stride-2 conv+ReLU stages: ``(V, H, W)`` maps to ``(V, H/32, W/32, C)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 4 and images.shape[-1] == 1:
        images = images[..., 0]
    if images.ndim != 3:
        raise InvalidArgumentError(f"expected a (views, H, W) stack, got {images.shape}")
    _, H, W = images.shape
    if H % 32 or W % 32:
        raise InvalidArgumentError(f"image size {H}x{W} is not divisible by 32")
    feats = []
    for img in images:
        x = img[:, :, None]
        for i in range(5):
            x = relu(conv2d_s2(x, w[f"{prefix}.{i}.weight"], w[f"{prefix}.{i}.bias"]))
        feats.append(x)
    return np.stack(feats)


def conv_transpose1d(g, n_out, w, name):
    """Expand one global vector into ``n_out`` tokens (kernel = stride = ``n_out``)."""
    W = w[f"{name}.weight"]
    b = w[f"{name}.bias"]
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if W.shape[0] != g.shape[0] or W.shape[2] != n_out:
        raise ShapeError(f"{name}: weight {W.shape} cannot expand a {g.shape[0]}-vector to {n_out} tokens")
    # W[c, d, t]: input channel c contributes to output channel d at offset t
    return np.tensordot(g, W, axes=(0, 0)).T + b
