"""Local stage: dual-path refinement and upsampling of a coarse shape.

Both refinement iterations read the same ``sdg.*`` tensors. Those tensors
are allocated for the widest hidden size; an iteration running at a
narrower width uses the leading rows/columns (see :func:`shared_view`).
"""
from dataclasses import dataclass, field

import numpy as np

from . import neuralcore as nc
from . import pcgeom
from .errors import InvalidArgumentError
from .svfnet import FULL


@dataclass
class IncompletenessField:
    d: np.ndarray
    h: np.ndarray
    gamma: float


@dataclass
class SdgOutput:
    points: np.ndarray
    features: np.ndarray
    alpha: np.ndarray | None
    attention: np.ndarray | None
    field: IncompletenessField


@dataclass
class CompletionTrace:
    p_c: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    alphas: list = field(default_factory=list)
    attention_maps: list = field(default_factory=list)
    depth_maps: list = field(default_factory=list)
    f_g: np.ndarray | None = None


_ATTN_BLOCKS = ("sdg.ia", "sdg.q_dec.", "sdg.h_dec.", "sdg.ca")


def shared_view(w, prof, hidden, rate, first):
    """The ``sdg.*`` tensors sliced for one iteration.

    ``hidden`` selects the leading attention channels, ``rate`` the leading
    ``rate * offset_dim`` expansion columns, and ``first`` drops the gate
    rows that read the previous offset feature.
    """
    H, D = prof.hidden_max, prof.offset_dim
    if not 0 < hidden <= H or hidden % 2:
        raise InvalidArgumentError(f"hidden width {hidden} must be even and in (0, {H}]")
    if not 0 < rate <= max(prof.rates):
        raise InvalidArgumentError(f"rate {rate} exceeds the stored maximum {max(prof.rates)}")
    view = {}
    for name in w:
        if not name.startswith("sdg."):
            continue
        t = w[name]
        is_bias = name.endswith(".bias")
        if name.startswith("sdg.embed"):
            t = t[:hidden] if is_bias else t[:, :hidden]
        elif name.startswith(_ATTN_BLOCKS):
            if is_bias:
                t = t[:hidden]
            elif name.startswith("sdg.ca.") and name[7] in "kv":
                t = t[:, :hidden]  # keys/values read the fixed-width partial features
            else:
                t = t[:hidden, :hidden]
        elif name == "sdg.gate.0.weight":
            rows = [np.arange(hidden)]
            if not first:
                rows.append(H + np.arange(D))
            rows.append(H + D + np.arange(hidden))
            t = t[np.concatenate(rows)]
        elif name.startswith("sdg.expand"):
            t = t[: rate * D] if is_bias else t[:hidden, : rate * D]
        view[name] = t
    return view


def incompleteness_embed(p, p_in, gamma, C):
    """Distance to the nearest partial-input point, sinusoidally embedded after scaling by 1/gamma."""
    if gamma <= 0:
        raise InvalidArgumentError("gamma must be positive")
    d = pcgeom.nearest_distance_field(p, p_in)
    return IncompletenessField(d=d, h=nc.sinusoidal_embed(d / gamma, C), gamma=gamma)


def _decode(x, w, prefix, depth):
    for i in range(depth):
        x = nc.self_attention(x, w, f"{prefix}.{i}", scaled=True)
    return x


def point_embedding(p_prev, f_g, w):
    """F_C: one linear layer over ``[xyz | F_g]`` per point."""
    g = np.broadcast_to(np.asarray(f_g, dtype=np.float64), (p_prev.shape[0], len(f_g)))
    return nc.linear(np.concatenate([p_prev, g], axis=1), "sdg.embed", w)


def structure_analysis(p_prev, f_g, fld, w, depth):
    """Returns ``(F_Q, F_Q')``: incompleteness-aware attention, then its decoder."""
    p_prev = pcgeom.as_cloud(p_prev, "p_prev")
    if fld.h.shape[0] != p_prev.shape[0]:
        raise InvalidArgumentError(f"field has {fld.h.shape[0]} rows for {p_prev.shape[0]} points")
    f_c = point_embedding(p_prev, f_g, w)
    f_q = nc.ia_self_attention(f_c, fld.h, w, "sdg.ia")
    return f_q, _decode(f_q, w, "sdg.q_dec", depth)


def encode_partial(p_in, w, prof):
    """Local features of the partial input: EdgeConv, FPS, EdgeConv in feature space.

    Input points are put in canonical order first.
    """
    p_in = pcgeom.as_cloud(p_in, "p_in")
    k1, _ = prof.edge1
    k2, _ = prof.edge2
    if p_in.shape[0] < prof.edge_fps:
        raise InvalidArgumentError(f"partial encoder needs at least {prof.edge_fps} points, got {p_in.shape[0]}")
    xyz = p_in[pcgeom.canonical_order(p_in)]
    f1 = edge_conv(xyz, pcgeom.knn(xyz, xyz, k1), "sdg.edge1", w)
    f1 = f1[pcgeom.fps(xyz, prof.edge_fps)]
    return edge_conv(f1, pcgeom.knn_features(f1, f1, k2), "sdg.edge2", w)


def edge_conv(f, nbrs, name, w):
    """``max_j MLP([f_i | f_j - f_i])`` over each row's neighbour indices."""
    n, k = nbrs.shape
    centre = np.broadcast_to(f[:, None, :], (n, k, f.shape[1]))
    edges = np.concatenate([centre, f[nbrs] - centre], axis=2)
    out = nc.mlp(edges.reshape(n * k, -1), name, w)
    return out.reshape(n, k, -1).max(axis=1)


def similarity_alignment(f_q, f_in, w, depth):
    """Returns ``(F_H', attention_map)``: cross-attention onto the partial features, then a decoder."""
    f_h, attn = nc.cross_attention(f_q, f_in, w, "sdg.ca", return_map=True)
    return _decode(f_h, w, "sdg.h_dec", depth), attn


_ALPHA_LO = np.nextafter(0.0, 1.0)
_ALPHA_HI = np.nextafter(1.0, 0.0)


def path_select(f_q_prime, f_h_prime, f_q, f_prev, w, fixed_alpha=None):
    """Per-point gate blending the two paths: ``F' = a F_Q' + (1 - a) F_H'``."""
    n = f_q_prime.shape[0]
    if f_h_prime.shape != f_q_prime.shape or f_q.shape[0] != n:
        raise InvalidArgumentError("path features must have matching shapes")
    if f_prev is not None and f_prev.shape[0] != n:
        raise InvalidArgumentError(f"previous feature has {f_prev.shape[0]} rows, expected {n}")
    if fixed_alpha is not None:
        alpha = np.full(n, float(fixed_alpha))
    else:
        parts = [f_q_prime + f_h_prime]
        if f_prev is not None:
            parts.append(f_prev)
        parts.append(np.broadcast_to(f_q.max(axis=0), f_q.shape))
        alpha = nc.sigmoid(nc.mlp(np.concatenate(parts, axis=1), "sdg.gate", w)[:, 0])
        # large logits round to exactly 0 or 1; keep the gate strictly inside
        alpha = np.clip(alpha, _ALPHA_LO, _ALPHA_HI)
    a = alpha[:, None]
    return a * f_q_prime + (1.0 - a) * f_h_prime, alpha


def offset_regress(f_l_prime, r, p_prev, w, offset_dim):
    """Split each point into ``r`` children displaced by regressed offsets.

    Returns ``(P_l, F_l, O_l)``; child ``j`` of point ``i`` is row ``i*r + j``.
    """
    if r < 1:
        raise InvalidArgumentError("upsampling rate must be >= 1")
    f_l = nc.linear(f_l_prime, "sdg.expand", w).reshape(-1, offset_dim)
    if f_l.shape[0] != r * p_prev.shape[0]:
        raise InvalidArgumentError(f"expansion produced {f_l.shape[0]} rows, expected {r * p_prev.shape[0]}")
    offsets = nc.mlp(f_l, "sdg.offset", w)
    return np.repeat(p_prev, r, axis=0) + offsets, f_l, offsets


def sdg_forward(p_prev, f_prev, rate, hidden, p_in, f_g, f_in, w, prof, ablation=FULL):
    """One refinement step on the sliced view of the shared weights.

    ``f_in`` is the output of :func:`encode_partial`; ``f_prev`` is ``None``
    on the first step.
    """
    first = f_prev is None
    view = shared_view(w, prof, hidden, rate, first)
    fld = incompleteness_embed(p_prev, p_in, prof.gamma, hidden)
    h = np.zeros_like(fld.h) if ablation.no_incompleteness else fld.h
    depth = prof.decoder_depth

    alpha = attn = None
    if ablation.no_analysis:
        # alignment path alone, queried by the plain point embedding
        f_c = point_embedding(p_prev, f_g, view)
        f_l_prime, attn = similarity_alignment(f_c, f_in, view, depth)
    else:
        f_q, f_q_prime = structure_analysis(p_prev, f_g, IncompletenessField(fld.d, h, fld.gamma), view, depth)
        if ablation.no_alignment:
            f_l_prime = f_q_prime
        else:
            f_h_prime, attn = similarity_alignment(f_q, f_in, view, depth)
            f_l_prime, alpha = path_select(f_q_prime, f_h_prime, f_q, f_prev, view, ablation.fixed_alpha)
    p_l, f_l, _ = offset_regress(f_l_prime, rate, p_prev, view, prof.offset_dim)
    return SdgOutput(points=p_l, features=f_l, alpha=alpha, attention=attn, field=fld)


def refine_stack(p0, p_in, f_g, w, prof, ablation=FULL):
    """Two refinement steps with shared weights. Returns ``(P_1, P_2, [step outputs])``."""
    if len(prof.rates) != 2 or len(prof.hidden_dims) != 2:
        raise InvalidArgumentError("refinement needs exactly two rates and two hidden widths")
    f_in = None if ablation.no_alignment else encode_partial(p_in, w, prof)
    steps = []
    p, f = pcgeom.as_cloud(p0, "p0"), None
    for rate, hidden in zip(prof.rates, prof.hidden_dims):
        out = sdg_forward(p, f, rate, hidden, p_in, f_g, f_in, w, prof, ablation)
        steps.append(out)
        p, f = out.points, out.features
    return steps[0].points, steps[1].points, steps
