"""Global stage: point and depth-view encoders, two-stage fusion, coarse decoder."""
from dataclasses import dataclass, field

import numpy as np

from . import neuralcore as nc
from . import pcgeom
from .errors import InvalidArgumentError
from .projection import ProjectionParams, orthogonal_viewpoints, project_views


@dataclass(frozen=True)
class Ablation:
    """Switches that remove parts of the pipeline.

    Field names match the CLI flags. ``fixed_alpha`` replaces the learned
    gate with a constant.
    """

    no_projection: bool = False
    no_view_stage1: bool = False
    no_view_stage2: bool = False
    no_incompleteness: bool = False
    no_analysis: bool = False
    no_alignment: bool = False
    fixed_alpha: float | None = None

    def __post_init__(self):
        if self.no_analysis and self.no_alignment:
            raise InvalidArgumentError("cannot remove both refinement paths")
        if self.fixed_alpha is not None and not 0.0 <= self.fixed_alpha <= 1.0:
            raise InvalidArgumentError("fixed_alpha must lie in [0, 1]")


FULL = Ablation()


@dataclass
class SvfResult:
    p_c: np.ndarray
    p0: np.ndarray
    f_g: np.ndarray
    f_p: np.ndarray
    depth_maps: list = field(default_factory=list)
    viewpoints: list = field(default_factory=list)


def projection_params(prof):
    return ProjectionParams(
        resolution=prof.resolution,
        camera_distance=prof.camera_distance,
        densify_radius=prof.densify_radius,
        fov_degrees=prof.fov_degrees,
    )


def _set_abstraction(xyz, feats, centers, k, name, w):
    groups = pcgeom.knn(centers, xyz, k)
    rel = xyz[groups] - centers[:, None, :]
    x = rel if feats is None else np.concatenate([rel, feats[groups]], axis=2)
    m, kk, c = x.shape
    out = nc.mlp(x.reshape(m * kk, c), name, w)
    return out.reshape(m, kk, -1).max(axis=1)


def encode_points(p_in, w, prof):
    """Global point feature F_P from three set-abstraction stages.

    Points are put in canonical order first, so the result does not depend
    on the input permutation.
    """
    p_in = pcgeom.as_cloud(p_in, "p_in")
    n1, k1, _ = prof.sa1
    n2, k2, _ = prof.sa2
    if p_in.shape[0] < n1:
        raise InvalidArgumentError(f"point encoder needs at least {n1} points, got {p_in.shape[0]}")
    xyz = p_in[pcgeom.canonical_order(p_in)]
    c1 = xyz[pcgeom.fps(xyz, n1)]
    f1 = _set_abstraction(xyz, None, c1, k1, "svf.sa1", w)
    idx2 = pcgeom.fps(c1, n2)
    c2 = c1[idx2]
    f2 = _set_abstraction(c1, f1, c2, k2, "svf.sa2", w)
    pooled = np.broadcast_to(f2.max(axis=0), f2.shape)
    f3 = nc.mlp(np.concatenate([f2, pooled], axis=1), "svf.sa3", w)
    return f3.max(axis=0)


def encode_views(maps, w):
    """Patch tokens ``(n_views, P, C)`` from depth maps of one common size."""
    if not maps:
        raise InvalidArgumentError("no depth maps given")
    shapes = {dm.depth.shape for dm in maps}
    if len(shapes) != 1:
        raise InvalidArgumentError(f"depth maps have mixed resolutions: {sorted(shapes)}")
    feats = nc.conv2d_encoder(np.stack([dm.depth for dm in maps]), w)
    v, hh, ww, c = feats.shape
    return feats.reshape(v, hh * ww, c)


def fuse_stage1(view_tokens, f_p, w, enabled=True):
    """Per-view attention over patch tokens conditioned on F_P, max-pooled to one row per view."""
    view_tokens = np.asarray(view_tokens, dtype=np.float64)
    if not enabled:
        return view_tokens.max(axis=1)
    cond = nc.linear(np.asarray(f_p)[None, :], "svf.fuse1.cond", w)
    rows = []
    for tokens in view_tokens:
        x = tokens + cond
        q = nc.linear(x, "svf.fuse1.q", w)
        k = nc.linear(x, "svf.fuse1.k", w)
        v = nc.linear(x, "svf.fuse1.v", w)
        out, _ = nc.attend(q, k, v, scaled=True)
        rows.append(out.max(axis=0))
    return np.stack(rows)


def fuse_stage2(f_vg, f_p, vps, w, enabled=True):
    """Attention across views; viewpoints enter queries and keys as positional codes."""
    f_vg = np.asarray(f_vg, dtype=np.float64)
    if len(vps) != f_vg.shape[0]:
        raise InvalidArgumentError(f"{len(vps)} viewpoints for {f_vg.shape[0]} views")
    if not enabled:
        return f_vg.max(axis=0)
    cond = nc.linear(np.asarray(f_p)[None, :], "svf.fuse2.cond", w)
    pos = nc.linear(np.array([vp.position for vp in vps]), "svf.fuse2.vp", w)
    x = f_vg + cond
    q = nc.linear(x + pos, "svf.fuse2.q", w)
    k = nc.linear(x + pos, "svf.fuse2.k", w)
    v = nc.linear(x, "svf.fuse2.v", w)
    out, _ = nc.attend(q, k, v, scaled=True)
    return out.max(axis=0)


def decode_coarse(f_g, n_c, w):
    if n_c < 1:
        raise InvalidArgumentError("n_c must be positive")
    tokens = nc.conv_transpose1d(f_g, n_c, w, "svf.dec.ct")
    x = nc.linear(tokens, "svf.dec.lift", w)
    x = nc.self_attention(x, w, "svf.dec.attn", scaled=True)
    return nc.linear(x, "svf.dec.out", w)


def global_descriptor(p_in, w, prof, ablation=FULL):
    """F_g plus the intermediates it was computed from."""
    f_p = encode_points(p_in, w, prof)
    if ablation.no_projection:
        f_g = nc.linear(f_p[None, :], "svf.point_only", w)[0]
        return f_g, f_p, [], []
    vps = orthogonal_viewpoints(prof.camera_distance, prof.n_views)
    maps = project_views(p_in, vps, projection_params(prof))
    tokens = encode_views(maps, w)
    f_vg = fuse_stage1(tokens, f_p, w, enabled=not ablation.no_view_stage1)
    f_g = fuse_stage2(f_vg, f_p, vps, w, enabled=not ablation.no_view_stage2)
    return f_g, f_p, maps, vps


def svfnet_forward(p_in, w, prof, ablation=FULL):
    p_in = pcgeom.as_cloud(p_in, "p_in")
    f_g, f_p, maps, vps = global_descriptor(p_in, w, prof, ablation)
    p_c = decode_coarse(f_g, prof.n_coarse, w)
    p0 = pcgeom.merge_resample(p_c, p_in, prof.n0)
    return SvfResult(p_c=p_c, p0=p0, f_g=f_g, f_p=f_p, depth_maps=maps, viewpoints=vps)
