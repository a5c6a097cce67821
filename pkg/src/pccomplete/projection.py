"""Render point clouds into depth maps and lift depth maps back to points.

Camera model: pinhole, principal axis from the camera position towards
``look_at``, square image, up vector +Y (or +Z when looking along the Y
axis). Pixel ``(row, col)`` covers ``u in [col, col+1)``, ``v in [row,
row+1)`` with the principal point at ``(res/2, res/2)``. Stored depth is
the distance along the principal axis; 0 marks background.
"""
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import EmptyProjectionError, FormatError, InvalidArgumentError
from .neuralcore import make_rng
from .pcgeom import Viewpoint, as_cloud

DMB_MAGIC = b"DMB1"
# points closer than this to the camera plane are dropped
_NEAR = 1e-6


@dataclass(frozen=True)
class ProjectionParams:
    resolution: int = 224
    camera_distance: float = 0.7
    densify_radius: int = 1
    fov_degrees: float = 60.0

    def __post_init__(self):
        if self.resolution < 16:
            raise InvalidArgumentError("resolution must be at least 16")
        if not 0 <= self.densify_radius <= 4:
            raise InvalidArgumentError("densify_radius must lie in [0, 4]")
        if self.camera_distance <= 0 or not 0 < self.fov_degrees < 180:
            raise InvalidArgumentError("camera_distance must be positive and fov in (0, 180)")

    @property
    def focal(self):
        """Focal length in pixels."""
        return (self.resolution / 2.0) / math.tan(math.radians(self.fov_degrees) / 2.0)

    def footprint_bound(self):
        """Round-trip error bound: one pixel diagonal at the camera distance."""
        return self.camera_distance * math.tan(math.radians(self.fov_degrees) / 2.0) * 2.0 / self.resolution * math.sqrt(2.0)


@dataclass
class DepthMap:
    depth: np.ndarray
    viewpoint: Viewpoint

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def width(self):
        return self.depth.shape[1]


def orthogonal_viewpoints(distance, n_views=3):
    """Cameras on the +X, +Y, +Z axes (then -X, -Y, -Z for ``n_views > 3``)."""
    if distance <= 0:
        raise InvalidArgumentError("distance must be positive")
    if not 1 <= n_views <= 6:
        raise InvalidArgumentError("n_views must lie in [1, 6]")
    axes = np.vstack([np.eye(3), -np.eye(3)])
    return [Viewpoint(tuple(distance * a)) for a in axes[:n_views]]


def camera_basis(vp):
    """Rows: right, up, forward unit vectors of the camera frame."""
    pos = np.asarray(vp.position)
    fwd = np.asarray(vp.look_at) - pos
    fwd /= np.linalg.norm(fwd)
    up0 = np.array([0.0, 0.0, 1.0]) if abs(fwd[1]) > 1.0 - 1e-9 else np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up0)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    return np.stack([right, up, fwd])


def _to_pixels(cloud, vp, params):
    """Camera-frame coordinates and continuous pixel positions (u=col, v=row)."""
    cam = (cloud - np.asarray(vp.position)) @ camera_basis(vp).T
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = params.resolution / 2.0 + params.focal * cam[:, 0] / z
        v = params.resolution / 2.0 - params.focal * cam[:, 1] / z
    return z, u, v


def pixel_coords(cloud, vp, params):
    """Integer pixel ``(rows, cols, depth)`` of every in-frustum point, plus the mask."""
    cloud = as_cloud(cloud)
    z, u, v = _to_pixels(cloud, vp, params)
    res = params.resolution
    ok = (z > _NEAR) & np.isfinite(u) & np.isfinite(v)
    ok &= (u >= 0) & (u < res) & (v >= 0) & (v < res)
    cols = np.floor(u[ok]).astype(np.int64)
    rows = np.floor(v[ok]).astype(np.int64)
    return rows, cols, z[ok], ok


def project_depth(cloud, vp, params):
    """Z-buffered depth map; each point splats a ``(2r+1)^2`` pixel block."""
    rows, cols, depth, ok = pixel_coords(cloud, vp, params)
    if not ok.any():
        raise EmptyProjectionError("no point falls inside the camera frustum")
    res = params.resolution
    img = kernels.splat_min(rows, cols, depth, res, res, params.densify_radius)
    return DepthMap(img, vp)


def project_views(cloud, vps, params):
    return [project_depth(cloud, vp, params) for vp in vps]


def backproject(dm, params, sigma=0.0, seed=0):
    """One 3D point per nonzero pixel, placed at the pixel center.

    ``sigma > 0`` adds zero-mean Gaussian noise drawn from a PCG64 stream
    seeded with ``seed``.
    """
    rows, cols = np.nonzero(dm.depth > 0)
    if rows.size == 0:
        raise InvalidArgumentError("depth map has no foreground pixels")
    if dm.height != params.resolution or dm.width != params.resolution:
        raise InvalidArgumentError(
            f"depth map is {dm.height}x{dm.width} but params expect {params.resolution}^2"
        )
    z = dm.depth[rows, cols]
    half = params.resolution / 2.0
    x = (cols + 0.5 - half) * z / params.focal
    y = (half - (rows + 0.5)) * z / params.focal
    cam = np.stack([x, y, z], axis=1)
    pts = cam @ camera_basis(dm.viewpoint) + np.asarray(dm.viewpoint.position)
    if sigma > 0:
        pts = pts + make_rng(seed).normal(0.0, sigma, size=pts.shape)
    return pts


# ---------------------------------------------------------------------------
# file formats


def write_dmb(path, dm):
    h, w = dm.depth.shape
    head = DMB_MAGIC + struct.pack("<II", h, w)
    head += struct.pack("<3f", *dm.viewpoint.position) + struct.pack("<3f", *dm.viewpoint.look_at)
    Path(path).write_bytes(head + np.ascontiguousarray(dm.depth, dtype="<f4").tobytes())


def read_dmb(path):
    raw = Path(path).read_bytes()
    if raw[:4] != DMB_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {DMB_MAGIC!r}", 0)
    if len(raw) < 36:
        raise FormatError(f"{path}: truncated header", len(raw))
    h, w = struct.unpack_from("<II", raw, 4)
    pos = struct.unpack_from("<3f", raw, 12)
    tgt = struct.unpack_from("<3f", raw, 24)
    need = 36 + 4 * h * w
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for a {h}x{w} map, got {len(raw)}", len(raw))
    depth = np.frombuffer(raw, dtype="<f4", offset=36).reshape(h, w).astype(np.float64)
    try:
        vp = Viewpoint(pos, tgt)
    except InvalidArgumentError as exc:
        raise FormatError(f"{path}: {exc}", 12) from None
    return DepthMap(depth, vp)


def write_pgm(path, dm):
    """16-bit binary PGM preview, depth scaled linearly onto 1..65535."""
    d = dm.depth
    fg = d > 0
    img = np.zeros(d.shape, dtype=">u2")
    if fg.any():
        lo, hi = d[fg].min(), d[fg].max()
        span = hi - lo if hi > lo else 1.0
        img[fg] = np.round(1 + (d[fg] - lo) / span * 65534).astype(">u2")
    head = f"P5\n{d.shape[1]} {d.shape[0]}\n65535\n".encode("ascii")
    Path(path).write_bytes(head + img.tobytes())
