"""Exact geometric kernels: neighbour search, sampling, cropping and cloud I/O.

Point clouds are plain ``(N, 3)`` float64 arrays. Every routine breaks
ties towards the lower index, so results are fully deterministic.
"""
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateInputError, FormatError, InvalidArgumentError

PCB_MAGIC = b"PCB1"


@dataclass(frozen=True)
class Viewpoint:
    position: tuple
    look_at: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        tgt = tuple(float(v) for v in self.look_at)
        if len(pos) != 3 or len(tgt) != 3:
            raise InvalidArgumentError("viewpoint position and look_at must be 3-vectors")
        if pos == tgt:
            raise InvalidArgumentError("viewpoint position coincides with look_at")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "look_at", tgt)


def as_cloud(points, name="cloud", allow_empty=False):
    """Validate and convert to a contiguous ``(N, 3)`` float64 array."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgumentError(f"{name} must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise InvalidArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite coordinates")
    return arr


def canonical_order(cloud):
    """Permutation sorting points lexicographically by (x, y, z), stable."""
    cloud = as_cloud(cloud)
    return np.lexsort((cloud[:, 2], cloud[:, 1], cloud[:, 0]))


def knn(query, reference, k):
    """Indices of the ``k`` nearest reference points for every query point.

    Rows are ordered by ascending (distance, index).
    """
    query = as_cloud(query, "query")
    reference = as_cloud(reference, "reference")
    if k < 1 or k > reference.shape[0]:
        raise InvalidArgumentError(f"k={k} must lie in [1, {reference.shape[0]}]")
    return kernels.knn(query, reference, k)


def knn_features(query, reference, k):
    """:func:`knn` for arbitrary-width feature rows."""
    query = np.ascontiguousarray(query, dtype=np.float64)
    reference = np.ascontiguousarray(reference, dtype=np.float64)
    if k < 1 or k > reference.shape[0]:
        raise InvalidArgumentError(f"k={k} must lie in [1, {reference.shape[0]}]")
    return kernels.knn(query, reference, k)


def fps(cloud, m):
    """Greedy farthest point sampling seeded at index 0."""
    cloud = as_cloud(cloud)
    if m < 1 or m > cloud.shape[0]:
        raise InvalidArgumentError(f"m={m} must lie in [1, {cloud.shape[0]}]")
    return kernels.fps(cloud, m)


def nearest_distance_field(query, anchor):
    """Euclidean distance from each query point to its closest anchor point."""
    query = as_cloud(query, "query")
    anchor = as_cloud(anchor, "anchor")
    d2, _ = kernels.nn_search(query, anchor)
    return np.sqrt(d2)


def viewpoint_crop(gt, vp, n_missing, n_keep):
    """Remove the ``n_missing`` points farthest from the viewpoint.

    The survivors are FPS-downsampled to ``n_keep`` points.

    Returns
    -------
    partial, missing : ndarray
    """
    gt = as_cloud(gt, "gt")
    n = gt.shape[0]
    if not 0 < n_missing < n:
        raise InvalidArgumentError(f"n_missing={n_missing} must lie in [1, {n - 1}]")
    if not 0 < n_keep <= n - n_missing:
        raise InvalidArgumentError(f"n_keep={n_keep} exceeds the {n - n_missing} remaining points")
    d2 = np.zeros(n)
    for c in range(3):
        diff = gt[:, c] - vp.position[c]
        d2 += diff * diff
    # ascending (distance, index); the tail is removed, so ties keep lower indices
    order = np.lexsort((np.arange(n), d2))
    kept = np.sort(order[: n - n_missing])
    removed = np.sort(order[n - n_missing :])
    rest = gt[kept]
    partial = rest[kernels.fps(rest, n_keep)]
    return partial, gt[removed]


def fixed_test_viewpoints():
    """The eight cube corners of {-1, +1}^3 in lexicographic order."""
    return [Viewpoint(c) for c in itertools.product((-1.0, 1.0), repeat=3)]


def merge_resample(coarse, partial, n0):
    """Concatenate ``coarse`` then ``partial`` and keep ``n0`` points by FPS."""
    coarse = as_cloud(coarse, "coarse")
    partial = as_cloud(partial, "partial")
    merged = np.concatenate([coarse, partial])
    if n0 < 1 or n0 > merged.shape[0]:
        raise InvalidArgumentError(f"cannot resample {merged.shape[0]} points to n0={n0}")
    return merged[kernels.fps(merged, n0)]


def normalize(cloud, half_extent):
    """Center the bounding box at the origin and scale its largest half-extent.

    Returns ``(normalized, (center, scale))`` with
    ``normalized = (cloud - center) * scale``.
    """
    cloud = as_cloud(cloud)
    if half_extent <= 0:
        raise InvalidArgumentError("half_extent must be positive")
    lo, hi = cloud.min(axis=0), cloud.max(axis=0)
    extent = float(np.max(hi - lo)) / 2.0
    if extent <= 0.0:
        raise DegenerateInputError("all points coincide; cannot normalize")
    center = (lo + hi) / 2.0
    scale = half_extent / extent
    return (cloud - center) * scale, (center, scale)


# ---------------------------------------------------------------------------
# file formats


def write_pcb(path, cloud):
    cloud = as_cloud(cloud, allow_empty=True)
    data = PCB_MAGIC + struct.pack("<I", cloud.shape[0])
    data += cloud.astype("<f4").tobytes()
    Path(path).write_bytes(data)


def read_pcb(path):
    raw = Path(path).read_bytes()
    if raw[:4] != PCB_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {PCB_MAGIC!r}", 0)
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header", len(raw))
    (n,) = struct.unpack_from("<I", raw, 4)
    need = 8 + 12 * n
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes for {n} points, got {len(raw)}", len(raw))
    pts = np.frombuffer(raw, dtype="<f4", offset=8).reshape(n, 3)
    return pts.astype(np.float64)


def write_xyz(path, cloud):
    cloud = as_cloud(cloud, allow_empty=True)
    lines = "".join(f"{x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in cloud.tolist())
    Path(path).write_text(lines)


def read_xyz(path):
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InvalidArgumentError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise InvalidArgumentError(f"{path}:{lineno}: not a number: {line!r}") from None
    return as_cloud(np.array(rows).reshape(-1, 3), str(path))


def load_cloud(path):
    """Read a cloud, dispatching on extension (``.pcb`` binary, else text)."""
    if Path(path).suffix.lower() == ".pcb":
        return as_cloud(read_pcb(path), str(path))
    return read_xyz(path)


def save_cloud(path, cloud):
    if Path(path).suffix.lower() == ".pcb":
        write_pcb(path, cloud)
    else:
        write_xyz(path, cloud)
