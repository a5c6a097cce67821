"""Named network/pipeline configurations and the tensors each one declares.

``pcn`` and ``snet55`` follow the published implementation details;
``tiny-test`` is a scaled-down variant that runs the whole pipeline in
well under a second.
"""
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Profile:
    name: str
    n_input: int
    n0: int
    rates: tuple
    resolution: int
    camera_distance: float
    half_extent: float
    channels: int  # view tokens, fusion, F_g and coarse decoder width
    gamma: float = 0.2
    seed: int = 0
    n_views: int = 3
    fov_degrees: float = 60.0
    densify_radius: int = 1
    cnn_channels: tuple = (16, 32, 64, 128)
    sa1: tuple = (512, 16, (64, 128))  # (npoint, k, mlp widths)
    sa2: tuple = (128, 16, (256,))
    sa3: tuple = (256,)
    coarse_seed_dim: int = 128
    edge1: tuple = (16, 64)  # (k, width)
    edge_fps: int = 512
    edge2: tuple = (8, 256)
    hidden_dims: tuple = (768, 512)
    decoder_depth: int = 2
    offset_dim: int = 128
    offset_mlp: tuple = (64, 3)
    gate_hidden: int = 64

    @property
    def n_coarse(self):
        return self.n0

    @property
    def point_dim(self):
        return self.sa3[-1]

    @property
    def hidden_max(self):
        return max(self.hidden_dims)

    def output_sizes(self):
        """Point counts of (P_c, P_0, P_1, P_2)."""
        p1 = self.n0 * self.rates[0]
        return self.n_coarse, self.n0, p1, p1 * self.rates[1]


PROFILES = {
    "pcn": Profile(
        name="pcn", n_input=2048, n0=512, rates=(4, 8), resolution=224,
        camera_distance=0.7, half_extent=0.5, channels=512, decoder_depth=2,
    ),
    "snet55": Profile(
        name="snet55", n_input=2048, n0=1024, rates=(2, 4), resolution=224,
        camera_distance=1.5, half_extent=1.0, channels=512, decoder_depth=1,
    ),
    "tiny-test": Profile(
        name="tiny-test", n_input=256, n0=64, rates=(2, 2), resolution=64,
        camera_distance=0.7, half_extent=0.5, channels=32,
        cnn_channels=(8, 8, 16, 16), sa1=(64, 8, (16, 32)), sa2=(32, 8, (32,)),
        sa3=(32,), coarse_seed_dim=16, edge1=(8, 16), edge_fps=64, edge2=(4, 32),
        hidden_dims=(48, 32), decoder_depth=1, offset_dim=32, offset_mlp=(16, 3),
        gate_hidden=16,
    ),
}

# keys accepted in config files and as CLI overrides
CONFIG_KEYS = {
    "n_views": int,
    "resolution": int,
    "camera_distance": float,
    "n0": int,
    "channels": int,
    "seed": int,
    "gamma": float,
    "densify_radius": int,
    "fov_degrees": float,
}


def get_profile(name, **overrides):
    if name not in PROFILES:
        raise InvalidArgumentError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    prof = PROFILES[name]
    overrides = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(overrides) - {f.name for f in fields(Profile)}
    if unknown:
        raise InvalidArgumentError(f"unknown profile keys: {sorted(unknown)}")
    prof = replace(prof, **overrides)
    validate(prof)
    return prof


def validate(prof):
    if prof.resolution < 16 or prof.resolution % 32:
        raise InvalidArgumentError(f"resolution {prof.resolution} must be >= 32 and divisible by 32")
    if not 0 <= prof.densify_radius <= 4:
        raise InvalidArgumentError("densify_radius must lie in [0, 4]")
    if not 1 <= prof.n_views <= 6:
        raise InvalidArgumentError("n_views must lie in [1, 6]")
    if prof.camera_distance <= 0 or prof.gamma <= 0:
        raise InvalidArgumentError("camera_distance and gamma must be positive")
    if prof.n0 < 1 or len(prof.rates) != 2 or min(prof.rates) < 1:
        raise InvalidArgumentError("n0 and rates must be positive; exactly two rates")
    if prof.channels < 1:
        raise InvalidArgumentError("channels must be positive")
    if any(h % 2 for h in prof.hidden_dims):
        raise InvalidArgumentError("hidden dims must be even (sinusoidal embedding)")


def parse_config(path):
    """Read a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InvalidArgumentError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise InvalidArgumentError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


# ---------------------------------------------------------------------------
# tensor declarations


@dataclass
class TensorDecl:
    name: str
    shape: tuple
    fan_in: int = 0
    fan_out: int = 0
    bias: bool = field(default=False)


def _linear(decls, name, n_in, n_out):
    decls.append(TensorDecl(f"{name}.weight", (n_in, n_out), n_in, n_out))
    decls.append(TensorDecl(f"{name}.bias", (n_out,), bias=True))


def _mlp(decls, name, dims):
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        _linear(decls, f"{name}.{i}", a, b)


def _attention(decls, name, c, c_kv=None):
    c_kv = c if c_kv is None else c_kv
    _linear(decls, f"{name}.q", c, c)
    _linear(decls, f"{name}.k", c_kv, c)
    _linear(decls, f"{name}.v", c_kv, c)
    _mlp(decls, f"{name}.ff", (c, c, c))


def tensor_decls(prof):
    """All tensors of a profile, in initialization order."""
    d = []
    c = prof.channels
    # point branch
    npt, _, w1 = prof.sa1
    _mlp(d, "svf.sa1", (3,) + tuple(w1))
    _mlp(d, "svf.sa2", (w1[-1] + 3,) + tuple(prof.sa2[2]))
    sa2_out = prof.sa2[2][-1]
    _mlp(d, "svf.sa3", (2 * sa2_out,) + tuple(prof.sa3))
    # view branch
    chans = (1,) + tuple(prof.cnn_channels) + (c,)
    for i, (a, b) in enumerate(zip(chans[:-1], chans[1:])):
        d.append(TensorDecl(f"svf.cnn.{i}.weight", (3, 3, a, b), 9 * a, 9 * b))
        d.append(TensorDecl(f"svf.cnn.{i}.bias", (b,), bias=True))
    # fusion
    _linear(d, "svf.fuse1.cond", prof.point_dim, c)
    for p in ("q", "k", "v"):
        _linear(d, f"svf.fuse1.{p}", c, c)
    _linear(d, "svf.fuse2.cond", prof.point_dim, c)
    _linear(d, "svf.fuse2.vp", 3, c)
    for p in ("q", "k", "v"):
        _linear(d, f"svf.fuse2.{p}", c, c)
    _linear(d, "svf.point_only", prof.point_dim, c)
    # coarse decoder
    s = prof.coarse_seed_dim
    d.append(TensorDecl("svf.dec.ct.weight", (c, s, prof.n_coarse), c, s * prof.n_coarse))
    d.append(TensorDecl("svf.dec.ct.bias", (s,), bias=True))
    _linear(d, "svf.dec.lift", s, c)
    _attention(d, "svf.dec.attn", c)
    _linear(d, "svf.dec.out", c, 3)
    # refiner, shared by both iterations; sized for the widest hidden dim
    h = prof.hidden_max
    k1, e1 = prof.edge1
    k2, e2 = prof.edge2
    _linear(d, "sdg.embed", 3 + c, h)
    _attention(d, "sdg.ia", h)
    for i in range(prof.decoder_depth):
        _attention(d, f"sdg.q_dec.{i}", h)
    _mlp(d, "sdg.edge1", (6, e1))
    _mlp(d, "sdg.edge2", (2 * e1, e2))
    _attention(d, "sdg.ca", h, e2)
    for i in range(prof.decoder_depth):
        _attention(d, f"sdg.h_dec.{i}", h)
    _mlp(d, "sdg.gate", (2 * h + prof.offset_dim, prof.gate_hidden, 1))
    _linear(d, "sdg.expand", h, max(prof.rates) * prof.offset_dim)
    _mlp(d, "sdg.offset", (prof.offset_dim,) + tuple(prof.offset_mlp))
    return d
