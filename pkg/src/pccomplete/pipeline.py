"""End-to-end completion: global stage, then two refinement steps."""
from pathlib import Path

import numpy as np

from . import pcgeom
from .errors import InvalidArgumentError
from .sdg import CompletionTrace, refine_stack
from .svfnet import FULL, svfnet_forward

# CLI flag -> ablation variant letter
VARIANTS = {
    "A": {"no_projection": True},
    "G": {"no_incompleteness": True},
    "H": {"no_alignment": True},
    "I": {"no_analysis": True},
    "J": {"fixed_alpha": 0.5},
}


def complete(p_in, w, prof, ablation=FULL):
    """Run the full pipeline and return every intermediate."""
    p_in = pcgeom.as_cloud(p_in, "p_in")
    need = max(prof.sa1[0], prof.edge_fps)
    if p_in.shape[0] < need:
        raise InvalidArgumentError(f"profile {prof.name!r} needs at least {need} input points, got {p_in.shape[0]}")
    svf = svfnet_forward(p_in, w, prof, ablation)
    p1, p2, steps = refine_stack(svf.p0, p_in, svf.f_g, w, prof, ablation)
    return CompletionTrace(
        p_c=svf.p_c,
        p0=svf.p0,
        p1=p1,
        p2=p2,
        alphas=[s.alpha for s in steps],
        attention_maps=[s.attention for s in steps],
        depth_maps=svf.depth_maps,
        f_g=svf.f_g,
    )


def _write_f32(path, arr):
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def write_trace(trace, out_dir):
    """Write ``p_c/p_0/p_1/p_2.pcb`` plus per-step gate and attention dumps.

    Gates and attention maps that an ablation removed are not written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, pts in (("p_c", trace.p_c), ("p_0", trace.p0), ("p_1", trace.p1), ("p_2", trace.p2)):
        pcgeom.write_pcb(out / f"{name}.pcb", pts)
    for i, (alpha, attn) in enumerate(zip(trace.alphas, trace.attention_maps), 1):
        if alpha is not None:
            _write_f32(out / f"alpha_{i}.f32", alpha)
        if attn is not None:
            _write_f32(out / f"attn_{i}.f32", attn)
            (out / f"attn_{i}.meta").write_text(f"{attn.shape[0]} {attn.shape[1]}\n")


def read_f32(path, meta=None):
    data = np.frombuffer(Path(path).read_bytes(), dtype="<f4").astype(np.float64)
    if meta is not None:
        rows, cols = (int(v) for v in Path(meta).read_text().split())
        data = data.reshape(rows, cols)
    return data
