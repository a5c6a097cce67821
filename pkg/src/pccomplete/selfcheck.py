"""Built-in invariant and oracle checks, runnable without pytest.

Each check is a function that raises ``AssertionError`` on failure. All
use fixed seeds and the ``tiny-test`` profile where a network is needed.
"""
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from . import kernels, metrics, pcgeom, pipeline, projection, reference, sdg, svfnet
from . import neuralcore as nc
from .profiles import get_profile
from .svfnet import Ablation

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _rng(seed):
    return np.random.default_rng(seed)


def _close(a, b, tol, what):
    err = float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
    assert err <= tol, f"{what}: max abs error {err:.3e} > {tol:.0e}"


@check
def knn_matches_bruteforce():
    for seed in range(3):
        q, r = _rng(seed).random((64, 3)), _rng(seed + 100).random((128, 3))
        assert pcgeom.knn(q, r, 8).tolist() == reference.knn(q.tolist(), r.tolist(), 8)


@check
def fps_matches_greedy_and_prefix():
    x = _rng(1).random((256, 3))
    full = pcgeom.fps(x, 32)
    assert full.tolist() == reference.fps(x.tolist(), 32)
    assert pcgeom.fps(x, 31).tolist() == full[:31].tolist()


@check
def crop_protocol_sizes():
    gt = _rng(2).uniform(-1, 1, (8192, 3))
    vp = pcgeom.fixed_test_viewpoints()[0]
    for n_missing in (2048, 4096, 6144):
        partial, missing = pcgeom.viewpoint_crop(gt, vp, n_missing, 2048)
        assert partial.shape == (2048, 3) and missing.shape == (n_missing, 3)


@check
def distance_field_oracle_and_zero():
    q, a = _rng(3).random((64, 3)), _rng(4).random((80, 3))
    ref = [d for d, _ in reference.nearest(q.tolist(), a.tolist())]
    _close(pcgeom.nearest_distance_field(q, a), ref, 1e-12, "distance field")
    assert not pcgeom.nearest_distance_field(a, a).any()


@check
def backends_agree():
    if len(kernels.available_backends()) < 2:
        return
    x, y = _rng(5).random((300, 3)), _rng(6).random((200, 3))
    results = []
    prev = kernels.active_backend()
    try:
        for name in kernels.available_backends():
            kernels.use_backend(name)
            results.append((kernels.knn(x, y, 5), kernels.fps(x, 50), *kernels.nn_search(x, y)))
    finally:
        kernels.use_backend(prev)
    for a, b in zip(results[0], results[1]):
        assert np.array_equal(a, b), "backends disagree"


@check
def projection_on_axis_and_zbuffer():
    params = projection.ProjectionParams(resolution=64, camera_distance=0.7, densify_radius=0)
    vp = pcgeom.Viewpoint((0, 0, 0.7))
    dm = projection.project_depth(np.array([[0.0, 0, 0], [0, 0, 0.2]]), vp, params)
    assert np.count_nonzero(dm.depth) == 1 and abs(dm.depth[32, 32] - 0.5) < 1e-12


@check
def projection_round_trip_bound():
    params = projection.ProjectionParams(resolution=64, camera_distance=0.7, densify_radius=0)
    cloud = _rng(7).uniform(-0.28, 0.28, (2048, 3))
    for vp in projection.orthogonal_viewpoints(0.7):
        dm = projection.project_depth(cloud, vp, params)
        back = projection.backproject(dm, params)
        rows, cols, depth, ok = projection.pixel_coords(cloud, vp, params)
        vis = cloud[ok][dm.depth[rows, cols] == depth]
        d = pcgeom.nearest_distance_field(back, vis)
        assert d.max() <= params.footprint_bound(), f"round trip error {d.max()}"


@check
def softmax_rows_normalized():
    x = _rng(8).normal(0, 5, (16, 33))
    s = nc.softmax_rows(x)
    _close(s.sum(axis=1), 1.0, 1e-6, "row sums")
    _close(nc.softmax_rows(x + 7.5), s, 1e-12, "shift invariance")


@check
def attention_matches_reference():
    rng = _rng(9)
    x = rng.normal(size=(8, 16))
    w = {f"t.{p}.{s}": rng.normal(size=(16, 16) if s == "weight" else 16) * 0.3
         for p in ("q", "k", "v", "ff.0", "ff.1") for s in ("weight", "bias")}
    got = nc.attend(nc.linear(x, "t.q", w), nc.linear(x, "t.k", w), nc.linear(x, "t.v", w), True)[0]
    want = reference.attention(x.tolist(), x.tolist(), w["t.q.weight"].tolist(), w["t.q.bias"].tolist(),
                               w["t.k.weight"].tolist(), w["t.k.bias"].tolist(),
                               w["t.v.weight"].tolist(), w["t.v.bias"].tolist(), scale=1 / 4)
    _close(got, want, 1e-10, "attention")
    plain = nc.self_attention(x, w, "t", scaled=False)
    _close(nc.ia_self_attention(x, np.zeros_like(x), w, "t"), plain, 1e-12, "h=0 reduction")


@check
def conv_kernels_match_loops():
    rng = _rng(10)
    img = rng.normal(size=(4, 4, 2))
    W, b = rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3)
    _close(nc.conv2d_s2(img, W, b), reference.conv2d_s2(img.tolist(), W.tolist(), b.tolist()), 1e-12, "conv2d")
    g = rng.normal(size=5)
    Wt = {"ct.weight": rng.normal(size=(5, 3, 4)), "ct.bias": rng.normal(size=3)}
    want = reference.conv_transpose1d([g.tolist()], Wt["ct.weight"].tolist(), Wt["ct.bias"].tolist(), 4)
    _close(nc.conv_transpose1d(g, 4, Wt, "ct"), want, 1e-12, "conv transpose")


@check
def weights_round_trip():
    w = nc.init_weights("tiny-test", 3)
    assert w.identical(nc.init_weights("tiny-test", 3))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "w.psw"
        nc.save_weights(w, path)
        assert nc.load_weights(path).identical(w)


@check
def point_feature_permutation_invariant():
    prof = get_profile("tiny-test")
    w = nc.init_weights(prof, 0)
    p = _rng(11).uniform(-0.5, 0.5, (prof.n_input, 3))
    perm = _rng(12).permutation(prof.n_input)
    a = svfnet.encode_points(p, w, prof)
    assert np.array_equal(a, svfnet.encode_points(p[perm], w, prof))


@check
def view_permutation_invariant():
    prof = get_profile("tiny-test")
    w = nc.init_weights(prof, 0)
    rng = _rng(13)
    f_vg, f_p = rng.normal(size=(3, prof.channels)), rng.normal(size=prof.point_dim)
    vps = projection.orthogonal_viewpoints(0.7)
    order = [2, 0, 1]
    a = svfnet.fuse_stage2(f_vg, f_p, vps, w)
    b = svfnet.fuse_stage2(f_vg[order], f_p, [vps[i] for i in order], w)
    _close(a, b, 1e-12, "view permutation")


@check
def gate_properties():
    prof = get_profile("tiny-test")
    w = nc.init_weights(prof, 0)
    view = sdg.shared_view(w, prof, 32, 2, first=True)
    rng = _rng(14)
    fq, fqp = rng.normal(size=(20, 32)), rng.normal(size=(20, 32))
    out, alpha = sdg.path_select(fqp, fqp, fq, None, view)
    assert np.all((alpha > 0) & (alpha < 1))
    _close(out, fqp, 1e-12, "equal paths")


@check
def pipeline_shapes_and_ablations():
    prof = get_profile("tiny-test")
    w = nc.init_weights(prof, 0)
    p = _rng(15).uniform(-0.5, 0.5, (prof.n_input, 3))
    want = prof.output_sizes()
    for flags in [{}] + list(pipeline.VARIANTS.values()):
        tr = pipeline.complete(p, w, prof, Ablation(**flags))
        got = tuple(x.shape[0] for x in (tr.p_c, tr.p0, tr.p1, tr.p2))
        assert got == want, f"{flags}: {got} != {want}"
        assert all(np.isfinite(x).all() for x in (tr.p_c, tr.p0, tr.p1, tr.p2))


@check
def chamfer_family_oracles():
    x, y = _rng(16).random((96, 3)), _rng(17).random((80, 3))
    for v in metrics.VARIANTS:
        assert abs(metrics.chamfer(x, y, v) - reference.chamfer(x.tolist(), y.tolist(), v)) <= 1e-10
        assert abs(metrics.chamfer(x, y, v) - metrics.chamfer(y, x, v)) <= 1e-12
    assert abs(metrics.dcd(x, y) - reference.dcd(x.tolist(), y.tolist(), 1000.0)) <= 1e-10
    assert abs(metrics.f1_score(x, y, 0.05) - reference.f1(x.tolist(), y.tolist(), 0.05)) <= 1e-12
    assert metrics.chamfer(x, x) == 0.0 and metrics.f1_score(x, x) == 1.0 and metrics.dcd(x, x) == 0.0


@check
def chamfer_gradient_vs_finite_differences():
    x, y = _rng(18).random((12, 3)), _rng(19).random((10, 3))
    for v in metrics.VARIANTS:
        g = metrics.chamfer_grad(x, y, v)
        fd = reference.central_difference(lambda p: metrics.chamfer(np.array(p), y, v), x.tolist())
        rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() <= 1e-4, f"{v}: relative error {rel.max():.2e}"


@check
def metrics_rigid_and_scale():
    x, y = _rng(20).random((64, 3)), _rng(21).random((64, 3))
    c, s = math.cos(0.7), math.sin(0.7)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    t = np.array([0.3, -1.2, 2.0])
    for v in metrics.VARIANTS:
        assert abs(metrics.chamfer(x @ R.T + t, y @ R.T + t, v) - metrics.chamfer(x, y, v)) <= 1e-9
    assert abs(metrics.chamfer(3 * x, 3 * y, "eq5") - 3 * metrics.chamfer(x, y, "eq5")) <= 1e-9
    assert abs(metrics.chamfer(3 * x, 3 * y, "l2-squared") - 9 * metrics.chamfer(x, y, "l2-squared")) <= 1e-9


def run(out=print):
    """Run every check; return True when all pass."""
    ok = True
    t_all = time.perf_counter()
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            status, msg = "PASS", ""
        except Exception as exc:  # report and continue
            ok = False
            status, msg = "FAIL", f"  {type(exc).__name__}: {exc}"
        out(f"{status} {fn.__name__} ({time.perf_counter() - t0:.3f}s){msg}")
    out(f"{'all checks passed' if ok else 'FAILURES'}: {len(CHECKS)} checks in {time.perf_counter() - t_all:.2f}s "
        f"[kernel backend: {kernels.active_backend()}]")
    return ok
