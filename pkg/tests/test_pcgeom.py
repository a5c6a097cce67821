import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pccomplete import pcgeom, reference
from pccomplete.errors import DegenerateInputError, FormatError, InvalidArgumentError
from pccomplete.pcgeom import Viewpoint

coords = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def clouds(min_n=1, max_n=40):
    return st.integers(min_n, max_n).flatmap(lambda n: arrays(np.float64, (n, 3), elements=coords))


# --- knn -------------------------------------------------------------------


def test_knn_forced_order(backend):
    q = [[0.0, 0, 0]]
    r = [[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]]
    assert pcgeom.knn(q, r, 2).tolist() == [[0, 1]]


def test_knn_self_is_nearest(backend, rng):
    x = rng.random((50, 3))
    assert pcgeom.knn(x, x, 1)[:, 0].tolist() == list(range(50))


def test_knn_self_with_duplicates_takes_lowest_index(backend):
    x = np.array([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
    assert pcgeom.knn(x, x, 1)[:, 0].tolist() == [0, 0, 2]


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_oracle(backend, seed):
    x = np.random.default_rng(seed).random((256, 3))
    assert pcgeom.knn(x, x, 8).tolist() == reference.knn(x.tolist(), x.tolist(), 8)


def test_knn_tie_breaks_on_index(backend):
    # all reference points equidistant from the query
    r = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [-1.0, 0, 0]])
    assert pcgeom.knn([[0.0, 0, 0]], r, 4).tolist() == [[0, 1, 2, 3]]


def test_knn_k_too_large():
    with pytest.raises(InvalidArgumentError):
        pcgeom.knn([[0.0, 0, 0]], [[1.0, 0, 0]], 2)


@settings(max_examples=40, deadline=None)
@given(clouds(2, 30), st.data())
def test_knn_reference_permutation_gives_same_point_set(x, data):
    k = data.draw(st.integers(1, x.shape[0]))
    perm = np.array(data.draw(st.permutations(range(x.shape[0]))))
    q = np.zeros((1, 3))
    d = np.sum(x * x, axis=1)
    # only meaningful without distance ties
    if len(np.unique(d)) != len(d):
        return
    a = pcgeom.knn(q, x, k)[0]
    b = pcgeom.knn(q, x[perm], k)[0]
    assert sorted(map(tuple, x[a])) == sorted(map(tuple, x[perm][b]))


# --- fps -------------------------------------------------------------------


def test_fps_square_corners(backend):
    sq = [[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]]
    assert pcgeom.fps(sq, 2).tolist() == [0, 2]


def test_fps_exhaustive_is_permutation(backend, rng):
    x = rng.random((40, 3))
    assert sorted(pcgeom.fps(x, 40).tolist()) == list(range(40))


def test_fps_exhaustive_with_duplicates(backend):
    x = np.zeros((5, 3))
    assert sorted(pcgeom.fps(x, 5).tolist()) == list(range(5))


@pytest.mark.parametrize("seed", range(3))
def test_fps_matches_greedy_oracle(backend, seed):
    x = np.random.default_rng(seed).random((512, 3))
    assert pcgeom.fps(x, 64).tolist() == reference.fps(x.tolist(), 64)


def test_fps_bounds():
    with pytest.raises(InvalidArgumentError):
        pcgeom.fps(np.zeros((3, 3)), 4)
    with pytest.raises(InvalidArgumentError):
        pcgeom.fps(np.zeros((3, 3)), 0)


@settings(max_examples=40, deadline=None)
@given(clouds(2, 40), st.data())
def test_fps_prefix_property(x, data):
    m = data.draw(st.integers(1, x.shape[0] - 1))
    assert pcgeom.fps(x, m).tolist() == pcgeom.fps(x, m + 1)[:m].tolist()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 60), st.data())
def test_fps_set_invariant_under_permutations_fixing_seed(seed, n, data):
    # the seed point is index 0, so only permutations that keep it first are symmetries
    x = np.random.default_rng(seed).random((n, 3))
    m = data.draw(st.integers(1, n))
    tail = data.draw(st.permutations(range(1, n)))
    perm = np.array([0, *tail])
    a = {tuple(p) for p in x[pcgeom.fps(x, m)]}
    b = {tuple(p) for p in x[perm][pcgeom.fps(x[perm], m)]}
    assert a == b


# --- viewpoint crop --------------------------------------------------------


def test_crop_collinear():
    gt = [[1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0], [4.0, 0, 0]]
    vp = Viewpoint((0, 0, 0), (1, 0, 0))
    partial, missing = pcgeom.viewpoint_crop(gt, vp, 2, 2)
    assert sorted(partial[:, 0].tolist()) == [1.0, 2.0]
    assert sorted(missing[:, 0].tolist()) == [3.0, 4.0]


@pytest.mark.parametrize("n_missing", [2048, 4096, 6144])
def test_crop_protocol_sizes(n_missing, rng):
    gt = rng.uniform(-1, 1, (8192, 3))
    for vp in pcgeom.fixed_test_viewpoints()[:2]:
        partial, missing = pcgeom.viewpoint_crop(gt, vp, n_missing, 2048)
        assert partial.shape == (2048, 3)
        assert missing.shape == (n_missing, 3)


def test_crop_removed_set_is_top_of_sort(backend):
    gt = np.random.default_rng(5).uniform(-1, 1, (1024, 3))
    vp = pcgeom.fixed_test_viewpoints()[6]
    _, missing = pcgeom.viewpoint_crop(gt, vp, 256, 512)
    d = [reference._sq(p, vp.position) for p in gt.tolist()]
    top = sorted(range(1024), key=lambda i: (d[i], i))[-256:]
    assert sorted(map(tuple, missing)) == sorted(map(tuple, gt[top]))


def test_crop_ties_keep_lower_index():
    # four points at the same distance; removing two drops the higher indices
    gt = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [-1.0, 0, 0], [0.1, 0, 0]])
    partial, missing = pcgeom.viewpoint_crop(gt, Viewpoint((0, 0, 0), (1, 0, 0)), 2, 3)
    assert missing.tolist() == [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]]


def test_crop_partial_is_fps_of_survivors():
    gt = np.random.default_rng(8).random((300, 3))
    vp = Viewpoint((2.0, 0, 0))
    partial, _ = pcgeom.viewpoint_crop(gt, vp, 100, 50)
    d = np.sum((gt - vp.position) ** 2, axis=1)
    kept = gt[np.sort(np.argsort(d, kind="stable")[:200])]
    assert np.array_equal(partial, kept[reference.fps(kept.tolist(), 50)])


def test_crop_preconditions():
    gt = np.zeros((10, 3)) + np.arange(10)[:, None]
    vp = Viewpoint((-1, 0, 0))
    with pytest.raises(InvalidArgumentError):
        pcgeom.viewpoint_crop(gt, vp, 10, 1)
    with pytest.raises(InvalidArgumentError):
        pcgeom.viewpoint_crop(gt, vp, 5, 6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 80), st.data())
def test_crop_sizes_exact(seed, n, data):
    gt = np.random.default_rng(seed).normal(size=(n, 3))
    n_missing = data.draw(st.integers(1, n - 1))
    n_keep = data.draw(st.integers(1, n - n_missing))
    vp = pcgeom.fixed_test_viewpoints()[data.draw(st.integers(0, 7))]
    partial, missing = pcgeom.viewpoint_crop(gt, vp, n_missing, n_keep)
    assert partial.shape[0] == n_keep and missing.shape[0] == n_missing


def test_fixed_viewpoints():
    vps = pcgeom.fixed_test_viewpoints()
    assert len(vps) == 8
    assert all(set(vp.position) <= {-1.0, 1.0} for vp in vps)
    assert vps[0].position == (-1.0, -1.0, -1.0)
    assert all(vp.look_at == (0.0, 0.0, 0.0) for vp in vps)


def test_viewpoint_rejects_coincident_target():
    with pytest.raises(InvalidArgumentError):
        Viewpoint((1, 2, 3), (1, 2, 3))


# --- merge and resample ----------------------------------------------------


def test_merge_same_cloud_is_subset(rng):
    x = rng.random((512, 3))
    out = pcgeom.merge_resample(x, x, 512)
    assert {tuple(p) for p in out} <= {tuple(p) for p in x}


def test_merge_disjoint_keeps_all(rng):
    a, b = rng.random((300, 3)), rng.random((300, 3)) + 2.0
    out = pcgeom.merge_resample(a, b, 600)
    assert sorted(map(tuple, out)) == sorted(map(tuple, np.vstack([a, b])))


def test_merge_starts_from_coarse(rng):
    a, b = rng.random((10, 3)), rng.random((10, 3))
    assert np.array_equal(pcgeom.merge_resample(a, b, 5)[0], a[0])


def test_merge_too_small():
    with pytest.raises(InvalidArgumentError):
        pcgeom.merge_resample(np.zeros((2, 3)), np.ones((2, 3)), 5)


# --- distance field --------------------------------------------------------


def test_distance_field_examples(backend):
    assert pcgeom.nearest_distance_field([[0.0, 0, 0]], [[0, 0, 3.0], [0, 4.0, 0]]).tolist() == [3.0]
    x = np.random.default_rng(2).random((30, 3))
    assert not pcgeom.nearest_distance_field(x[:10], x).any()


def test_distance_field_oracle(backend):
    q, a = np.random.default_rng(3).random((256, 3)), np.random.default_rng(4).random((256, 3))
    want = [d for d, _ in reference.nearest(q.tolist(), a.tolist())]
    np.testing.assert_allclose(pcgeom.nearest_distance_field(q, a), want, rtol=0, atol=1e-12)


def test_distance_field_empty_anchor():
    with pytest.raises(InvalidArgumentError):
        pcgeom.nearest_distance_field([[0.0, 0, 0]], np.zeros((0, 3)))


@settings(max_examples=40, deadline=None)
@given(clouds(1, 40))
def test_distance_field_self_is_zero(x):
    assert not pcgeom.nearest_distance_field(x, x).any()


# --- normalize -------------------------------------------------------------


def test_normalize_cube_corners():
    import itertools

    corners = np.array(list(itertools.product((-2.0, 2.0), repeat=3)))
    out, (center, scale) = pcgeom.normalize(corners, 0.5)
    assert np.array_equal(np.abs(out), np.full((8, 3), 0.5))
    assert scale == 0.25 and not center.any()


def test_normalize_idempotent(rng):
    x, _ = pcgeom.normalize(rng.normal(size=(100, 3)), 1.0)
    y, (center, scale) = pcgeom.normalize(x, 1.0)
    np.testing.assert_allclose(center, 0.0, atol=1e-15)
    assert abs(scale - 1.0) < 1e-15
    assert np.max(np.abs(y)) == pytest.approx(1.0)


def test_normalize_inverse(rng):
    x = rng.normal(size=(50, 3)) * 7 + 3
    y, (center, scale) = pcgeom.normalize(x, 0.5)
    np.testing.assert_allclose(y / scale + center, x, atol=1e-12)
    assert np.max(np.abs(y)) == pytest.approx(0.5)


def test_normalize_degenerate():
    with pytest.raises(DegenerateInputError):
        pcgeom.normalize(np.ones((4, 3)), 0.5)


# --- validation and files --------------------------------------------------


def test_as_cloud_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        pcgeom.as_cloud(np.zeros((3, 2)))
    with pytest.raises(InvalidArgumentError):
        pcgeom.as_cloud([[0.0, np.nan, 0.0]])
    with pytest.raises(InvalidArgumentError):
        pcgeom.as_cloud(np.zeros((0, 3)))


def test_pcb_round_trip_bitwise(tmp_path, rng):
    x = rng.normal(size=(100, 3)).astype(np.float32).astype(np.float64)
    pcgeom.write_pcb(tmp_path / "a.pcb", x)
    y = pcgeom.read_pcb(tmp_path / "a.pcb")
    assert y.tobytes() == x.tobytes()
    pcgeom.write_pcb(tmp_path / "b.pcb", y)
    assert (tmp_path / "a.pcb").read_bytes() == (tmp_path / "b.pcb").read_bytes()


def test_pcb_layout(tmp_path):
    pcgeom.write_pcb(tmp_path / "a.pcb", [[1.0, 2.0, 3.0]])
    raw = (tmp_path / "a.pcb").read_bytes()
    assert raw == b"PCB1" + (1).to_bytes(4, "little") + np.array([1, 2, 3], "<f4").tobytes()


def test_pcb_corruption(tmp_path):
    p = tmp_path / "a.pcb"
    pcgeom.write_pcb(p, np.zeros((4, 3)))
    raw = p.read_bytes()
    p.write_bytes(b"XCB1" + raw[4:])
    with pytest.raises(FormatError) as exc:
        pcgeom.read_pcb(p)
    assert exc.value.offset == 0
    p.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        pcgeom.read_pcb(p)


def test_xyz_round_trip(tmp_path, rng):
    x = rng.normal(size=(20, 3))
    pcgeom.save_cloud(tmp_path / "a.xyz", x)
    np.testing.assert_allclose(pcgeom.load_cloud(tmp_path / "a.xyz"), x, rtol=1e-8)


def test_xyz_rejects_garbage(tmp_path):
    (tmp_path / "a.xyz").write_text("1 2\n")
    with pytest.raises(InvalidArgumentError):
        pcgeom.load_cloud(tmp_path / "a.xyz")
