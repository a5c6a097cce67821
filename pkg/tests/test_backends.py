import numpy as np
import pytest

from pccomplete import kernels, pipeline

both = pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled backend not built")


def _each_backend(fn):
    prev = kernels.active_backend()
    out = {}
    try:
        for name in kernels.available_backends():
            kernels.use_backend(name)
            out[name] = fn()
    finally:
        kernels.use_backend(prev)
    return out


def _same(results):
    vals = list(results.values())
    for other in vals[1:]:
        if isinstance(other, tuple):
            assert all(np.array_equal(a, b) for a, b in zip(vals[0], other))
        else:
            assert np.array_equal(vals[0], other)


def test_python_backend_always_present():
    assert "python" in kernels.available_backends()
    assert kernels.active_backend() in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@both
@pytest.mark.parametrize("dim", [3, 64])
def test_knn_and_nn_identical(dim):
    rng = np.random.default_rng(dim)
    q, r = rng.normal(size=(300, dim)), rng.normal(size=(257, dim))
    _same(_each_backend(lambda: kernels.knn(q, r, 9)))
    _same(_each_backend(lambda: kernels.nn_search(q, r)))
    _same(_each_backend(lambda: kernels.sqdist(q[:20], r[:30])))


@both
def test_knn_ties_identical():
    grid = np.stack(np.meshgrid(*[np.arange(4.0)] * 3), -1).reshape(-1, 3)
    _same(_each_backend(lambda: kernels.knn(grid, grid, 7)))


@both
def test_fps_identical_with_duplicates():
    rng = np.random.default_rng(1)
    x = np.repeat(rng.random((50, 3)), 3, axis=0)
    _same(_each_backend(lambda: kernels.fps(x, 150)))


@both
def test_splat_identical():
    rng = np.random.default_rng(2)
    rows, cols = rng.integers(0, 64, 500), rng.integers(0, 64, 500)
    depth = rng.random(500)
    for radius in (0, 1, 3):
        _same(_each_backend(lambda: kernels.splat_min(rows, cols, depth, 64, 64, radius)))


@both
def test_pipeline_identical(tiny, tiny_weights):
    p = np.random.default_rng(3).uniform(-0.5, 0.5, (tiny.n_input, 3))
    _same(_each_backend(lambda: pipeline.complete(p, tiny_weights, tiny).p2))
