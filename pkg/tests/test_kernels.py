import numpy as np
import pytest

from slotmvd import kernels
from slotmvd.kernels import col2im, im2col, median_filter2d


def test_im2col_col2im_roundtrip_properties():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 8, 8))
    for stride, pad in [(1, 1), (2, 1), (1, 0)]:
        cols = im2col(x, 3, 3, stride, pad)
        ho = (8 + 2 * pad - 3) // stride + 1
        assert cols.shape == (2, 3, 3, 3, ho, ho)
        # each input element appears in col2im(ones-scatter) a countable number of times
        counts = col2im(np.ones_like(cols), 8, 8, stride, pad)
        assert counts.min() >= 0
        assert counts.max() <= 9


def test_im2col_matches_direct_gather():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 5, 5))
    cols = im2col(x, 3, 3, 1, 1)
    # direct check at a few positions
    assert cols[0, 1, 1, 1, 2, 3] == x[0, 1, 2, 3]
    assert cols[0, 0, 0, 0, 0, 0] == 0.0  # padded corner
    assert cols[0, 0, 2, 2, 4, 4] == 0.0


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable; fallback is the only path")
def test_numba_and_numpy_paths_identical():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 4, 9, 9))
    for stride, pad in [(1, 1), (2, 1)]:
        a = kernels._im2col_nb(np.ascontiguousarray(x), 3, 3, stride, pad)
        b = kernels._im2col_np(x, 3, 3, stride, pad)
        np.testing.assert_array_equal(a, b)
        ga = kernels._col2im_nb(np.ascontiguousarray(a), 9, 9, stride, pad)
        gb = kernels._col2im_np(b, 9, 9, stride, pad)
        np.testing.assert_array_equal(ga, gb)
    img = rng.standard_normal((12, 12))
    np.testing.assert_array_equal(
        kernels._median2d_nb(np.ascontiguousarray(img), 3), kernels._median2d_np(img, 3)
    )


def test_median_filter_kernel1_is_identity():
    rng = np.random.default_rng(3)
    img = rng.standard_normal((6, 6))
    np.testing.assert_array_equal(median_filter2d(img, 1), img)


def test_median_filter_outlier_replaced_by_neighborhood_median():
    img = np.zeros((5, 5))
    img[2, 2] = 100.0
    out = median_filter2d(img, 3)
    # brute-force median of the 9-neighborhood at the outlier
    neigh = np.sort(img[1:4, 1:4].reshape(-1))
    assert out[2, 2] == neigh[4] == 0.0


def test_median_filter_matches_bruteforce_sort():
    rng = np.random.default_rng(4)
    img = rng.standard_normal((10, 10))
    for k in (3, 5):
        out = median_filter2d(img, k)
        r = k // 2
        pad = np.pad(img, r, mode="edge")
        for y in range(10):
            for x in range(10):
                neigh = np.sort(pad[y : y + k, x : x + k].reshape(-1))
                assert out[y, x] == neigh[(k * k) // 2]


def test_median_filter_preserves_constants_and_shifts():
    img = np.full((7, 7), 0.3)
    np.testing.assert_array_equal(median_filter2d(img, 3), img)
    rng = np.random.default_rng(5)
    img = rng.standard_normal((8, 8))
    np.testing.assert_allclose(
        median_filter2d(img + 1.5, 3), median_filter2d(img, 3) + 1.5, atol=1e-12
    )


def test_median_filter_rejects_even_kernel():
    with pytest.raises(ValueError):
        median_filter2d(np.zeros((4, 4)), 2)
