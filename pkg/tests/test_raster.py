import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wbcinterp import raster
from wbcinterp.raster import ColorSpace, ColorSpaceError, RasterImage, SegmentationFailure

gray_arrays = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                     elements=st.floats(0, 255, allow_nan=False))
rgb_arrays = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3)),
                    elements=st.integers(0, 255).map(float))
bin_arrays = arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12)))


def test_raster_plane_count_checked():
    with pytest.raises(ColorSpaceError):
        RasterImage(np.zeros((2, 2, 3)), ColorSpace.CMYK)
    with pytest.raises(ValueError):
        RasterImage(np.full((2, 2), 0.5), ColorSpace.BINARY)


def test_raster_is_immutable():
    img = RasterImage.gray(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.planes[0, 0, 0] = 1


class TestSplitChannels:
    def test_single_pixel(self):
        r, g, b = raster.split_channels(RasterImage.rgb([[[10, 20, 30]]]))
        assert (r.data[0, 0], g.data[0, 0], b.data[0, 0]) == (10, 20, 30)

    def test_black(self):
        assert all((p.data == 0).all() for p in raster.split_channels(RasterImage.rgb(np.zeros((2, 2, 3)))))

    @given(rgb_arrays)
    def test_recombine_is_identity(self, arr):
        img = RasterImage.rgb(arr)
        assert raster.merge_channels(*raster.split_channels(img)) == img

    def test_rejects_gray(self):
        with pytest.raises(ColorSpaceError):
            raster.split_channels(RasterImage.gray(np.zeros((2, 2))))


class TestBlackToYellow:
    def test_black_pixel(self):
        out = raster.black_to_yellow(RasterImage.rgb([[[0, 0, 0]]]))
        assert out.planes[0, 0].tolist() == [255, 255, 0]

    def test_near_black_untouched(self):
        out = raster.black_to_yellow(RasterImage.rgb([[[0, 0, 1]]]))
        assert out.planes[0, 0].tolist() == [0, 0, 1]

    @given(rgb_arrays)
    def test_idempotent(self, arr):
        once = raster.black_to_yellow(RasterImage.rgb(arr))
        assert raster.black_to_yellow(once) == once


class TestCmyk:
    @pytest.mark.parametrize(
        "rgb, cmyk",
        [((255, 255, 0), (0, 0, 255, 0)), ((0, 0, 0), (0, 0, 0, 255)), ((255, 255, 255), (0, 0, 0, 0))],
    )
    def test_reference_colors(self, rgb, cmyk):
        out = raster.rgb_to_cmyk(RasterImage.rgb([[rgb]]))
        np.testing.assert_allclose(out.planes[0, 0], cmyk, atol=1e-9)

    def test_matches_per_pixel_formula(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, (6, 7, 3)).astype(float)
        out = raster.rgb_to_cmyk(RasterImage.rgb(arr)).planes
        for i in range(6):
            for j in range(7):
                r, g, b = arr[i, j] / 255
                k = 1 - max(r, g, b)
                exp = [0, 0, 0] if k == 1 else [(1 - r - k) / (1 - k), (1 - g - k) / (1 - k), (1 - b - k) / (1 - k)]
                np.testing.assert_allclose(out[i, j], np.array(exp + [k]) * 255, atol=1e-9)

    @given(rgb_arrays)
    def test_inverse_round_trip(self, arr):
        img = RasterImage.rgb(arr)
        back = raster.cmyk_to_rgb(raster.rgb_to_cmyk(img))
        assert np.abs(back.planes - img.planes).max() <= 1.0


class TestLocalMax:
    def test_window_one_is_identity(self):
        img = RasterImage.gray(np.arange(20.0).reshape(4, 5))
        assert raster.local_max_filter(img, 1) == img

    def test_center_spike_fills_window(self):
        a = np.zeros((5, 5))
        a[2, 2] = 255
        out = raster.local_max_filter(RasterImage.gray(a), 5)
        assert (out.data == 255).all()

    def test_constant(self):
        img = RasterImage.gray(np.full((6, 6), 7.0))
        assert raster.local_max_filter(img, 5) == img

    @pytest.mark.parametrize("w", [0, 2, -1, 4])
    def test_bad_window(self, w):
        with pytest.raises(ValueError):
            raster.local_max_filter(RasterImage.gray(np.zeros((3, 3))), w)

    @given(gray_arrays, st.sampled_from([1, 3, 5]))
    def test_dominates_input_and_idempotent_shape(self, arr, w):
        img = RasterImage.gray(arr)
        out = raster.local_max_filter(img, w)
        assert out.shape == img.shape
        assert (out.data >= img.data).all()

    def test_edge_replication_matches_brute_force(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 255, (7, 9))
        out = raster.local_max_filter(RasterImage.gray(a), 5).data
        for i in range(7):
            for j in range(9):
                rows = np.clip(np.arange(i - 2, i + 3), 0, 6)
                cols = np.clip(np.arange(j - 2, j + 3), 0, 8)
                assert out[i, j] == a[np.ix_(rows, cols)].max()


class TestContrastStretch:
    def test_full_range_gradient_nearly_unchanged(self):
        a = np.tile(np.arange(256.0), (4, 1))
        out = raster.contrast_stretch(RasterImage.gray(a)).data
        mid = (a > 10) & (a < 245)
        assert np.abs(out[mid] - a[mid]).max() < 11

    def test_constant_gives_zeros(self):
        out = raster.contrast_stretch(RasterImage.gray(np.full((4, 4), 9.0)))
        assert (out.data == 0).all()

    def test_two_levels(self):
        # 50 pixels at 50, 50 at 150: linear-interpolated 2nd and 98th
        # percentiles are the two levels themselves (positions 1.98 and 97.02)
        a = np.array([50.0] * 50 + [150.0] * 50).reshape(10, 10)
        out = raster.contrast_stretch(RasterImage.gray(a)).data
        assert set(np.unique(out)) == {0.0, 255.0}
        assert (out[a == 50] == 0).all() and (out[a == 150] == 255).all()

    def test_bad_percentiles(self):
        with pytest.raises(ValueError):
            raster.contrast_stretch(RasterImage.gray(np.zeros((2, 2))), 98, 2)

    @given(gray_arrays)
    def test_output_range(self, arr):
        out = raster.contrast_stretch(RasterImage.gray(arr)).data
        assert out.min() >= 0 and out.max() <= 255


class TestEqualize:
    def test_constant(self):
        out = raster.equalize_histogram(RasterImage.gray(np.full((4, 4), 80.0))).data
        assert len(np.unique(out)) == 1

    def test_two_levels_follow_cdf(self):
        a = np.array([0.0] * 12 + [255.0] * 4).reshape(4, 4)
        out = raster.equalize_histogram(RasterImage.gray(a)).data
        # CDF at level 0 is 12/16, at 255 it is 1
        assert np.allclose(out[a == 0], 0.75 * 255)
        assert np.allclose(out[a == 255], 255)
        assert out[a == 0].max() < out[a == 255].min()

    @pytest.mark.parametrize("seed", range(5))
    def test_flattens_coarse_histogram(self, seed):
        # per-level counts cannot get flatter (equalisation only merges levels),
        # so flatness is judged on 16 coarse bins
        a = np.random.default_rng(seed).integers(0, 256, (64, 64)).astype(float)
        out = raster.equalize_histogram(RasterImage.gray(a)).data
        coarse = lambda x: np.histogram(x, bins=16, range=(0, 256))[0].var()
        assert coarse(out) <= coarse(a)

    @given(gray_arrays)
    def test_monotone(self, arr):
        out = raster.equalize_histogram(RasterImage.gray(arr)).data
        order = np.argsort(np.floor(arr).ravel(), kind="stable")
        assert (np.diff(out.ravel()[order]) >= -1e-9).all()


class TestCombine:
    def test_arithmetic(self):
        s = RasterImage.gray([[100.0, 0.0]])
        e = RasterImage.gray([[55.0, 30.0]])
        assert raster.combine_stretch_equalize(s, e).data.tolist() == [[255.0, 30.0]]

    def test_zero_parts(self):
        x = RasterImage.gray(np.arange(6.0).reshape(2, 3))
        z = RasterImage.gray(np.zeros((2, 3)))
        assert raster.combine_stretch_equalize(z, x) == x
        assert np.array_equal(raster.combine_stretch_equalize(x, z).data, 2 * x.data)

    def test_not_clipped(self):
        s = RasterImage.gray([[255.0]])
        assert raster.combine_stretch_equalize(s, s).data[0, 0] == 765.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            raster.combine_stretch_equalize(RasterImage.gray(np.zeros((2, 2))), RasterImage.gray(np.zeros((2, 3))))


class TestThreshold:
    def test_constant_all_ones(self):
        out = raster.threshold_below(RasterImage.gray(np.full((3, 3), 4.0)))
        assert out.colorspace is ColorSpace.BINARY and (out.data == 1).all()

    def test_single_minimum(self):
        a = np.full((3, 3), 100.0)
        a[1, 2] = 0
        out = raster.threshold_below(RasterImage.gray(a)).data
        assert out.sum() == 1 and out[1, 2] == 1

    def test_strict_inequality(self):
        out = raster.threshold_below(RasterImage.gray([[5.0, 5.005, 100.0, 5.01]]), 0.01).data
        assert out.tolist() == [[1, 1, 0, 0]]

    @given(gray_arrays)
    def test_binary(self, arr):
        out = raster.threshold_below(RasterImage.gray(arr))
        assert set(np.unique(out.data)) <= {0.0, 1.0} and out.data.sum() >= 1


class TestComponents:
    def test_empty(self):
        assert raster.connected_components(RasterImage.binary(np.zeros((4, 4)))).region_count == 0

    def test_two_blocks(self):
        m = np.zeros((8, 8))
        m[0:2, 0:2] = 1
        m[5:7, 4:6] = 1
        reg = raster.connected_components(RasterImage.binary(m))
        assert reg.region_count == 2
        assert sorted(reg.centroids) == [(0.5, 0.5), (5.5, 4.5)]

    def test_diagonal_connectivity(self):
        m = RasterImage.binary(np.eye(3))
        assert raster.connected_components(m, 8).region_count == 1
        assert raster.connected_components(m, 4).region_count == 3

    @given(bin_arrays, st.sampled_from([4, 8]))
    def test_labels_partition_foreground(self, arr, conn):
        reg = raster.connected_components(RasterImage.binary(arr), conn)
        assert sum(reg.sizes) == arr.sum()
        assert ((reg.label_grid > 0) == arr).all()
        assert set(np.unique(reg.label_grid[arr])) == set(range(1, reg.region_count + 1))
        h, w = arr.shape
        assert all(0 <= r < h and 0 <= c < w for r, c in reg.centroids)


class TestSelectCenter:
    def _regions(self, blocks, size=64):
        m = np.zeros((size, size))
        for r, c in blocks:
            m[r : r + 2, c : c + 2] = 1
        return raster.connected_components(RasterImage.binary(m))

    def test_single(self):
        reg = self._regions([(5, 5)])
        assert raster.select_center_object(reg, (31.5, 31.5)).data.sum() == 4

    def test_nearer_wins(self):
        reg = self._regions([(2, 2), (31, 33)])
        out = raster.select_center_object(reg, (31.5, 31.5)).data
        assert out[31, 33] == 1 and out[2, 2] == 0

    def test_tie_goes_to_lowest_label(self):
        reg = self._regions([(10, 30), (50, 30)])
        center = ((10.5 + 50.5) / 2, 30.5)
        out = raster.select_center_object(reg, center).data
        assert out[10, 30] == 1 and out[50, 30] == 0

    def test_no_regions(self):
        with pytest.raises(SegmentationFailure):
            raster.select_center_object(raster.connected_components(RasterImage.binary(np.zeros((3, 3)))), (1, 1))


class TestGray:
    @pytest.mark.parametrize("rgb, y", [((255, 255, 255), 255), ((0, 0, 0), 0), ((255, 0, 0), 76)])
    def test_luma(self, rgb, y):
        assert raster.rgb_to_gray(RasterImage.rgb([[rgb]])).data[0, 0] == y


class TestDilate:
    def test_single_pixel(self):
        m = np.zeros((5, 5))
        m[2, 2] = 1
        out = raster.dilate(RasterImage.binary(m)).data
        assert out.sum() == 9 and out[1:4, 1:4].all()

    def test_saturated_and_empty(self):
        full = RasterImage.binary(np.ones((4, 4)))
        empty = RasterImage.binary(np.zeros((4, 4)))
        assert raster.dilate(full) == full
        assert raster.dilate(empty) == empty

    @given(bin_arrays)
    def test_shape_and_superset(self, arr):
        out = raster.dilate(RasterImage.binary(arr)).data
        assert out.shape == arr.shape and (out >= arr).all()
