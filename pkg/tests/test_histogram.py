import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosscc.errors import DomainError
from crosscc.histogram import (
    CFE_SPEC,
    QUERY_SPEC,
    HistogramSpec,
    RawImage,
    build_histogram,
    edge_image,
    rgb_to_uv,
    uv_to_rgb,
)


def reference_histogram(image: RawImage, spec: HistogramSpec):
    """Naive per-pixel loop used as the binning oracle (pre-normalization)."""
    data = np.zeros((spec.bins, spec.bins))
    for i in range(image.height):
        for j in range(image.width):
            px = image.pixels[i, j]
            if np.any(px <= 0) or np.any(px >= 0.98 * image.saturation_level):
                continue
            u = np.log(px[1] / px[0])
            v = np.log(px[1] / px[2])
            iu = min(max(int(np.floor((u - spec.u_min) / spec.eps_u)), 0), spec.bins - 1)
            iv = min(max(int(np.floor((v - spec.v_min) / spec.eps_v)), 0), spec.bins - 1)
            data[iu, iv] += np.sqrt(np.sum(px * px))
    return data


class TestUvConversion:
    def test_neutral_gray(self):
        assert rgb_to_uv((1, 1, 1)) == (0.0, 0.0)

    def test_analytic_values(self):
        u, v = rgb_to_uv((0.5, 1, 2))
        assert u == pytest.approx(np.log(2), abs=1e-15)
        assert v == pytest.approx(-np.log(2), abs=1e-15)
        u, v = rgb_to_uv((2, 1, 1))
        assert u == pytest.approx(-np.log(2), abs=1e-15)
        assert v == 0.0

    def test_nonpositive_channel_rejected(self):
        for c in ((0, 1, 1), (1, -2, 1), (1, 1, 0)):
            with pytest.raises(DomainError):
                rgb_to_uv(c)

    def test_uv_to_rgb_neutral(self):
        assert np.array_equal(uv_to_rgb((0.0, 0.0)), [1.0, 1.0, 1.0])

    def test_uv_to_rgb_analytic(self):
        rgb = uv_to_rgb((np.log(2), -np.log(2)))
        assert rgb == pytest.approx([0.5, 1.0, 2.0], rel=1e-15)

    def test_round_trip_thousand_points(self, rng):
        uv = rng.uniform(-3, 3, size=(1000, 2))
        for u, v in uv:
            ru, rv = rgb_to_uv(uv_to_rgb((u, v)))
            assert abs(ru - u) < 1e-12 and abs(rv - v) < 1e-12

    @given(st.floats(-5, 5), st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, u, v):
        ru, rv = rgb_to_uv(uv_to_rgb((u, v)))
        assert abs(ru - u) < 1e-12 and abs(rv - v) < 1e-12


class TestHistogramSpec:
    def test_bin_width(self):
        assert QUERY_SPEC.eps_u == pytest.approx(5.7 / 64)
        assert CFE_SPEC.eps_u == pytest.approx(2.0 / 64)

    def test_floor_binning_on_boundaries(self):
        spec = HistogramSpec(bins=8, u_min=0.0, u_max=8.0, v_min=0.0, v_max=8.0)
        # every exact boundary joins the higher (containing) bin
        for k in range(8):
            iu, iv = spec.bin_index(float(k), float(k))
            assert iu == k and iv == k
        assert spec.bin_index(8.0, 8.0) == (7, 7)  # clamped top edge
        assert spec.bin_index(-3.0, 11.0) == (0, 7)

    def test_degenerate_spec_rejected(self):
        with pytest.raises(DomainError):
            HistogramSpec(bins=0)
        with pytest.raises(DomainError):
            HistogramSpec(bins=4, u_min=1.0, u_max=1.0)


class TestBuildHistogram:
    def test_single_neutral_pixel(self):
        img = RawImage(pixels=np.ones((1, 1, 3)), saturation_level=10)
        h = build_histogram(img, QUERY_SPEC)
        iu, iv = QUERY_SPEC.bin_index(0.0, 0.0)
        assert h.data[iu, iv] == 1.0
        assert h.data.sum() == 1.0
        assert not h.empty

    def test_two_pixel_weight_ratio(self):
        # norms sqrt(3) and 2*sqrt(3): one-third / two-thirds after normalizing
        px = np.array([[[1, 1, 1], [2, 2, 2]]], dtype=float)
        img = RawImage(pixels=px, saturation_level=100)
        h = build_histogram(img, QUERY_SPEC)
        iu, iv = QUERY_SPEC.bin_index(0.0, 0.0)
        assert h.data[iu, iv] == pytest.approx(1.0)
        pre = reference_histogram(img, QUERY_SPEC)
        assert pre[iu, iv] == pytest.approx(np.sqrt(3) + 2 * np.sqrt(3))

    def test_all_saturated_flagged_empty(self):
        img = RawImage(pixels=np.full((4, 4, 3), 99.0), saturation_level=100)
        h = build_histogram(img, QUERY_SPEC)
        assert h.empty
        assert np.all(h.data == 0)

    def test_zero_pixels_flagged_empty(self):
        img = RawImage(pixels=np.zeros((4, 4, 3)), saturation_level=1)
        assert build_histogram(img, QUERY_SPEC).empty

    def test_matches_reference_loop_exactly(self, rng):
        for _ in range(5):
            px = rng.uniform(0.0, 1.2, size=(16, 16, 3))
            img = RawImage(pixels=px, saturation_level=1.0)
            h = build_histogram(img, QUERY_SPEC)
            ref = reference_histogram(img, QUERY_SPEC)
            total = ref.sum()
            assert np.array_equal(h.data, ref / total)

    def test_mass_conservation_pre_normalization(self, rng):
        px = rng.uniform(0.01, 0.9, size=(12, 12, 3))
        img = RawImage(pixels=px, saturation_level=1.0)
        ref = reference_histogram(img, QUERY_SPEC)
        norms = np.sqrt((px ** 2).sum(axis=2))
        assert ref.sum() == pytest.approx(norms.sum(), rel=1e-12)

    def test_exposure_invariance_power_of_two_bit_exact(self, rng):
        # power-of-two scaling is exact in floats, so bit-identity must hold
        px = rng.uniform(0.01, 0.9, size=(16, 16, 3))
        a = build_histogram(RawImage(px, saturation_level=10), QUERY_SPEC)
        b = build_histogram(RawImage(px * 4.0, saturation_level=40), QUERY_SPEC)
        assert np.array_equal(a.data, b.data)

    def test_exposure_invariance_general_scale(self, rng):
        px = rng.uniform(0.01, 0.9, size=(16, 16, 3))
        a = build_histogram(RawImage(px, saturation_level=10), QUERY_SPEC)
        b = build_histogram(RawImage(px * 3.0, saturation_level=30), QUERY_SPEC)
        assert np.abs(a.data - b.data).max() < 1e-12


class TestEdgeImage:
    def test_constant_image_zero_edges(self):
        img = RawImage(pixels=np.full((5, 7, 3), 0.3), saturation_level=1)
        assert np.all(edge_image(img).pixels == 0)

    def test_vertical_step(self):
        # columns 0..2 at value a, columns 3.. at a+h: forward difference puts
        # the whole step into column 2, every row, one channel
        a, h = 0.2, 0.5
        px = np.full((4, 6, 3), a)
        px[:, 3:, 0] = a + h
        e = edge_image(RawImage(pixels=px, saturation_level=2)).pixels
        expect = np.zeros_like(px)
        expect[:, 2, 0] = h
        assert np.allclose(e, expect)

    def test_nonnegative(self, rng):
        px = rng.uniform(0, 1, size=(9, 9, 3))
        assert np.all(edge_image(RawImage(px, saturation_level=2)).pixels >= 0)

    def test_too_small_rejected(self):
        img = RawImage(pixels=np.ones((1, 5, 3)), saturation_level=1)
        with pytest.raises(DomainError):
            edge_image(img)

    def test_keeps_saturation_level(self):
        img = RawImage(pixels=np.ones((3, 3, 3)), saturation_level=7.5)
        assert edge_image(img).saturation_level == 7.5


class TestRawImageValidation:
    def test_rejects_negative_pixels(self):
        with pytest.raises(DomainError):
            RawImage(pixels=np.full((2, 2, 3), -1.0), saturation_level=1)

    def test_rejects_nonfinite(self):
        px = np.ones((2, 2, 3))
        px[0, 0, 0] = np.nan
        with pytest.raises(DomainError):
            RawImage(pixels=px, saturation_level=1)

    def test_rejects_bad_shape(self):
        with pytest.raises(DomainError):
            RawImage(pixels=np.ones((2, 2, 4)), saturation_level=1)

    def test_rejects_bad_saturation(self):
        with pytest.raises(DomainError):
            RawImage(pixels=np.ones((2, 2, 3)), saturation_level=0.0)
