import colorsys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beansplit.errors import MalformedHeader, TruncatedPayload, UnknownClassCode
from beansplit.imagecore import (
    LabelMask,
    PixelClass,
    RgbImage,
    ScoreMap,
    decode_image,
    encode_image,
    hsv_features,
    rgb_to_hsv,
)

RED_GREEN = b"P6 2 1 255\n" + bytes([255, 0, 0, 0, 255, 0])


def test_decode_ppm_red_then_green():
    img = decode_image(RED_GREEN)
    assert isinstance(img, RgbImage)
    assert (img.width, img.height) == (2, 1)
    assert img.pixels[0, 0].tolist() == [255, 0, 0]
    assert img.pixels[0, 1].tolist() == [0, 255, 0]


def test_decode_pgm_seed_coat():
    mask = decode_image(b"P5 1 1 255\n" + bytes([128]))
    assert isinstance(mask, LabelMask)
    assert mask.labels[0, 0] == PixelClass.SEED_COAT


def test_truncated_pgm():
    with pytest.raises(TruncatedPayload):
        decode_image(b"P5 2 2 255\n" + bytes([0, 128, 255]))


@pytest.mark.parametrize("data", [
    b"P3 1 1 255\n\x00\x00\x00",
    b"P6 0 1 255\n",
    b"P5 1 1 65535\n\x00\x00",
    b"P5 1 1\n\x00",
    b"garbage",
])
def test_malformed_headers(data):
    with pytest.raises(MalformedHeader):
        decode_image(data)


def test_unknown_class_code():
    with pytest.raises(UnknownClassCode):
        decode_image(b"P5 2 1 255\n" + bytes([0, 127]))


def test_encode_seed_coat_mask():
    mask = LabelMask(np.array([[PixelClass.SEED_COAT]], dtype=np.uint8))
    assert encode_image(mask) == b"P5 1 1 255\n" + bytes([128])


def test_encode_red_green_image():
    assert encode_image(decode_image(RED_GREEN)) == RED_GREEN


def test_header_whitespace_variants_decode_identically():
    img = decode_image(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
    assert img == decode_image(RED_GREEN)


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
def test_ppm_roundtrip(pixels):
    img = RgbImage(pixels)
    data = encode_image(img)
    assert decode_image(data) == img
    assert encode_image(decode_image(data)) == data


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.integers(0, 2)))
def test_pgm_roundtrip(labels):
    mask = LabelMask(labels)
    data = encode_image(mask)
    assert decode_image(data) == mask
    assert encode_image(decode_image(data)) == data


def test_hsv_examples():
    red = rgb_to_hsv(255, 0, 0)
    assert (red.hue, red.saturation, red.value) == (0.0, 1.0, 1.0)
    black = rgb_to_hsv(0, 0, 0)
    assert (black.hue, black.saturation, black.value) == (0.0, 0.0, 0.0)
    gray = rgb_to_hsv(128, 128, 128)
    assert gray.hue == 0.0 and gray.saturation == 0.0
    assert gray.value == pytest.approx(128 / 255, abs=1e-15)
    assert gray.value == pytest.approx(0.50196, abs=1e-5)


def test_hsv_vectorized_ranges_exhaustive():
    # all 2^24 colours, in chunks of one red value at a time
    g, b = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    for r in range(0, 256):
        px = np.stack([np.full_like(g, r), g, b], axis=-1).astype(np.uint8)
        f = hsv_features(px)
        assert f[..., 0].min() >= 0 and f[..., 0].max() < 360
        assert f[..., 1].min() >= 0 and f[..., 1].max() <= 1
        assert f[..., 2].min() >= 0 and f[..., 2].max() <= 1
        gray = (px[..., 0] == px[..., 1]) & (px[..., 1] == px[..., 2])
        assert np.all(f[..., 1][gray] == 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_hsv_vectorized_matches_scalar(r, g, b):
    scalar = rgb_to_hsv(r, g, b)
    vec = hsv_features(np.array([[r, g, b]], dtype=np.uint8))[0]
    assert vec[0] == pytest.approx(scalar.hue, abs=1e-9)
    assert vec[1] == pytest.approx(scalar.saturation, abs=1e-12)
    assert vec[2] == pytest.approx(scalar.value, abs=1e-12)
    # and both agree with the stdlib hexcone
    h, s, v = colorsys.rgb_to_hsv(r / 255, g / 255, b / 255)
    assert scalar.saturation == s and scalar.value == v


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 255))
def test_gray_saturation_exactly_zero(c):
    assert rgb_to_hsv(c, c, c).saturation == 0.0
    assert rgb_to_hsv(c, c, c).hue == 0.0


def test_scoremap_softmax_sums_to_one(rng):
    s = ScoreMap(rng.normal(0, 20, size=(5, 7, 3)))
    p = s.softmax()
    assert p.min() >= 0 and p.max() <= 1
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
