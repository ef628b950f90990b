import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctcpipe.raster import (
    BinaryMask,
    BoundingBox,
    ChannelSet,
    DimensionMismatch,
    GrayImage,
    InvalidBox,
    NotBinarized,
    RasterError,
    crop,
    mask_area,
    mask_intersection_area,
    to_mask,
)
from oracles import count_both, count_ones


def test_mask_area_trivial():
    assert mask_area(BinaryMask.zeros(4, 4)) == 0
    assert mask_area(BinaryMask.ones(4, 4)) == 16


def test_mask_area_matches_pixel_loop(rng):
    bits = rng.random((64, 64)) < 0.37
    assert mask_area(BinaryMask(bits)) == count_ones(bits)


def test_intersection_idempotent_and_disjoint(rng):
    a = BinaryMask(rng.random((16, 16)) < 0.5)
    assert mask_intersection_area(a, a) == mask_area(a)
    left = np.zeros((8, 8), bool)
    left[:, :4] = True
    assert mask_intersection_area(BinaryMask(left), BinaryMask(~left)) == 0


def test_intersection_matches_joint_loop(rng):
    a = rng.random((32, 32)) < 0.5
    b = rng.random((32, 32)) < 0.3
    assert mask_intersection_area(BinaryMask(a), BinaryMask(b)) == count_both(a, b)


def test_intersection_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mask_intersection_area(BinaryMask.zeros(4, 4), BinaryMask.zeros(4, 5))


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 20).flatmap(
        lambda h: st.integers(1, 20).flatmap(
            lambda w: st.tuples(arrays(bool, (h, w)), arrays(bool, (h, w)))
        )
    )
)
def test_intersection_properties(pair):
    a, b = BinaryMask(pair[0]), BinaryMask(pair[1])
    inter = mask_intersection_area(a, b)
    assert inter == mask_intersection_area(b, a)
    assert inter <= min(mask_area(a), mask_area(b))


def gradient4():
    return GrayImage(np.arange(16, dtype=np.uint8).reshape(4, 4) * 10)


def test_crop_identity():
    img = gradient4()
    assert crop(img, BoundingBox(0, 0, 4, 4)) == img


def test_crop_known_subarray():
    # rows 1-2, cols 1-2 of [[0,10,20,30],[40,50,60,70],[80,90,100,110],...]
    out = crop(gradient4(), BoundingBox(1, 1, 2, 2))
    assert out.pixels.tolist() == [[50, 60], [90, 100]]


def test_crop_clamps_at_edges():
    out = crop(gradient4(), BoundingBox(2, 1, 3, 2), padding=2)
    # padded box x=0..7, y=-1..5 clamps to the whole 4x4 image
    assert (out.width, out.height) == (4, 4)
    out = crop(gradient4(), BoundingBox(3, 0, 5, 1))
    assert (out.width, out.height) == (1, 1)
    assert out.pixels.tolist() == [[30]]


def test_crop_outside_image_raises():
    with pytest.raises(InvalidBox):
        crop(gradient4(), BoundingBox(10, 10, 2, 2))
    with pytest.raises(InvalidBox):
        crop(gradient4(), BoundingBox(-5, 0, 3, 2))


def test_crop_idempotent(rng):
    img = GrayImage(rng.integers(0, 256, (20, 30), dtype=np.uint8))
    once = crop(img, BoundingBox(3, 4, 10, 7))
    assert crop(once, BoundingBox(0, 0, once.width, once.height)) == once


def test_to_mask():
    assert to_mask(GrayImage(np.full((3, 3), 255, np.uint8))) == BinaryMask.ones(3, 3)
    assert to_mask(GrayImage(np.zeros((3, 3), np.uint8))) == BinaryMask.zeros(3, 3)
    checker = (np.indices((5, 6)).sum(axis=0) % 2).astype(bool)
    img = GrayImage(np.where(checker, 255, 0).astype(np.uint8))
    assert np.array_equal(to_mask(img).bits, checker)


def test_to_mask_rejects_gray():
    with pytest.raises(NotBinarized):
        to_mask(GrayImage(np.array([[0, 128]], np.uint8)))


def test_types_validate():
    with pytest.raises(RasterError):
        GrayImage(np.array([[300]]))
    with pytest.raises(RasterError):
        GrayImage(np.zeros((0, 4)))
    with pytest.raises(RasterError):
        BinaryMask(np.array([[0, 2]]))
    with pytest.raises(InvalidBox):
        BoundingBox(0, 0, 0, 3)
    a, b = GrayImage(np.zeros((4, 4))), GrayImage(np.zeros((4, 5)))
    with pytest.raises(DimensionMismatch):
        ChannelSet(a, a, b)


def test_values_are_immutable():
    img = GrayImage(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1
    src = np.zeros((2, 2), np.uint8)
    img = GrayImage(src)
    src[0, 0] = 9
    assert img.pixels[0, 0] == 0


def test_from_16bit_keeps_high_byte():
    img = GrayImage.from_16bit(np.array([[0, 255, 256, 65535, 0x1234]]))
    assert img.pixels.tolist() == [[0, 0, 1, 255, 0x12]]
