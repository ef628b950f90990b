"""Raster value types and the pixel-set algebra used by every stage.

Images and masks are thin immutable wrappers around 2-D numpy arrays
(row-major, ``[y, x]`` indexing).  Arrays are copied on construction and
marked read-only, so instances can be shared freely between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RasterError(ValueError):
    """Base class for raster-level contract violations."""


class DimensionMismatch(RasterError):
    """Two rasters that must be aligned have different shapes."""


class InvalidBox(RasterError):
    """A bounding box does not intersect the image it refers to."""


class NotBinarized(RasterError):
    """An image passed to :func:`to_mask` contains values other than 0/255."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit raster."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise RasterError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise RasterError("GrayImage intensities must lie in [0, 255]")
            if np.issubdtype(arr.dtype, np.floating) and not np.array_equal(arr, np.round(arr)):
                raise RasterError("GrayImage intensities must be integers")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(arr))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape  # type: ignore[return-value]

    @classmethod
    def from_16bit(cls, arr: np.ndarray) -> GrayImage:
        """Downscale a 16-bit raster by keeping the high byte of each pixel."""
        arr = np.asarray(arr)
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise RasterError("16-bit intensities must lie in [0, 65535]")
        return cls((arr.astype(np.uint32) >> 8).astype(np.uint8))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        return hash((self.shape, self.pixels.tobytes()))


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Pixel membership set over a raster grid."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise RasterError(f"BinaryMask needs a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise RasterError("BinaryMask bits must be 0 or 1")
            arr = arr.astype(bool)
        object.__setattr__(self, "bits", _frozen(arr))

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape  # type: ignore[return-value]

    @classmethod
    def zeros(cls, height: int, width: int) -> BinaryMask:
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def ones(cls, height: int, width: int) -> BinaryMask:
        return cls(np.ones((height, width), dtype=bool))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self) -> int:
        return hash((self.shape, np.packbits(self.bits).tobytes()))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box; ``x``/``y`` are the inclusive top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.w < 1 or self.h < 1:
            raise InvalidBox(f"box width and height must be >= 1, got w={self.w} h={self.h}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    def expand(self, padding: int) -> BoundingBox:
        return BoundingBox(self.x - padding, self.y - padding, self.w + 2 * padding, self.h + 2 * padding)

    def clamp(self, width: int, height: int) -> BoundingBox:
        """Clip the box to a ``width`` x ``height`` raster.

        Raises InvalidBox if nothing of the box is left.
        """
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x2, width), min(self.y2, height)
        if x1 <= x0 or y1 <= y0:
            raise InvalidBox(f"box {self.as_list()} lies outside the {width}x{height} image")
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def contains_mask(self, mask: BinaryMask) -> bool:
        ys, xs = np.nonzero(mask.bits)
        if ys.size == 0:
            return True
        return bool(
            xs.min() >= self.x and xs.max() < self.x2 and ys.min() >= self.y and ys.max() < self.y2
        )


@dataclass(frozen=True)
class ChannelSet:
    """One sample's aligned CK / DAPI / CD45 layers."""

    ck: GrayImage
    dapi: GrayImage
    cd45: GrayImage
    sample_id: str = ""

    def __post_init__(self) -> None:
        if not (self.ck.shape == self.dapi.shape == self.cd45.shape):
            raise DimensionMismatch(
                f"channel shapes differ: ck={self.ck.shape} dapi={self.dapi.shape} cd45={self.cd45.shape}"
            )

    @property
    def width(self) -> int:
        return self.ck.width

    @property
    def height(self) -> int:
        return self.ck.height


def mask_area(m: BinaryMask) -> int:
    """Number of member pixels."""
    return int(np.count_nonzero(m.bits))


def mask_intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    if a.shape != b.shape:
        raise DimensionMismatch(f"misaligned masks: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a.bits & b.bits))


def crop_box(width: int, height: int, box: BoundingBox, padding: int = 0) -> BoundingBox:
    """The padded box clamped to a ``width`` x ``height`` raster."""
    if padding < 0:
        raise InvalidBox(f"padding must be >= 0, got {padding}")
    return box.expand(padding).clamp(width, height)


def crop(img: GrayImage, box: BoundingBox, padding: int = 0) -> GrayImage:
    """Sub-image under ``box`` grown by ``padding`` and clamped to the image."""
    b = crop_box(img.width, img.height, box, padding)
    return GrayImage(img.pixels[b.y : b.y2, b.x : b.x2])


def crop_mask(m: BinaryMask, box: BoundingBox, padding: int = 0) -> BinaryMask:
    b = crop_box(m.width, m.height, box, padding)
    return BinaryMask(m.bits[b.y : b.y2, b.x : b.x2])


def to_mask(img: GrayImage) -> BinaryMask:
    """Lift a thresholded 0/255 image into a mask (255 -> member)."""
    px = img.pixels
    white = px == 255
    if not (white | (px == 0)).all():
        raise NotBinarized("image contains intensities other than 0 and 255")
    return BinaryMask(white)


def tight_box(m: BinaryMask) -> BoundingBox | None:
    """Smallest box covering every member pixel, or None for an empty mask."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        return None
    x0, y0 = int(xs.min()), int(ys.min())
    return BoundingBox(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)
