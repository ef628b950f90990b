"""Connected components, size filtering and the classical stage detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .detection import Detection, DetectionLabel
from .raster import BinaryMask, BoundingBox, GrayImage
from .thresholding import DegenerateHistogram, binarize_otsu

# 8-connectivity
_STRUCTURE = np.ones((3, 3), dtype=bool)

DEFAULT_DAPI_SCORE_THRESHOLD = 0.9
DEFAULT_MIN_CONTRAST = 20.0
DEFAULT_MIN_SEPARATION = 4.0


@dataclass(frozen=True)
class Blob:
    mask: BinaryMask
    bbox: BoundingBox
    area: int
    centroid: tuple[float, float]  # (x, y)

    @property
    def equivalent_diameter(self) -> float:
        return equivalent_diameter(self.area)


def equivalent_diameter(area: float) -> float:
    """Diameter of the disc with the given area."""
    return 2.0 * math.sqrt(area / math.pi)


@dataclass(frozen=True)
class SizeFilter:
    """Drop blobs whose equivalent diameter is not above ``min_diameter_um``.

    Inactive unless ``microns_per_pixel`` is set.
    """

    min_diameter_um: float = 5.0
    microns_per_pixel: float | None = None

    def __post_init__(self) -> None:
        if self.microns_per_pixel is not None and not self.microns_per_pixel > 0:
            raise ValueError(f"microns_per_pixel must be > 0, got {self.microns_per_pixel}")
        if self.min_diameter_um < 0:
            raise ValueError(f"min_diameter_um must be >= 0, got {self.min_diameter_um}")

    @property
    def active(self) -> bool:
        return self.microns_per_pixel is not None


@dataclass(frozen=True)
class ClassicalDetectorConfig:
    size_filter: SizeFilter = field(default_factory=SizeFilter)
    dapi_score_threshold: float = DEFAULT_DAPI_SCORE_THRESHOLD
    min_contrast: float = DEFAULT_MIN_CONTRAST
    min_separation: float = DEFAULT_MIN_SEPARATION

    def binarize(self, img: GrayImage) -> BinaryMask:
        """Otsu foreground, or LowContrast when the layer looks like noise."""
        return binarize_otsu(img, self.min_contrast, self.min_separation)


def connected_components(m: BinaryMask) -> list[Blob]:
    """Split a mask into maximal 8-connected components.

    Ordered by descending area, then by the (y, x) of the bbox top-left
    corner, then by raster order of the component's first pixel.
    """
    labels, n = ndimage.label(m.bits, structure=_STRUCTURE)
    if n == 0:
        return []
    slices = ndimage.find_objects(labels)
    blobs = []
    for idx, sl in enumerate(slices, start=1):
        sy, sx = sl
        local = labels[sl] == idx
        full = np.zeros(m.shape, dtype=bool)
        full[sl] = local
        ys, xs = np.nonzero(local)
        area = int(ys.size)
        centroid = (float(xs.mean() + sx.start), float(ys.mean() + sy.start))
        bbox = BoundingBox(sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start)
        blobs.append((idx, Blob(BinaryMask(full), bbox, area, centroid)))
    blobs.sort(key=lambda p: (-p[1].area, p[1].bbox.y, p[1].bbox.x, p[0]))
    return [b for _, b in blobs]


def filter_by_size(blobs: list[Blob], f: SizeFilter) -> list[Blob]:
    if not f.active:
        return list(blobs)
    return [b for b in blobs if b.equivalent_diameter * f.microns_per_pixel > f.min_diameter_um]


def _blob_detections(img: GrayImage, cfg: ClassicalDetectorConfig, label: DetectionLabel) -> list[Detection]:
    try:
        fg = cfg.binarize(img)
    except DegenerateHistogram:
        return []
    out = []
    for blob in filter_by_size(connected_components(fg), cfg.size_filter):
        score = float(img.pixels[blob.mask.bits].mean()) / 255.0
        out.append(Detection(bbox=blob.bbox, score=score, label=label, mask=blob.mask))
    return out


def detect_ck_classical(ck: GrayImage, cfg: ClassicalDetectorConfig | None = None) -> list[Detection]:
    """Stage-1 stand-in: one CK detection per Otsu foreground blob."""
    return _blob_detections(ck, cfg or ClassicalDetectorConfig(), DetectionLabel.CK)


def detect_dapi_classical(dapi_crop: GrayImage, cfg: ClassicalDetectorConfig | None = None) -> list[Detection]:
    """Stage-2 stand-in: nucleus masks inside a Stage-1 crop.

    Detections scoring below ``cfg.dapi_score_threshold`` are dropped.
    """
    cfg = cfg or ClassicalDetectorConfig()
    dets = _blob_detections(dapi_crop, cfg, DetectionLabel.DAPI)
    return [d for d in dets if d.score >= cfg.dapi_score_threshold]
