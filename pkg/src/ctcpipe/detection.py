"""The Detection record exchanged between pipeline stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .raster import BinaryMask, BoundingBox


class DetectionLabel(str, enum.Enum):
    CK = "CK"
    DAPI = "DAPI"


class InvalidDetection(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    """Scored box, optionally with a pixel mask in source-image coordinates."""

    bbox: BoundingBox
    score: float
    label: DetectionLabel
    mask: BinaryMask | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise InvalidDetection(f"detection score {self.score!r} outside [0, 1]")
        if self.mask is not None and not self.bbox.contains_mask(self.mask):
            raise InvalidDetection(f"mask pixels fall outside bbox {self.bbox.as_list()}")
