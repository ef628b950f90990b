"""Pluggable Stage-1/Stage-2 detectors and the external-process wire protocol.

An external detector is any command that reads one JSON request line on
stdin and writes one JSON reply line on stdout::

    request: {"stage": "stage1_ck"|"stage2_dapi", "width": W, "height": H,
              "pixels_b64": <base64 of the W*H row-major uint8 pixels>}
    reply:   {"detections": [{"bbox": [x, y, w, h], "score": s,
                              "mask_rle": [runs...] | null}, ...]}

Masks are alternating run lengths over the row-major pixel order, the
first run counting zeros.  A non-zero exit status, a missing or extra
reply line, or any malformed field is reported as a stage error.
"""

from __future__ import annotations

import base64
import enum
import json
import logging
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .detection import Detection, DetectionLabel, InvalidDetection
from .raster import BinaryMask, BoundingBox, GrayImage, InvalidBox
from .segmentation import ClassicalDetectorConfig, detect_ck_classical, detect_dapi_classical

logger = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A detector failed on one sample; the sample is quarantined, not classified."""


class ProtocolError(StageError):
    """A detector reply violated the wire contract."""


class BackendKind(str, enum.Enum):
    CLASSICAL = "classical"
    EXTERNAL = "external"


class Stage(str, enum.Enum):
    STAGE1_CK = "stage1_ck"
    STAGE2_DAPI = "stage2_dapi"

    @property
    def label(self) -> DetectionLabel:
        return DetectionLabel.CK if self is Stage.STAGE1_CK else DetectionLabel.DAPI


@dataclass(frozen=True)
class DetectorBinding:
    kind: BackendKind
    stage: Stage
    endpoint: str | None = None
    concurrency_safe: bool = False
    timeout_s: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind(self.kind))
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.kind is BackendKind.EXTERNAL and not self.endpoint:
            raise ValueError(f"external {self.stage.value} binding requires an endpoint")

    @classmethod
    def classical(cls, stage: Stage | str) -> DetectorBinding:
        return cls(BackendKind.CLASSICAL, Stage(stage), concurrency_safe=True)

    @classmethod
    def external(cls, stage: Stage | str, endpoint: str, concurrency_safe: bool = False) -> DetectorBinding:
        return cls(BackendKind.EXTERNAL, Stage(stage), endpoint, concurrency_safe)

    @property
    def parallel_ok(self) -> bool:
        return self.kind is BackendKind.CLASSICAL or self.concurrency_safe


# -- run-length masks -------------------------------------------------------


def encode_rle_mask(m: BinaryMask) -> list[int]:
    """Alternating 0/1 run lengths in row-major order, zeros first."""
    flat = m.bits.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs


def decode_rle_mask(runs: list[int], width: int, height: int) -> BinaryMask:
    if width < 1 or height < 1:
        raise ProtocolError(f"invalid mask dimensions {width}x{height}")
    if not isinstance(runs, (list, tuple)) or not all(
        isinstance(r, int) and not isinstance(r, bool) and r >= 0 for r in runs
    ):
        raise ProtocolError("mask_rle must be a list of non-negative integers")
    if sum(runs) != width * height:
        raise ProtocolError(f"mask_rle sums to {sum(runs)}, expected {width * height}")
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return BinaryMask(flat.reshape(height, width))


# -- wire helpers -----------------------------------------------------------


def encode_request(stage: Stage, img: GrayImage) -> str:
    payload = {
        "stage": Stage(stage).value,
        "width": img.width,
        "height": img.height,
        "pixels_b64": base64.b64encode(np.ascontiguousarray(img.pixels).tobytes()).decode("ascii"),
    }
    return json.dumps(payload)


def decode_request(line: str) -> tuple[Stage, GrayImage]:
    """Inverse of :func:`encode_request`; for detector implementations."""
    obj = json.loads(line)
    w, h = int(obj["width"]), int(obj["height"])
    raw = base64.b64decode(obj["pixels_b64"])
    if len(raw) != w * h:
        raise ProtocolError(f"pixel payload has {len(raw)} bytes, expected {w * h}")
    return Stage(obj["stage"]), GrayImage(np.frombuffer(raw, dtype=np.uint8).reshape(h, w))


def encode_reply(detections: list[Detection]) -> str:
    return json.dumps(
        {
            "detections": [
                {
                    "bbox": d.bbox.as_list(),
                    "score": d.score,
                    "mask_rle": encode_rle_mask(d.mask) if d.mask is not None else None,
                }
                for d in detections
            ]
        }
    )


def _is_int(v: object) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def decode_reply(line: str, stage: Stage, width: int, height: int) -> list[Detection]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"reply is not valid JSON: {e}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("detections"), list):
        raise ProtocolError("reply must be an object with a 'detections' list")

    out = []
    for i, d in enumerate(obj["detections"]):
        if not isinstance(d, dict):
            raise ProtocolError(f"detection {i} is not an object")
        bbox = d.get("bbox")
        if not (isinstance(bbox, list) and len(bbox) == 4 and all(_is_int(v) for v in bbox)):
            raise ProtocolError(f"detection {i}: bbox must be [x, y, w, h] integers")
        score = d.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ProtocolError(f"detection {i}: score {score!r} outside [0, 1]")
        try:
            box = BoundingBox(*bbox).clamp(width, height)
        except InvalidBox as e:
            raise ProtocolError(f"detection {i}: {e}") from None

        mask = None
        if d.get("mask_rle") is not None:
            mask = decode_rle_mask(d["mask_rle"], width, height)
        elif stage is Stage.STAGE2_DAPI:
            raise ProtocolError(f"detection {i}: stage2_dapi detections must carry a mask")
        try:
            out.append(Detection(bbox=box, score=float(score), label=stage.label, mask=mask))
        except InvalidDetection as e:
            raise ProtocolError(f"detection {i}: {e}") from None
    return out


# -- execution --------------------------------------------------------------

_locks: dict[DetectorBinding, threading.Lock] = {}
_locks_guard = threading.Lock()


def _binding_lock(binding: DetectorBinding) -> threading.Lock:
    with _locks_guard:
        return _locks.setdefault(binding, threading.Lock())


def _call_external(binding: DetectorBinding, img: GrayImage) -> list[Detection]:
    cmd = shlex.split(binding.endpoint) if isinstance(binding.endpoint, str) else list(binding.endpoint)
    request = encode_request(binding.stage, img) + "\n"
    try:
        proc = subprocess.run(
            cmd, input=request, capture_output=True, text=True, timeout=binding.timeout_s
        )
    except (OSError, subprocess.TimeoutExpired) as e:
        raise StageError(f"{binding.stage.value} detector could not run: {e}") from None
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] if proc.stderr else []
        raise StageError(
            f"{binding.stage.value} detector exited with status {proc.returncode}"
            + (f": {tail[0]}" if tail else "")
        )
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise ProtocolError(f"expected exactly one reply line, got {len(lines)}")
    return decode_reply(lines[0], binding.stage, img.width, img.height)


def run_detector(
    binding: DetectorBinding,
    img: GrayImage,
    cfg: ClassicalDetectorConfig | None = None,
) -> list[Detection]:
    """Apply a Stage-1 or Stage-2 detector; results sorted by descending score.

    ``cfg`` configures the classical backend and is ignored for external
    ones.  External bindings not declared ``concurrency_safe`` are called
    one at a time.
    """
    if binding.kind is BackendKind.CLASSICAL:
        fn = detect_ck_classical if binding.stage is Stage.STAGE1_CK else detect_dapi_classical
        dets = fn(img, cfg)
    elif binding.concurrency_safe:
        dets = _call_external(binding, img)
    else:
        with _binding_lock(binding):
            dets = _call_external(binding, img)

    if binding.stage is Stage.STAGE2_DAPI and any(d.mask is None for d in dets):
        raise ProtocolError("stage2_dapi detection without a mask")
    return sorted(dets, key=lambda d: -d.score)
