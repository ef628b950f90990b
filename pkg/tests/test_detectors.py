import json
import shlex
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctcpipe.detection import Detection, DetectionLabel, InvalidDetection
from ctcpipe.detectors import (
    DetectorBinding,
    ProtocolError,
    Stage,
    StageError,
    decode_reply,
    decode_request,
    decode_rle_mask,
    encode_reply,
    encode_request,
    encode_rle_mask,
    run_detector,
)
from ctcpipe.raster import BinaryMask, BoundingBox, GrayImage
from ctcpipe.segmentation import detect_ck_classical
from helpers import disc, field_with

STUB = Path(__file__).with_name("stub_detector.py")


def stub(*args: str) -> str:
    return " ".join(shlex.quote(a) for a in (sys.executable, str(STUB), *args))


def ck_image():
    return field_with((40, 40), [(disc((40, 40), 20, 18, 8), 170)])


# -- RLE ----------------------------------------------------------------------


def test_decode_rle_examples():
    assert decode_rle_mask([16], 4, 4) == BinaryMask.zeros(4, 4)
    assert decode_rle_mask([0, 16], 4, 4) == BinaryMask.ones(4, 4)
    m = decode_rle_mask([5, 3, 8], 4, 4)
    assert np.flatnonzero(m.bits.ravel()).tolist() == [5, 6, 7]


def test_decode_rle_rejects_bad_runs():
    with pytest.raises(ProtocolError):
        decode_rle_mask([5, 3], 4, 4)
    with pytest.raises(ProtocolError):
        decode_rle_mask([20, -4], 4, 4)
    with pytest.raises(ProtocolError):
        decode_rle_mask([16.0], 4, 4)


def test_encode_rle_examples():
    assert encode_rle_mask(BinaryMask.zeros(4, 4)) == [16]
    assert encode_rle_mask(BinaryMask.ones(4, 4)) == [0, 16]
    bits = np.zeros(16, bool)
    bits[5:8] = True
    assert encode_rle_mask(BinaryMask(bits.reshape(4, 4))) == [5, 3, 8]


@settings(max_examples=200, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 16), st.integers(1, 16))))
def test_rle_round_trip(bits):
    m = BinaryMask(bits)
    runs = encode_rle_mask(m)
    assert decode_rle_mask(runs, m.width, m.height) == m
    assert encode_rle_mask(decode_rle_mask(runs, m.width, m.height)) == runs


# -- wire format ----------------------------------------------------------------


def test_request_round_trip(rng):
    img = GrayImage(rng.integers(0, 256, (7, 11), dtype=np.uint8))
    line = encode_request(Stage.STAGE2_DAPI, img)
    assert json.loads(line)["width"] == 11
    stage, back = decode_request(line)
    assert stage is Stage.STAGE2_DAPI and back == img


def test_reply_round_trip():
    dets = detect_ck_classical(ck_image())
    back = decode_reply(encode_reply(dets), Stage.STAGE1_CK, 40, 40)
    assert back == dets


@pytest.mark.parametrize(
    "reply",
    [
        "not json",
        '{"dets": []}',
        '{"detections": [{"bbox": [0, 0, 4, 4], "score": 1.2, "mask_rle": null}]}',
        '{"detections": [{"bbox": [0, 0, 4, 4], "score": -0.1, "mask_rle": null}]}',
        '{"detections": [{"bbox": [0, 0, 4], "score": 0.5, "mask_rle": null}]}',
        '{"detections": [{"bbox": [50, 50, 4, 4], "score": 0.5, "mask_rle": null}]}',
        '{"detections": [{"bbox": [0, 0, 2, 2], "score": 0.5, "mask_rle": [0, 100]}]}',
        '{"detections": [{"bbox": [0, 0, 2, 2], "score": 0.5, "mask_rle": [99, 1]}]}',
    ],
)
def test_malformed_replies(reply):
    with pytest.raises(ProtocolError):
        decode_reply(reply, Stage.STAGE1_CK, 10, 10)


def test_stage2_requires_mask():
    reply = '{"detections": [{"bbox": [0, 0, 2, 2], "score": 0.95, "mask_rle": null}]}'
    assert len(decode_reply(reply, Stage.STAGE1_CK, 10, 10)) == 1
    with pytest.raises(ProtocolError):
        decode_reply(reply, Stage.STAGE2_DAPI, 10, 10)


def test_reply_bbox_is_clamped():
    reply = '{"detections": [{"bbox": [-2, 7, 5, 9], "score": 0.5}]}'
    (d,) = decode_reply(reply, Stage.STAGE1_CK, 10, 10)
    assert d.bbox == BoundingBox(0, 7, 3, 3)


def test_detection_invariants():
    with pytest.raises(InvalidDetection):
        Detection(BoundingBox(0, 0, 2, 2), 1.5, DetectionLabel.CK)
    bits = np.zeros((5, 5), bool)
    bits[4, 4] = True
    with pytest.raises(InvalidDetection):
        Detection(BoundingBox(0, 0, 2, 2), 0.5, DetectionLabel.DAPI, BinaryMask(bits))


# -- bindings -----------------------------------------------------------------


def test_binding_validation():
    with pytest.raises(ValueError):
        DetectorBinding("external", "stage1_ck")
    b = DetectorBinding.external(Stage.STAGE1_CK, "x")
    assert not b.parallel_ok
    assert DetectorBinding.classical("stage2_dapi").parallel_ok


def test_classical_binding_delegates():
    img = ck_image()
    assert run_detector(DetectorBinding.classical(Stage.STAGE1_CK), img) == detect_ck_classical(img)


def test_external_empty_reply():
    b = DetectorBinding.external(Stage.STAGE1_CK, stub("empty"))
    assert run_detector(b, ck_image()) == []


def test_external_planted_ck_matches_classical(tmp_path):
    img = ck_image()
    classical = detect_ck_classical(img)
    planted = [{"bbox": d.bbox.as_list(), "mask_rle": encode_rle_mask(d.mask)} for d in classical]
    f = tmp_path / "planted.json"
    f.write_text(json.dumps(planted))
    got = run_detector(DetectorBinding.external(Stage.STAGE1_CK, stub("planted", str(f))), img)
    assert got == classical


def test_external_results_sorted_by_score():
    reply = json.dumps(
        {
            "detections": [
                {"bbox": [0, 0, 2, 2], "score": 0.3},
                {"bbox": [3, 3, 2, 2], "score": 0.9},
            ]
        }
    )
    got = run_detector(DetectorBinding.external(Stage.STAGE1_CK, stub("reply", reply)), ck_image())
    assert [d.score for d in got] == [0.9, 0.3]


@pytest.mark.parametrize(
    "args, exc",
    [
        (("exit", "3"), StageError),
        (("lines", "2"), ProtocolError),
        (("lines", "0"), ProtocolError),
        (("reply", '{"detections": [{"bbox": [0, 0, 2, 2], "score": 1.2}]}'), ProtocolError),
    ],
)
def test_external_failures(args, exc):
    with pytest.raises(exc):
        run_detector(DetectorBinding.external(Stage.STAGE1_CK, stub(*args)), ck_image())


def test_external_missing_command():
    b = DetectorBinding.external(Stage.STAGE1_CK, "/nonexistent/detector --flag")
    with pytest.raises(StageError):
        run_detector(b, ck_image())
