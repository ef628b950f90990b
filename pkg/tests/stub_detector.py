"""Stand-in external detector speaking the ctcpipe wire protocol.

    stub_detector.py planted FILE   stage1: echo CK boxes from FILE
                                    stage2: threshold at 127 + 8-connected blobs
    stub_detector.py empty          reply with no detections
    stub_detector.py reply JSON     reply with JSON verbatim
    stub_detector.py exit N         read the request, exit with status N
    stub_detector.py lines N        write N copies of an empty reply
"""

import json
import sys

import numpy as np
from scipy import ndimage

from ctcpipe.detectors import Stage, decode_request, decode_rle_mask, encode_rle_mask
from ctcpipe.raster import BinaryMask


def _blobs_reply(img):
    fg = img > 127
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), bool))
    dets = []
    for idx, (sy, sx) in enumerate(ndimage.find_objects(labels), start=1):
        m = labels == idx
        bbox = [sx.start, sy.start, sx.stop - sx.start, sy.stop - sy.start]
        dets.append((-int(m.sum()), sy.start, sx.start, bbox, float(img[m].mean()) / 255.0, m))
    dets.sort(key=lambda d: d[:3])
    return [{"bbox": d[3], "score": d[4], "mask_rle": encode_rle_mask(BinaryMask(d[5]))} for d in dets]


def main(argv):
    mode = argv[1]
    line = sys.stdin.readline()
    if mode == "exit":
        return int(argv[2])
    if mode == "lines":
        sys.stdout.write('{"detections": []}\n' * int(argv[2]))
        return 0
    if mode == "reply":
        print(argv[2])
        return 0
    if mode == "empty":
        print(json.dumps({"detections": []}))
        return 0

    stage, img = decode_request(line)
    px = img.pixels
    if stage is Stage.STAGE1_CK:
        with open(argv[2]) as fh:
            planted = json.load(fh)
        dets = []
        for p in planted:
            m = decode_rle_mask(p["mask_rle"], img.width, img.height).bits
            dets.append({"bbox": p["bbox"], "score": float(px[m].mean()) / 255.0, "mask_rle": p["mask_rle"]})
    else:
        dets = _blobs_reply(px)
    print(json.dumps({"detections": dets}))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
