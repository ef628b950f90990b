"""On-disk formats: channel PNGs, sample directories and JSON-lines results."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .pipeline import BatchReport, SampleResult, SampleSource
from .raster import ChannelSet, GrayImage, RasterError

logger = logging.getLogger(__name__)

CHANNEL_FILES = {"ck": "ck.png", "dapi": "dapi.png", "cd45": "cd45.png"}
MANIFEST = "manifest.json"


class ChannelFileError(RasterError):
    pass


def read_gray_png(path: str | Path) -> GrayImage:
    """Load an 8- or 16-bit grayscale PNG; 16-bit data keeps its high byte."""
    with Image.open(path) as im:
        mode = im.mode
        arr = np.array(im)
    if mode in ("L", "P") and arr.dtype == np.uint8 and arr.ndim == 2:
        return GrayImage(arr)
    if mode.startswith("I;16") or mode == "I":
        return GrayImage.from_16bit(arr.astype(np.int64))
    raise ChannelFileError(f"{path}: unsupported image mode {mode!r} (need 8/16-bit grayscale)")


def write_gray_png(path: str | Path, img: GrayImage) -> None:
    Image.fromarray(np.ascontiguousarray(img.pixels), mode="L").save(path, format="PNG")


def load_sample_dir(path: str | Path, sample_id: str | None = None) -> ChannelSet:
    path = Path(path)
    layers = {}
    for name, fname in CHANNEL_FILES.items():
        f = path / fname
        if not f.is_file():
            raise ChannelFileError(f"{path.name}: missing {fname}")
        layers[name] = read_gray_png(f)
    return ChannelSet(sample_id=sample_id or path.name, **layers)


def write_sample_dir(path: str | Path, x: ChannelSet) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, fname in CHANNEL_FILES.items():
        write_gray_png(path / fname, getattr(x, name))


def discover_samples(root: str | Path) -> list[SampleSource]:
    """One lazily loaded sample per sub-directory, sorted by name."""
    root = Path(root)
    dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    return [SampleSource(d.name, lambda d=d: load_sample_dir(d)) for d in dirs]


def read_manifest_labels(root: str | Path) -> dict[str, bool] | None:
    f = Path(root) / MANIFEST
    if not f.is_file():
        return None
    data = json.loads(f.read_text())
    return {s["sample_id"]: bool(s["label"]) for s in data["samples"]}


# -- results -----------------------------------------------------------------


def result_line(r: SampleResult, label: bool | None = None) -> str:
    d = r.to_dict()
    if label is not None:
        d["label"] = bool(label)
    return json.dumps(d, sort_keys=True)


@dataclass
class ParsedResults:
    results: list[SampleResult]
    labels: dict[str, bool] | None
    bad_lines: list[tuple[int, str]]


def read_results(path: str | Path) -> ParsedResults:
    """Parse a JSON-lines results file, collecting corrupt lines instead of failing."""
    results, labels, bad = [], {}, []
    all_labeled = True
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                r = SampleResult.from_dict(d)
            except (ValueError, KeyError, TypeError) as e:
                bad.append((lineno, f"{type(e).__name__}: {e}"))
                continue
            results.append(r)
            if "label" in d:
                labels[r.sample_id] = bool(d["label"])
            else:
                all_labeled = False
    return ParsedResults(results, labels if results and all_labeled else None, bad)


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_report(path: str | Path, report: BatchReport) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
