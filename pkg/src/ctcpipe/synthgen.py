"""Seeded synthetic CK/DAPI/CD45 scenes with exact ground truth.

Reproducibility rules:

* Geometry is integer-only.  Disc centres and radii are stored in 1/16
  pixel units; pixel ``(x, y)`` belongs to a disc when
  ``(16x+8-cx)**2 + (16y+8-cy)**2 <= r**2``.
* Randomness comes from numpy's PCG64 bit generator (64-bit outputs read
  with ``random_raw``) seeded through ``SeedSequence``.  Only raw integers
  are consumed; no distribution method of ``numpy.random.Generator`` is
  used, so streams do not depend on numpy's sampling algorithms.
* Ground truth is measured on the emitted disc masks, never copied from
  the requested overlaps.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decision import DecisionParams, decide, overlap_fraction
from .raster import BinaryMask, ChannelSet, GrayImage

logger = logging.getLogger(__name__)

SUB = 16  # sub-pixel units per pixel

# Step vectors (in 1/16 px) for placement rays.  Non-axis-aligned so that
# pixel centres cross a moving disc boundary a few at a time.
DIRECTIONS = ((2, 1), (1, 2), (-1, 2), (-2, 1), (-2, -1), (-1, -2), (1, -2), (2, -1))
_LATERAL = (0, -1, 1, -2, 2)


class InfeasibleScene(ValueError):
    pass


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]  # (x, y) in pixels
    radius: float
    intensity: int


@dataclass(frozen=True)
class DapiBlob:
    """A nucleus.  Without an explicit ``center`` it is placed so that its
    CK overlap matches ``planted_ck_overlap``, moving out from CK blob
    ``anchor`` along ``direction`` (index into DIRECTIONS)."""

    radius: float
    intensity: int = 240
    planted_ck_overlap: float | None = None
    planted_cd45_overlap: float = 0.0
    center: tuple[float, float] | None = None
    anchor: int = 0
    direction: int = 0
    cd45_radius: float | None = None
    cd45_intensity: int = 140
    cd45_direction: int | None = None
    label: bool | None = None


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"  # none | gaussian | salt_pepper
    amplitude: int = 0  # gaussian: hard bound on |noise|
    density: float = 0.0  # salt_pepper: fraction of pixels hit

    def __post_init__(self) -> None:
        if self.kind not in ("none", "gaussian", "salt_pepper"):
            raise InfeasibleScene(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.amplitude <= 255:
            raise InfeasibleScene(f"noise amplitude must lie in [0, 255], got {self.amplitude}")
        if not 0.0 <= self.density <= 1.0:
            raise InfeasibleScene(f"noise density must lie in [0, 1], got {self.density}")


@dataclass(frozen=True)
class FlareSpec:
    """Linear brightness ramp rising to ``strength`` across ``axis``."""

    strength: int
    axis: str = "x"
    layers: tuple[str, ...] = ("ck",)


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    dims: tuple[int, int]  # (width, height)
    ck_blobs: tuple[Disc, ...] = ()
    dapi_blobs: tuple[DapiBlob, ...] = ()
    cd45_blobs: tuple[Disc, ...] = ()
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    flare: FlareSpec | None = None
    background: int = 20
    sample_id: str = "sample"

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        d = dict(d)
        d["dims"] = tuple(d["dims"])
        d["ck_blobs"] = tuple(Disc(tuple(b["center"]), b["radius"], b["intensity"]) for b in d.get("ck_blobs", ()))
        d["cd45_blobs"] = tuple(Disc(tuple(b["center"]), b["radius"], b["intensity"]) for b in d.get("cd45_blobs", ()))
        blobs = []
        for b in d.get("dapi_blobs", ()):
            b = dict(b)
            if b.get("center") is not None:
                b["center"] = tuple(b["center"])
            blobs.append(DapiBlob(**b))
        d["dapi_blobs"] = tuple(blobs)
        d["noise"] = NoiseSpec(**d.get("noise", {}))
        if d.get("flare"):
            fl = dict(d["flare"])
            fl["layers"] = tuple(fl.get("layers", ("ck",)))
            d["flare"] = FlareSpec(**fl)
        return cls(**d)


@dataclass(frozen=True)
class DapiTruth:
    mask: BinaryMask
    ck_overlap: float
    cd45_overlap: float
    planted_ck_overlap: float | None
    planted_cd45_overlap: float
    is_ctc: bool
    label: bool | None


@dataclass(frozen=True)
class GroundTruth:
    dapi: tuple[DapiTruth, ...]
    ck_mask: BinaryMask
    cd45_mask: BinaryMask
    params: DecisionParams

    @property
    def is_positive(self) -> bool:
        return any(d.is_ctc for d in self.dapi)


# -- integer geometry -------------------------------------------------------


def _q(v: float) -> int:
    return int(round(v * SUB))


def _fits(cx: int, cy: int, r: int, width: int, height: int) -> bool:
    return cx - r >= 0 and cy - r >= 0 and cx + r <= SUB * width and cy + r <= SUB * height


def disc_mask(width: int, height: int, cx: int, cy: int, r: int) -> np.ndarray:
    """Boolean raster of a disc given in 1/16-pixel units."""
    xs = SUB * np.arange(width, dtype=np.int64) + SUB // 2 - cx
    ys = SUB * np.arange(height, dtype=np.int64) + SUB // 2 - cy
    return ys[:, None] ** 2 + xs[None, :] ** 2 <= r * r


def _overlap_counts(target: np.ndarray, cx: np.ndarray, cy: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Disc area and disc-target intersection for many candidate centres."""
    height, width = target.shape
    s = 2 * (r // SUB) + 6
    x0 = (cx - r) // SUB - 1
    y0 = (cy - r) // SUB - 1
    off = np.arange(s)
    px = x0[:, None] + off[None, :]  # (C, s)
    py = y0[:, None] + off[None, :]
    dx = SUB * px + SUB // 2 - cx[:, None]
    dy = SUB * py + SUB // 2 - cy[:, None]
    inside = (dy[:, :, None] ** 2 + dx[:, None, :] ** 2) <= r * r  # (C, s, s)
    inside &= ((px >= 0) & (px < width))[:, None, :] & ((py >= 0) & (py < height))[:, :, None]
    pxc = np.clip(px, 0, width - 1)
    pyc = np.clip(py, 0, height - 1)
    hits = target[pyc[:, :, None], pxc[:, None, :]] & inside
    return inside.sum(axis=(1, 2)), hits.sum(axis=(1, 2))


def _solve_center(
    target: np.ndarray,
    origin: tuple[int, int],
    reach: int,
    r: int,
    planted: float,
    direction: int,
) -> tuple[int, int, float]:
    """Find a disc centre whose overlap with ``target`` best matches ``planted``.

    First pass: ``origin + k*step + m*perp`` for k >= 0 and a few lateral
    offsets m, ties to the smallest k then the lateral order 0, -1, 1, -2,
    2.  If no candidate is within one pixel of the requested count, every
    1/16-pixel position within one pixel of the best is tried as well.
    Returns (cx, cy, |achieved - planted| * area).
    """
    height, width = target.shape
    a, b = DIRECTIONS[direction % len(DIRECTIONS)]
    kmax = reach // 2 + 2
    k = np.repeat(np.arange(kmax + 1), len(_LATERAL))
    m_rank = np.tile(np.arange(len(_LATERAL)), kmax + 1)
    m = np.array(_LATERAL)[m_rank]
    best = _best_candidate(target, origin[0] + k * a - m * b, origin[1] + k * b + m * a, r, planted, (m_rank, k))
    if best[2] > 1.0:
        gy, gx = np.mgrid[-SUB : SUB + 1, -SUB : SUB + 1]
        dist = gx.ravel() ** 2 + gy.ravel() ** 2
        refined = _best_candidate(
            target, best[0] + gx.ravel(), best[1] + gy.ravel(), r, planted, (gx.ravel(), gy.ravel(), dist)
        )
        if refined[2] < best[2]:
            best = refined
    return best


def _best_candidate(target, cx, cy, r, planted, tiebreak) -> tuple[int, int, float]:
    height, width = target.shape
    ok = (cx - r >= 0) & (cy - r >= 0) & (cx + r <= SUB * width) & (cy + r <= SUB * height)
    if not ok.any():
        raise InfeasibleScene("no candidate position keeps the blob inside the image")
    cx, cy = cx[ok], cy[ok]
    keys = tuple(t[ok] for t in tiebreak)
    area, inter = _overlap_counts(target, cx, cy, r)
    err = np.where(area > 0, np.abs(inter - planted * area), np.inf)
    i = np.lexsort(keys + (err,))[0]
    return int(cx[i]), int(cy[i]), float(err[i])


# -- pseudo-random streams --------------------------------------------------


def _stream(*key: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence([int(v) for v in key]))


def _raw(bitgen: np.random.PCG64, n: int) -> np.ndarray:
    return bitgen.random_raw(n).astype(np.uint64)


def _unit(bitgen: np.random.PCG64, n: int = 1) -> np.ndarray:
    """Uniform doubles in [0, 1) from the top 53 bits of each raw draw."""
    return (_raw(bitgen, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _randint(bitgen: np.random.PCG64, lo: int, hi: int) -> int:
    """Integer in [lo, hi] (inclusive)."""
    return lo + int(_raw(bitgen, 1)[0] % np.uint64(hi - lo + 1))


def _noise(bitgen: np.random.PCG64, spec: NoiseSpec, shape: tuple[int, int]) -> np.ndarray | None:
    n = shape[0] * shape[1]
    if spec.kind == "gaussian" and spec.amplitude > 0:
        # Irwin-Hall(4) bell shape, bounded by the amplitude
        span = np.uint64(2 * spec.amplitude + 1)
        u = (_raw(bitgen, 4 * n) % span).astype(np.int64) - spec.amplitude
        s = u.reshape(4, n).sum(axis=0)
        return (np.sign(s) * (np.abs(s) // 4)).reshape(shape)
    if spec.kind == "salt_pepper" and spec.density > 0:
        u = _unit(bitgen, n).reshape(shape)
        out = np.zeros(shape, dtype=np.int64)
        out[u < spec.density / 2] = -1000
        out[(u >= spec.density / 2) & (u < spec.density)] = 1000
        return out
    return None


# -- scene generation -------------------------------------------------------


def generate(spec: SceneSpec, params: DecisionParams | None = None) -> tuple[ChannelSet, GroundTruth]:
    params = params or DecisionParams()
    width, height = spec.dims
    if width < 1 or height < 1:
        raise InfeasibleScene(f"invalid dims {width}x{height}")
    for name in ("background",):
        if not 0 <= getattr(spec, name) <= 255:
            raise InfeasibleScene(f"{name} intensity must lie in [0, 255]")

    shape = (height, width)
    bg = spec.background
    layers = {k: np.full(shape, bg, dtype=np.int64) for k in ("ck", "dapi", "cd45")}
    ck_full = np.zeros(shape, dtype=bool)
    cd45_full = np.zeros(shape, dtype=bool)

    def paint(layer: str, cx: int, cy: int, r: int, intensity: int, what: str) -> np.ndarray:
        if not 0 <= intensity <= 255:
            raise InfeasibleScene(f"{what}: intensity {intensity} outside [0, 255]")
        if r <= 0:
            raise InfeasibleScene(f"{what}: radius must be > 0")
        if not _fits(cx, cy, r, width, height):
            raise InfeasibleScene(f"{what} does not fit inside the {width}x{height} image")
        m = disc_mask(width, height, cx, cy, r)
        np.maximum(layers[layer], np.where(m, intensity, 0), out=layers[layer])
        return m

    ck_centers = []
    for i, d in enumerate(spec.ck_blobs):
        cx, cy, r = _q(d.center[0]), _q(d.center[1]), _q(d.radius)
        ck_full |= paint("ck", cx, cy, r, d.intensity, f"ck blob {i}")
        ck_centers.append((cx, cy, r))
    for i, d in enumerate(spec.cd45_blobs):
        cd45_full |= paint("cd45", _q(d.center[0]), _q(d.center[1]), _q(d.radius), d.intensity, f"cd45 blob {i}")

    dapi_masks = []
    for i, b in enumerate(spec.dapi_blobs):
        what = f"dapi blob {i}"
        r = _q(b.radius)
        if b.planted_ck_overlap is not None and not 0.0 <= b.planted_ck_overlap <= 1.0:
            raise InfeasibleScene(f"{what}: planted_ck_overlap outside [0, 1]")
        if not 0.0 <= b.planted_cd45_overlap <= 1.0:
            raise InfeasibleScene(f"{what}: planted_cd45_overlap outside [0, 1]")
        if b.center is not None:
            cx, cy = _q(b.center[0]), _q(b.center[1])
        else:
            if b.planted_ck_overlap is None:
                raise InfeasibleScene(f"{what}: needs a center or a planted_ck_overlap")
            if not 0 <= b.anchor < len(ck_centers):
                raise InfeasibleScene(f"{what}: anchor {b.anchor} names no ck blob")
            ax, ay, ar = ck_centers[b.anchor]
            cx, cy, err = _solve_center(ck_full, (ax, ay), ar + r + 2 * SUB, r, b.planted_ck_overlap, b.direction)
            area = int(disc_mask(width, height, cx, cy, r).sum())
            if err > 1.0 + 1e-9:
                raise InfeasibleScene(
                    f"{what}: ck overlap {b.planted_ck_overlap} unreachable "
                    f"(best is off by {err:.1f} of {area} px)"
                )
        m = paint("dapi", cx, cy, r, b.intensity, what)
        for j, other in enumerate(dapi_masks):
            if _touching(m, other):
                raise InfeasibleScene(f"{what} touches dapi blob {j}")
        dapi_masks.append(m)

        if b.planted_cd45_overlap > 0:
            cr = _q(b.cd45_radius if b.cd45_radius is not None else b.radius * 1.25)
            cdir = b.cd45_direction if b.cd45_direction is not None else b.direction + 2
            target = m
            ccx, ccy, err = _solve_cd45(target, cd45_full, (cx, cy), r + cr + 2 * SUB, cr, b.planted_cd45_overlap, cdir)
            if err > 1.0 + 1e-9:
                raise InfeasibleScene(f"{what}: cd45 overlap {b.planted_cd45_overlap} unreachable")
            cd45_full |= paint("cd45", ccx, ccy, cr, b.cd45_intensity, f"{what} cd45 disc")

    # flare, noise, clip
    if spec.flare is not None:
        fl = spec.flare
        n = width if fl.axis == "x" else height
        ramp = (fl.strength * np.arange(n, dtype=np.int64)) // max(n - 1, 1)
        ramp2d = ramp[None, :] if fl.axis == "x" else ramp[:, None]
        for name in fl.layers:
            layers[name] = layers[name] + ramp2d
    for li, name in enumerate(("ck", "dapi", "cd45")):
        noise = _noise(_stream(spec.seed, li), spec.noise, shape)
        if noise is not None:
            layers[name] = layers[name] + noise
    images = {k: GrayImage(np.clip(v, 0, 255).astype(np.uint8)) for k, v in layers.items()}
    x = ChannelSet(sample_id=spec.sample_id, **images)

    ck_mask, cd45_mask = BinaryMask(ck_full), BinaryMask(cd45_full)
    truths = []
    for b, m in zip(spec.dapi_blobs, dapi_masks):
        c = BinaryMask(m)
        ck_o = overlap_fraction(ck_mask, c)
        cd_o = overlap_fraction(cd45_mask, c)
        truths.append(
            DapiTruth(
                mask=c,
                ck_overlap=ck_o,
                cd45_overlap=cd_o,
                planted_ck_overlap=b.planted_ck_overlap,
                planted_cd45_overlap=b.planted_cd45_overlap,
                is_ctc=decide(ck_o, cd_o, params, bool(ck_full.any())),
                label=b.label,
            )
        )
    return x, GroundTruth(tuple(truths), ck_mask, cd45_mask, params)


def _touching(a: np.ndarray, b: np.ndarray) -> bool:
    """True when two masks overlap or are 8-adjacent."""
    from scipy import ndimage

    return bool((ndimage.binary_dilation(a, structure=np.ones((3, 3), bool)) & b).any())


def _solve_cd45(dapi: np.ndarray, cd45_existing: np.ndarray, origin, reach, r, planted, direction):
    # The fraction is measured on the DAPI disc, so the search target is
    # the DAPI mask and the disc being moved is the CD45 one.  Overlap of a
    # CD45 candidate with the nucleus: |cd45_disc & dapi| / |dapi|.
    height, width = dapi.shape
    area = int(dapi.sum())
    a, b = DIRECTIONS[direction % len(DIRECTIONS)]
    best = None
    kmax = reach // 2 + 2
    base = cd45_existing & dapi
    for k in range(kmax + 1):
        for m_rank, m in enumerate(_LATERAL):
            cx = origin[0] + k * a - m * b
            cy = origin[1] + k * b + m * a
            if not _fits(cx, cy, r, width, height):
                continue
            inter = int((base | (disc_mask(width, height, cx, cy, r) & dapi)).sum())
            err = abs(inter - planted * area)
            key = (err, k, m_rank)
            if best is None or key < best[0]:
                best = (key, cx, cy)
        if best is not None and best[0][0] == 0.0:
            break
    if best is None:
        raise InfeasibleScene("no cd45 position fits inside the image")
    return best[1], best[2], best[0][0]


# -- batches ----------------------------------------------------------------

NEGATIVE_KINDS = ("no_ck", "no_dapi", "low_ck", "cd45")
# negative kind mix, loosely following the reported 130/170/120 stage fallout
NEGATIVE_WEIGHTS = (0.31, 0.40, 0.145, 0.145)


@dataclass(frozen=True)
class BatchParams:
    dims: tuple[int, int] = (112, 112)
    background: int = 20
    ck_intensity: int = 160
    dapi_intensity: int = 240
    cd45_intensity: int = 140
    ck_radius: tuple[int, int] = (11, 15)
    dapi_radius: tuple[int, int] = (5, 7)
    margin: float = 0.06
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    flare: FlareSpec | None = None
    negative_kinds: tuple[str, ...] = NEGATIVE_KINDS
    negative_weights: tuple[float, ...] = NEGATIVE_WEIGHTS


PRESETS = {
    "paper-train-shape": dict(n=46, n_positive=36),
    "paper-test-shape": dict(n=420, n_positive=0),
    "acceptance": dict(n=200, n_positive=100),
}


def recommended_padding(bp: BatchParams) -> int:
    """Crop padding that keeps every planted nucleus inside its CK crop."""
    return 2 * bp.dapi_radius[1] + 2


def _uniform(bitgen, lo: float, hi: float) -> float:
    return lo + (hi - lo) * float(_unit(bitgen)[0])


def sample_scene(
    index: int,
    positive: bool,
    seed: int,
    bp: BatchParams = BatchParams(),
    params: DecisionParams = DecisionParams(),
) -> tuple[SceneSpec, str]:
    """Draw the scene for sample ``index``; returns (spec, kind)."""
    g = _stream(seed, index, 99)
    width, height = bp.dims
    r1, r2, mg = params.r1, params.r2, bp.margin

    if positive:
        kind = "positive"
    else:
        u = float(_unit(g)[0])
        weights = np.cumsum(bp.negative_weights) / np.sum(bp.negative_weights)
        kind = bp.negative_kinds[int(np.searchsorted(weights, u, side="right"))]

    ck_r = _randint(g, *bp.ck_radius)
    dapi_r = _randint(g, *bp.dapi_radius)
    jitter = 3
    cx = width / 2 + _randint(g, -jitter, jitter)
    cy = height / 2 + _randint(g, -jitter, jitter)
    direction = _randint(g, 0, len(DIRECTIONS) - 1)

    ck = (Disc((cx, cy), ck_r, bp.ck_intensity),)
    dapi: tuple[DapiBlob, ...] = ()
    cd45: tuple[Disc, ...] = ()

    def nucleus(ck_o: float, cd_o: float, label: bool) -> DapiBlob:
        return DapiBlob(
            radius=dapi_r,
            intensity=bp.dapi_intensity,
            planted_ck_overlap=round(ck_o, 4),
            planted_cd45_overlap=round(cd_o, 4),
            direction=direction,
            cd45_intensity=bp.cd45_intensity,
            label=label,
        )

    if kind == "positive":
        cd_o = 0.0 if _unit(g)[0] < 0.5 else _uniform(g, 0.02, max(r2 - mg, 0.02))
        dapi = (nucleus(_uniform(g, min(r1 + mg, 1.0), 1.0), cd_o, True),)
    elif kind == "low_ck":
        dapi = (nucleus(_uniform(g, 0.0, max(r1 - mg, 0.0)), 0.0, False),)
    elif kind == "cd45":
        dapi = (nucleus(_uniform(g, min(r1 + mg, 1.0), 1.0), _uniform(g, min(r2 + mg, 1.0), 1.0), False),)
    elif kind == "no_ck":
        ck = ()
        dapi = (DapiBlob(radius=dapi_r, intensity=bp.dapi_intensity, center=(cx, cy), label=False),)
        cd45 = (Disc((cx + dapi_r + 2, cy), dapi_r + 1, bp.cd45_intensity),)
    elif kind == "no_dapi":
        pass
    else:
        raise InfeasibleScene(f"unknown sample kind {kind!r}")

    spec = SceneSpec(
        seed=int(np.random.SeedSequence([seed, index]).generate_state(1)[0]),
        dims=bp.dims,
        ck_blobs=ck,
        dapi_blobs=dapi,
        cd45_blobs=cd45,
        noise=bp.noise,
        flare=bp.flare,
        background=bp.background,
        sample_id=f"sample_{index:04d}",
    )
    return spec, kind


def positive_indices(n: int, n_positive: int, seed: int) -> set[int]:
    """Deterministic choice of which samples are positive (Fisher-Yates)."""
    g = _stream(seed, 0xC7C)
    idx = list(range(n))
    for i in range(n - 1, 0, -1):
        j = _randint(g, 0, i)
        idx[i], idx[j] = idx[j], idx[i]
    return set(idx[:n_positive])


def iter_batch(
    n: int,
    n_positive: int,
    seed: int,
    bp: BatchParams = BatchParams(),
    params: DecisionParams = DecisionParams(),
):
    """Yield (spec, kind, channels, truth) for each sample of a batch."""
    if n < 1:
        raise InfeasibleScene(f"batch size must be >= 1, got {n}")
    if bp.dims[0] < 1 or bp.dims[1] < 1:
        raise InfeasibleScene(f"invalid dims {bp.dims[0]}x{bp.dims[1]}")
    if not 0 <= n_positive <= n:
        raise InfeasibleScene(f"n_positive must lie in [0, {n}], got {n_positive}")
    pos = positive_indices(n, n_positive, seed)
    for i in range(n):
        spec, kind = sample_scene(i, i in pos, seed, bp, params)
        try:
            x, gt = generate(spec, params)
        except InfeasibleScene as e:
            raise InfeasibleScene(f"sample {i}: {e}") from None
        yield spec, kind, x, gt


def generate_batch(
    n: int,
    out_dir: str | Path,
    seed: int = 0,
    n_positive: int = 0,
    bp: BatchParams = BatchParams(),
    params: DecisionParams = DecisionParams(),
) -> dict:
    """Write ``n`` sample directories plus ``manifest.json``; returns the manifest."""
    from .storage import MANIFEST, write_sample_dir

    out = Path(out_dir)
    samples = []
    for i, (spec, kind, x, gt) in enumerate(iter_batch(n, n_positive, seed, bp, params)):
        try:
            write_sample_dir(out / spec.sample_id, x)
        except OSError as e:
            raise OSError(f"sample {i}: {e}") from e
        samples.append(
            {
                "sample_id": spec.sample_id,
                "label": gt.is_positive,
                "kind": kind,
                "dapi": [
                    {
                        "planted_ck_overlap": t.planted_ck_overlap,
                        "planted_cd45_overlap": t.planted_cd45_overlap,
                        "ck_overlap": t.ck_overlap,
                        "cd45_overlap": t.cd45_overlap,
                        "is_ctc": t.is_ctc,
                        "label": t.label,
                    }
                    for t in gt.dapi
                ],
            }
        )
    manifest = {
        "seed": seed,
        "n": n,
        "n_positive": sum(s["label"] for s in samples),
        "params": params.to_dict(),
        "recommended_padding": recommended_padding(bp),
        "batch_params": _jsonable(asdict(bp)),
        "samples": samples,
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    return o


def calibration_records(manifest: dict) -> list[tuple[float, float, bool]]:
    """(ck_overlap, cd45_overlap, label) per nucleus with an intended class."""
    rows = []
    for s in manifest["samples"]:
        for t in s["dapi"]:
            if t.get("label") is not None:
                rows.append((t["ck_overlap"], t["cd45_overlap"], bool(t["label"])))
    return rows


def spec_from_json(text: str) -> SceneSpec:
    return SceneSpec.from_dict(json.loads(text))

