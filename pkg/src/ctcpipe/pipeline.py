"""Batch orchestration of the three stages and the final decision.

For each sample: Stage 1 finds CK boxes on the CK layer; each box (grown
by ``padding``) crops the CK, DAPI and CD45 layers; Stage 2 finds nucleus
masks in the DAPI crop; Stage 3 thresholds the CK and CD45 crops and
classifies every nucleus.  Detector failures are recorded on the sample
and never abort the batch.
"""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

from .decision import ConfidenceBreakdown, DecisionParams, Verdict, classify_candidate
from .detectors import DetectorBinding, Stage, run_detector
from .raster import BinaryMask, ChannelSet, GrayImage, crop, crop_box, crop_mask
from .segmentation import ClassicalDetectorConfig
from .thresholding import DegenerateHistogram

logger = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    NO_CK = "no_ck_detected"
    NO_DAPI = "no_dapi_detected"
    EVALUATED = "evaluated"
    ERROR = "error"


class CD45Mode(str, enum.Enum):
    CROP = "crop"
    LAYER = "layer"


@dataclass(frozen=True)
class StageBindings:
    stage1: DetectorBinding = field(default_factory=lambda: DetectorBinding.classical(Stage.STAGE1_CK))
    stage2: DetectorBinding = field(default_factory=lambda: DetectorBinding.classical(Stage.STAGE2_DAPI))

    def __post_init__(self) -> None:
        if self.stage1.stage is not Stage.STAGE1_CK or self.stage2.stage is not Stage.STAGE2_DAPI:
            raise ValueError("stage1/stage2 bindings are attached to the wrong stages")


@dataclass(frozen=True)
class PipelineConfig:
    classical: ClassicalDetectorConfig = field(default_factory=ClassicalDetectorConfig)
    padding: int = 0
    cd45_mode: CD45Mode = CD45Mode.CROP
    min_ctc_count: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "cd45_mode", CD45Mode(self.cd45_mode))
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.min_ctc_count < 1:
            raise ValueError(f"min_ctc_count must be >= 1, got {self.min_ctc_count}")

    @property
    def dapi_score_threshold(self) -> float:
        return self.classical.dapi_score_threshold


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    outcome: Outcome
    verdicts: tuple[Verdict, ...] = ()
    sample_positive: bool = False
    timings: Mapping[str, float] = field(default_factory=dict, compare=False)
    error: str | None = None

    @property
    def n_ctc(self) -> int:
        return sum(v.is_ctc for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "outcome": self.outcome.value,
            "sample_positive": self.sample_positive,
            "verdicts": [_verdict_to_dict(v) for v in self.verdicts],
            "error": self.error,
            "timings_ms": {k: round(v * 1000.0, 3) for k, v in self.timings.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> SampleResult:
        return cls(
            sample_id=str(d["sample_id"]),
            outcome=Outcome(d["outcome"]),
            verdicts=tuple(_verdict_from_dict(v) for v in d.get("verdicts", ())),
            sample_positive=bool(d["sample_positive"]),
            timings={k: v / 1000.0 for k, v in (d.get("timings_ms") or {}).items()},
            error=d.get("error"),
        )


def _verdict_to_dict(v: Verdict) -> dict:
    b = v.breakdown
    return {
        "candidate_id": v.candidate_id,
        "is_ctc": v.is_ctc,
        "p_ck": b.p_ck,
        "p_c": b.p_c,
        "p_ck_given_c": b.p_ck_given_c,
        "p_cd45_given_c": b.p_cd45_given_c,
        "p_cd45": b.p_cd45,
        "confidence": b.confidence,
        "ck_present": v.ck_present,
        "params": v.params_used.to_dict(),
    }


def _verdict_from_dict(d: Mapping) -> Verdict:
    p = d["params"]
    return Verdict(
        candidate_id=d["candidate_id"],
        is_ctc=bool(d["is_ctc"]),
        breakdown=ConfidenceBreakdown(
            d["p_ck"], d["p_c"], d["p_ck_given_c"], d["p_cd45_given_c"], d["p_cd45"], d["confidence"]
        ),
        params_used=DecisionParams(p["r1"], p["r2"], p["semantics"]),
        ck_present=bool(d.get("ck_present", True)),
    )


def _threshold_or_empty(img: GrayImage, cfg: ClassicalDetectorConfig) -> BinaryMask:
    try:
        return cfg.binarize(img)
    except DegenerateHistogram:
        return BinaryMask.zeros(img.height, img.width)


def run_sample(
    x: ChannelSet,
    bindings: StageBindings | None = None,
    params: DecisionParams | None = None,
    cfg: PipelineConfig | None = None,
) -> SampleResult:
    """Run all stages on one sample.  Raises on detector failure."""
    bindings = bindings or StageBindings()
    params = params or DecisionParams()
    cfg = cfg or PipelineConfig()
    timings = {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0}

    t0 = time.perf_counter()
    ck_dets = run_detector(bindings.stage1, x.ck, cfg.classical)
    timings["stage1"] = time.perf_counter() - t0
    if not ck_dets:
        return SampleResult(x.sample_id, Outcome.NO_CK, timings=timings)

    cd45_layer = None
    if cfg.cd45_mode is CD45Mode.LAYER:
        cd45_layer = _threshold_or_empty(x.cd45, cfg.classical)

    verdicts: list[Verdict] = []
    any_dapi = False
    for i, ck_det in enumerate(ck_dets):
        box = crop_box(x.width, x.height, ck_det.bbox, cfg.padding)
        dapi_crop = crop(x.dapi, box)

        t0 = time.perf_counter()
        dapi_dets = run_detector(bindings.stage2, dapi_crop, cfg.classical)
        dapi_dets = [d for d in dapi_dets if d.score >= cfg.dapi_score_threshold]
        timings["stage2"] += time.perf_counter() - t0
        if not dapi_dets:
            continue
        any_dapi = True

        t0 = time.perf_counter()
        ck_crop = crop(x.ck, box)
        try:
            ck_mask = cfg.classical.binarize(ck_crop)
        except DegenerateHistogram:
            # flat CK crop: the detector's own extent is the best estimate
            if ck_det.mask is not None:
                ck_mask = crop_mask(ck_det.mask, box)
            else:
                ck_mask = BinaryMask.ones(box.h, box.w)
        if cd45_layer is not None:
            cd45_mask = crop_mask(cd45_layer, box)
        else:
            cd45_mask = _threshold_or_empty(crop(x.cd45, box), cfg.classical)
        for j, dapi_det in enumerate(dapi_dets):
            verdicts.append(
                classify_candidate(
                    dapi_det.mask,
                    ck_mask,
                    cd45_mask,
                    params,
                    p_ck=ck_det.score,
                    p_c=dapi_det.score,
                    candidate_id=f"{x.sample_id}/ck{i}/dapi{j}",
                )
            )
        timings["stage3"] += time.perf_counter() - t0

    if not any_dapi:
        return SampleResult(x.sample_id, Outcome.NO_DAPI, timings=timings)
    n_ctc = sum(v.is_ctc for v in verdicts)
    return SampleResult(
        x.sample_id,
        Outcome.EVALUATED,
        tuple(verdicts),
        sample_positive=n_ctc >= cfg.min_ctc_count,
        timings=timings,
    )


@dataclass(frozen=True)
class SampleSource:
    """A sample to be loaded lazily inside the worker."""

    sample_id: str
    load: Callable[[], ChannelSet]


Source = Union[ChannelSet, SampleSource]


def _process(src: Source, bindings, params, cfg) -> SampleResult:
    sample_id = src.sample_id
    try:
        x = src.load() if isinstance(src, SampleSource) else src
        return run_sample(x, bindings, params, cfg)
    except Exception as e:  # quarantine: one bad sample never stops the batch
        logger.warning("sample %s failed: %s", sample_id, e)
        return SampleResult(sample_id, Outcome.ERROR, error=f"{type(e).__name__}: {e}")


def run_batch(
    sources: Iterable[Source],
    bindings: StageBindings | None = None,
    params: DecisionParams | None = None,
    cfg: PipelineConfig | None = None,
    workers: int = 1,
) -> list[SampleResult]:
    """Process samples with a bounded worker pool; results keep input order."""
    bindings = bindings or StageBindings()
    params = params or DecisionParams()
    cfg = cfg or PipelineConfig()
    sources = list(sources)
    if workers <= 1:
        return [_process(s, bindings, params, cfg) for s in sources]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _process(s, bindings, params, cfg), sources))


# -- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class BatchReport:
    """Stage-fallout counts and accuracies over successfully processed samples.

    Samples that hit a stage error are excluded from ``n_samples`` and
    listed in ``error_ids``.
    """

    n_samples: int
    n_no_ck: int
    n_no_dapi: int
    n_evaluated: int
    n_predicted_positive: int
    n_predicted_negative: int
    n_errors: int = 0
    error_ids: tuple[str, ...] = ()
    accuracy: float | None = None
    stage3_accuracy: float | None = None
    n_correct: int | None = None
    n_stage3_correct: int | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["error_ids"] = list(self.error_ids)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> BatchReport:
        d = dict(d)
        d["error_ids"] = tuple(d.get("error_ids", ()))
        return cls(**d)


class EvaluationError(ValueError):
    pass


def evaluate_batch(
    results: Sequence[SampleResult],
    labels: Mapping[str, bool] | None = None,
) -> BatchReport:
    if not results:
        raise EvaluationError("empty batch")
    ids = [r.sample_id for r in results]
    if len(set(ids)) != len(ids):
        raise EvaluationError("duplicate sample ids in results")
    if labels is not None and set(labels) != set(ids):
        missing = sorted(set(ids) - set(labels))[:5]
        extra = sorted(set(labels) - set(ids))[:5]
        raise EvaluationError(f"labels do not match results (missing {missing}, unexpected {extra})")

    ok = [r for r in results if r.outcome is not Outcome.ERROR]
    errors = sorted(r.sample_id for r in results if r.outcome is Outcome.ERROR)
    counts = {o: 0 for o in Outcome}
    for r in ok:
        counts[r.outcome] += 1
    n_pos = sum(r.sample_positive for r in ok)

    accuracy = stage3 = None
    n_correct = n_s3_correct = None
    if labels is not None:
        n_correct = sum(r.sample_positive == bool(labels[r.sample_id]) for r in ok)
        evaluated = [r for r in ok if r.outcome is Outcome.EVALUATED]
        n_s3_correct = sum(r.sample_positive == bool(labels[r.sample_id]) for r in evaluated)
        accuracy = n_correct / len(ok) if ok else None
        stage3 = n_s3_correct / len(evaluated) if evaluated else None

    return BatchReport(
        n_samples=len(ok),
        n_no_ck=counts[Outcome.NO_CK],
        n_no_dapi=counts[Outcome.NO_DAPI],
        n_evaluated=counts[Outcome.EVALUATED],
        n_predicted_positive=n_pos,
        n_predicted_negative=len(ok) - n_pos,
        n_errors=len(errors),
        error_ids=tuple(errors),
        accuracy=accuracy,
        stage3_accuracy=stage3,
        n_correct=n_correct,
        n_stage3_correct=n_s3_correct,
    )


def top_verdicts(results: Iterable[SampleResult], k: int = 5) -> list[Verdict]:
    """The ``k`` CTC verdicts with the highest confidence."""
    pool = [v for r in results for v in r.verdicts if v.is_ctc]
    pool.sort(key=lambda v: (-v.breakdown.confidence, v.candidate_id))
    return pool[:k]

