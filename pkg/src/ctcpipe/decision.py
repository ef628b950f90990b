"""Stage-3 decision rule, confidence score and (r1, r2) calibration.

Two readings of the CD45 test are supported:

``exclusionary`` (default)
    A candidate is a CTC when its CK overlap is above ``r1`` and its CD45
    overlap is at most ``r2``: CD45 on the nucleus rules a CTC out.  The
    confidence uses ``1 - p(CD45|C)`` as the CD45 factor.

``paper_literal``
    The published pseudo-code: reject when CK overlap is below ``r1``,
    otherwise accept only when CD45 overlap exceeds ``r2``.  An empty CK
    mask rejects.  The confidence is the printed five-factor product.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .raster import BinaryMask, mask_area, mask_intersection_area

DEFAULT_R1 = 0.17
DEFAULT_R2 = 0.2


class Semantics(str, enum.Enum):
    EXCLUSIONARY = "exclusionary"
    PAPER_LITERAL = "paper_literal"

    @classmethod
    def parse(cls, value: str | Semantics) -> Semantics:
        if isinstance(value, Semantics):
            return value
        return cls(value.replace("-", "_"))


class DegenerateCandidate(ValueError):
    """Candidate mask has zero area, so overlap fractions are undefined."""


class Uncalibratable(ValueError):
    pass


@dataclass(frozen=True)
class DecisionParams:
    r1: float = DEFAULT_R1
    r2: float = DEFAULT_R2
    cd45_semantics: Semantics = Semantics.EXCLUSIONARY

    def __post_init__(self) -> None:
        object.__setattr__(self, "cd45_semantics", Semantics.parse(self.cd45_semantics))
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "semantics": self.cd45_semantics.value}


@dataclass(frozen=True)
class ConfidenceBreakdown:
    p_ck: float
    p_c: float
    p_ck_given_c: float
    p_cd45_given_c: float
    p_cd45: float = 1.0
    confidence: float = field(default=float("nan"))


@dataclass(frozen=True)
class Verdict:
    candidate_id: str
    is_ctc: bool
    breakdown: ConfidenceBreakdown
    params_used: DecisionParams
    ck_present: bool = True

    @property
    def overlaps(self) -> tuple[float, float]:
        return (self.breakdown.p_ck_given_c, self.breakdown.p_cd45_given_c)

    def is_consistent(self) -> bool:
        """Recompute the decision from stored overlaps and parameters."""
        ck, cd45 = self.overlaps
        return decide(ck, cd45, self.params_used, self.ck_present) == self.is_ctc


def overlap_fraction(target: BinaryMask, candidate: BinaryMask) -> float:
    """Fraction of the candidate's pixels that are also in ``target``."""
    area = mask_area(candidate)
    if area == 0:
        raise DegenerateCandidate("candidate mask is empty")
    return mask_intersection_area(target, candidate) / area


def decide(
    p_ck_given_c: float,
    p_cd45_given_c: float,
    params: DecisionParams = DecisionParams(),
    ck_present: bool = True,
) -> bool:
    if params.cd45_semantics is Semantics.EXCLUSIONARY:
        return p_ck_given_c > params.r1 and p_cd45_given_c <= params.r2
    if not ck_present or p_ck_given_c < params.r1:
        return False
    return p_cd45_given_c > params.r2


def confidence_score(
    p_c: float,
    p_ck: float,
    p_ck_given_c: float,
    p_cd45_given_c: float,
    p_cd45: float = 1.0,
    semantics: Semantics | str = Semantics.EXCLUSIONARY,
) -> float:
    factors = (p_c, p_ck, p_ck_given_c, p_cd45_given_c, p_cd45)
    for v in factors:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"confidence factor {v!r} outside [0, 1]")
    cd45_factor = p_cd45_given_c
    if Semantics.parse(semantics) is Semantics.EXCLUSIONARY:
        cd45_factor = 1.0 - p_cd45_given_c
    return p_c * p_ck * p_ck_given_c * cd45_factor * p_cd45


def classify_candidate(
    c: BinaryMask,
    ck: BinaryMask,
    cd45: BinaryMask,
    params: DecisionParams = DecisionParams(),
    *,
    p_ck: float = 1.0,
    p_c: float = 1.0,
    candidate_id: str = "",
) -> Verdict:
    """Classify one nucleus mask against aligned CK and CD45 masks.

    ``p_ck`` and ``p_c`` are the Stage-1 and Stage-2 detection scores.
    """
    ck_frac = overlap_fraction(ck, c)
    cd45_frac = overlap_fraction(cd45, c)
    ck_present = mask_area(ck) > 0
    p_cd45 = 1.0  # CD45 comes from thresholding
    conf = confidence_score(p_c, p_ck, ck_frac, cd45_frac, p_cd45, params.cd45_semantics)
    return Verdict(
        candidate_id=candidate_id,
        is_ctc=decide(ck_frac, cd45_frac, params, ck_present),
        breakdown=ConfidenceBreakdown(p_ck, p_c, ck_frac, cd45_frac, p_cd45, conf),
        params_used=params,
        ck_present=ck_present,
    )


# -- calibration ------------------------------------------------------------


def threshold_grid(step: float) -> np.ndarray:
    """The closed grid {0, step, 2*step, ...} up to 1."""
    if not 0.0 < step <= 0.5:
        raise ValueError(f"grid step must lie in (0, 0.5], got {step}")
    n = int(np.floor(1.0 / step + 1e-9))
    return np.array([round(k * step, 10) for k in range(n + 1)])


@dataclass(frozen=True)
class CalibrationResult:
    params: DecisionParams
    f1: float
    grid_step: float


def calibrate_thresholds(
    labeled: Iterable[tuple[float, float, bool]],
    grid_step: float = 0.01,
    semantics: Semantics | str = Semantics.EXCLUSIONARY,
) -> CalibrationResult:
    """Grid-search (r1, r2) maximizing F1 of the decision against labels.

    Ties go to the smallest r1, then the smallest r2.
    """
    rows = list(labeled)
    if not rows:
        raise Uncalibratable("no labeled records")
    semantics = Semantics.parse(semantics)
    ck = np.array([r[0] for r in rows], dtype=float)
    cd45 = np.array([r[1] for r in rows], dtype=float)
    y = np.array([bool(r[2]) for r in rows])
    if y.all() or not y.any():
        raise Uncalibratable("labels contain a single class; F1 is degenerate")

    grid = threshold_grid(grid_step)
    best: tuple[float, float, float] | None = None
    for r1 in grid:
        if semantics is Semantics.EXCLUSIONARY:
            ck_ok = ck > r1
            pred = ck_ok[None, :] & (cd45[None, :] <= grid[:, None])
        else:
            ck_ok = ck >= r1
            pred = ck_ok[None, :] & (cd45[None, :] > grid[:, None])
        tp = (pred & y).sum(axis=1)
        fp = (pred & ~y).sum(axis=1)
        fn = (~pred & y).sum(axis=1)
        f1 = _f1(tp, fp, fn)
        j = int(np.argmax(f1))  # first maximum -> smallest r2
        if best is None or f1[j] > best[0]:
            best = (float(f1[j]), float(r1), float(grid[j]))
    f1, r1, r2 = best
    return CalibrationResult(DecisionParams(r1, r2, semantics), f1, grid_step)


def _f1(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray) -> np.ndarray:
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def f1_score(predicted: Sequence[bool], labels: Sequence[bool]) -> float:
    p = np.asarray(predicted, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    tp, fp, fn = int((p & y).sum()), int((p & ~y).sum()), int((~p & y).sum())
    return float(_f1(np.array(tp), np.array(fp), np.array(fn)))
