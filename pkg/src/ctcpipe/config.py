"""Run configuration, validated before any sample is touched."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .decision import DecisionParams
from .detectors import DetectorBinding, Stage
from .pipeline import PipelineConfig, StageBindings
from .segmentation import ClassicalDetectorConfig, SizeFilter


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class BindingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["classical", "external"] = "classical"
    endpoint: Optional[str] = None
    concurrency_safe: bool = False
    timeout_s: float = Field(60.0, gt=0)

    @model_validator(mode="after")
    def _endpoint_required(self) -> BindingConfig:
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external binding requires an endpoint")
        return self

    def to_binding(self, stage: Stage) -> DetectorBinding:
        if self.kind == "classical":
            return DetectorBinding.classical(stage)
        return DetectorBinding("external", stage, self.endpoint, self.concurrency_safe, self.timeout_s)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage1: BindingConfig = Field(default_factory=BindingConfig)
    stage2: BindingConfig = Field(default_factory=BindingConfig)
    r1: float = Field(0.17, ge=0.0, le=1.0)
    r2: float = Field(0.2, ge=0.0, le=1.0)
    semantics: Literal["exclusionary", "paper_literal"] = "exclusionary"
    min_diameter_um: float = Field(5.0, ge=0.0)
    microns_per_pixel: Optional[float] = Field(None, gt=0.0)
    padding: int = Field(0, ge=0)
    dapi_score_threshold: float = Field(0.9, ge=0.0, le=1.0)
    min_contrast: float = Field(20.0, ge=0.0, le=255.0)
    min_separation: float = Field(4.0, ge=0.0)
    cd45_mode: Literal["crop", "layer"] = "crop"
    workers: int = Field(1, ge=1, le=256)
    min_ctc_count: int = Field(1, ge=1)

    @field_validator("semantics", mode="before")
    @classmethod
    def _dash_alias(cls, v: Any) -> Any:
        return v.replace("-", "_") if isinstance(v, str) else v

    def decision_params(self) -> DecisionParams:
        return DecisionParams(self.r1, self.r2, self.semantics)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            classical=ClassicalDetectorConfig(
                size_filter=SizeFilter(self.min_diameter_um, self.microns_per_pixel),
                dapi_score_threshold=self.dapi_score_threshold,
                min_contrast=self.min_contrast,
                min_separation=self.min_separation,
            ),
            padding=self.padding,
            cd45_mode=self.cd45_mode,
            min_ctc_count=self.min_ctc_count,
        )

    def bindings(self) -> StageBindings:
        return StageBindings(self.stage1.to_binding(Stage.STAGE1_CK), self.stage2.to_binding(Stage.STAGE2_DAPI))


def _problems(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        out.append(f"{loc}: {e['msg']} (got {e.get('input')!r})")
    return out


def build_config(*layers: dict[str, Any]) -> RunConfig:
    """Merge dicts left to right (``None`` values skipped) and validate."""
    merged: dict[str, Any] = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(_problems(e)) from None


def read_json_object(path: str | Path, what: str) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError([f"{what} {path}: {e}"]) from None
    if not isinstance(data, dict):
        raise ConfigError([f"{what} {path}: expected a JSON object"])
    return data


def read_params_file(path: str | Path) -> dict[str, Any]:
    """r1/r2/semantics from a file written by ``ctcpipe calibrate``."""
    data = read_json_object(path, "params file")
    return {k: data[k] for k in ("r1", "r2", "semantics") if k in data}
