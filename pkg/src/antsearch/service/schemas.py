"""Pydantic request/response models for the HTTP API."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ValidateRequest(BaseModel):
    descriptor: Dict[str, Any] = Field(..., description="Architecture descriptor JSON")


class ValidateResponse(BaseModel):
    valid: bool
    position: Optional[int] = None
    rule: Optional[str] = None
    message: str = ""


class EvaluateRequest(BaseModel):
    landscape: Dict[str, Any] = Field(..., description="Landscape spec JSON")
    descriptor: Dict[str, Any]


class MetricsResponse(BaseModel):
    accuracy: float = Field(..., ge=0.0, le=1.0)
    loss: Optional[float] = None
    wall_ms: float = 0.0
    reused_prefix_len: int = 0


class RunRequest(BaseModel):
    config: Dict[str, Any] = Field(
        default_factory=dict, description="Same JSON schema as the CLI config file"
    )
    out_dir: Optional[str] = Field(
        default=None, description="Directory for checkpoints/stats; omit to keep results in memory"
    )


class RunCreated(BaseModel):
    run_id: str


class RoundProgress(BaseModel):
    round: int
    best_score: float
    best_architecture: str


class RunStatus(BaseModel):
    run_id: str
    state: str = Field(..., description="pending | running | finished | failed")
    config: Dict[str, Any]
    rounds_completed: int = 0
    evaluations: int = 0
    progress: List[RoundProgress] = Field(default_factory=list)
    error: Optional[str] = None


class BestResponse(BaseModel):
    descriptor: Dict[str, Any]
    canonical: str
    score: float
    config: Dict[str, Any]
    seed: int


class SweepRequest(BaseModel):
    config: Dict[str, Any] = Field(default_factory=dict)
    axis: str
    values: List[float]
    trials: int = 5


class SweepRowModel(BaseModel):
    value: float
    trial: int
    best_score: float
    evaluations: int
    wall_ms: float
    error: Optional[str] = None


class SweepStatus(BaseModel):
    sweep_id: str
    state: str
    rows: List[SweepRowModel] = Field(default_factory=list)
    error: Optional[str] = None
