"""FastAPI application: submit searches and sweeps, poll status, fetch bests.

Searches run on background threads (the engine itself stays strictly
sequential per run); the in-memory job registry is process-local.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..engine import RunConfig, SearchResult, best_json_dict, build_evaluator, search
from ..errors import AntSearchError, ConfigError, DescriptorError
from ..evaluation import LandscapeSpec, ReuseHint, SyntheticEvaluator
from ..space import canonical_string, default_space, deserialize
from ..sweep import SweepRow, apply_axis, run_sweep
from .schemas import (
    BestResponse,
    EvaluateRequest,
    HealthResponse,
    MetricsResponse,
    RoundProgress,
    RunCreated,
    RunRequest,
    RunStatus,
    SweepRequest,
    SweepRowModel,
    SweepStatus,
    ValidateRequest,
    ValidateResponse,
)

app = FastAPI(
    title="antsearch",
    description="Ant colony search over progressively deepening architecture graphs",
    version=__version__,
)

_space = default_space()


@dataclass
class _RunJob:
    run_id: str
    config: RunConfig
    out_dir: Optional[Path]
    state: str = "pending"
    progress: list[RoundProgress] = field(default_factory=list)
    result: Optional[SearchResult] = None
    error: Optional[str] = None
    thread: Optional[threading.Thread] = None


@dataclass
class _SweepJob:
    sweep_id: str
    state: str = "pending"
    rows: list[SweepRow] = field(default_factory=list)
    error: Optional[str] = None
    thread: Optional[threading.Thread] = None


_runs: dict[str, _RunJob] = {}
_sweeps: dict[str, _SweepJob] = {}
_lock = threading.Lock()


def _run_job(job: _RunJob) -> None:
    job.state = "running"

    def on_round(round_index: int, incumbent) -> None:
        descriptor = incumbent.to_descriptor(_space, job.config.input_shape)
        job.progress.append(
            RoundProgress(
                round=round_index,
                best_score=incumbent.accuracy,
                best_architecture=canonical_string(descriptor, _space),
            )
        )

    evaluator = None
    try:
        evaluator = build_evaluator(job.config, _space)
        job.result = search(
            job.config,
            evaluator=evaluator,
            space=_space,
            out_dir=job.out_dir,
            on_round=on_round,
        )
        job.state = "finished"
    except Exception as exc:  # noqa: BLE001 - job must record any failure
        job.error = f"{type(exc).__name__}: {exc}"
        job.state = "failed"
    finally:
        close = getattr(evaluator, "close", None)
        if close is not None:
            close()


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(version=__version__)


@app.post("/descriptors/validate", response_model=ValidateResponse)
def validate_descriptor(request: ValidateRequest) -> ValidateResponse:
    try:
        descriptor = deserialize(request.descriptor)
    except DescriptorError as exc:
        return ValidateResponse(valid=False, rule="schema", message=str(exc))
    verdict = _space.validate(descriptor)
    return ValidateResponse(
        valid=verdict.ok,
        position=verdict.position,
        rule=verdict.rule,
        message=verdict.message,
    )


@app.post("/landscapes/evaluate", response_model=MetricsResponse)
def evaluate_on_landscape(request: EvaluateRequest) -> MetricsResponse:
    try:
        landscape = LandscapeSpec.from_json_dict(request.landscape)
        descriptor = deserialize(request.descriptor)
    except (ValueError, KeyError, DescriptorError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    verdict = _space.validate(descriptor)
    if not verdict:
        raise HTTPException(
            status_code=422,
            detail=f"invalid descriptor: {verdict.rule} at {verdict.position}: {verdict.message}",
        )
    metrics = SyntheticEvaluator(landscape, _space).evaluate(descriptor, ReuseHint())
    return MetricsResponse(
        accuracy=metrics.accuracy,
        loss=metrics.loss,
        wall_ms=metrics.wall_ms,
        reused_prefix_len=metrics.reused_prefix_len,
    )


@app.post("/runs", response_model=RunCreated, status_code=201)
def create_run(request: RunRequest) -> RunCreated:
    try:
        config = RunConfig.from_json_dict(request.config)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    run_id = uuid.uuid4().hex[:12]
    job = _RunJob(
        run_id=run_id,
        config=config,
        out_dir=Path(request.out_dir) if request.out_dir else None,
    )
    with _lock:
        _runs[run_id] = job
    job.thread = threading.Thread(target=_run_job, args=(job,), daemon=True)
    job.thread.start()
    return RunCreated(run_id=run_id)


@app.get("/runs", response_model=list[RunStatus])
def list_runs() -> list[RunStatus]:
    with _lock:
        jobs = list(_runs.values())
    return [_status(job) for job in jobs]


def _get_run(run_id: str) -> _RunJob:
    with _lock:
        job = _runs.get(run_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"no run {run_id}")
    return job


def _status(job: _RunJob) -> RunStatus:
    return RunStatus(
        run_id=job.run_id,
        state=job.state,
        config=job.config.to_json_dict(),
        rounds_completed=len(job.progress),
        evaluations=job.result.evaluations if job.result else
        len(job.progress) * job.config.ant_count,
        progress=job.progress,
        error=job.error,
    )


@app.get("/runs/{run_id}", response_model=RunStatus)
def run_status(run_id: str) -> RunStatus:
    return _status(_get_run(run_id))


@app.get("/runs/{run_id}/best", response_model=BestResponse)
def run_best(run_id: str) -> BestResponse:
    job = _get_run(run_id)
    if job.state == "failed":
        raise HTTPException(status_code=409, detail=f"run failed: {job.error}")
    if job.result is None:
        raise HTTPException(status_code=409, detail=f"run is {job.state}; best not available yet")
    return BestResponse(**best_json_dict(job.result, _space))


def _run_sweep_job(job: _SweepJob, config: RunConfig, axis: str, values, trials: int) -> None:
    job.state = "running"
    try:
        job.rows = run_sweep(config, axis, values, trials=trials, space=_space)
        job.state = "finished"
    except Exception as exc:  # noqa: BLE001
        job.error = f"{type(exc).__name__}: {exc}"
        job.state = "failed"


@app.post("/sweeps", response_model=SweepStatus, status_code=201)
def create_sweep(request: SweepRequest) -> SweepStatus:
    try:
        config = RunConfig.from_json_dict(request.config)
        values = (
            [int(v) for v in request.values] if request.axis == "ant_count" else request.values
        )
        for value in values:
            apply_axis(config, request.axis, value)
    except (ConfigError, AntSearchError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    sweep_id = uuid.uuid4().hex[:12]
    job = _SweepJob(sweep_id=sweep_id)
    with _lock:
        _sweeps[sweep_id] = job
    job.thread = threading.Thread(
        target=_run_sweep_job, args=(job, config, request.axis, values, request.trials), daemon=True
    )
    job.thread.start()
    return _sweep_status(job)


@app.get("/sweeps/{sweep_id}", response_model=SweepStatus)
def sweep_status(sweep_id: str) -> SweepStatus:
    with _lock:
        job = _sweeps.get(sweep_id)
    if job is None:
        raise HTTPException(status_code=404, detail=f"no sweep {sweep_id}")
    return _sweep_status(job)


def _sweep_status(job: _SweepJob) -> SweepStatus:
    return SweepStatus(
        sweep_id=job.sweep_id,
        state=job.state,
        rows=[
            SweepRowModel(
                value=row.value,
                trial=row.trial,
                best_score=row.best_score,
                evaluations=row.evaluations,
                wall_ms=row.wall_ms,
                error=row.error,
            )
            for row in job.rows
        ],
        error=job.error,
    )
