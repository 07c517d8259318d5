"""Hyperparameter sweeps: repeated searches along one axis, CSV out.

Mirrors the two published studies at desk scale: exponentially growing ant
counts and a greediness grid, several independent trials per value.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .engine import RunConfig, SearchResult, SelectionParams, search
from .errors import ConfigError
from .space import SearchSpace, default_space

SWEEP_AXES = ("ant_count", "greediness")
SWEEP_HEADER = ["value", "trial", "best_score", "evaluations", "wall_ms"]
DEFAULT_TRIALS = 5


@dataclass
class SweepRow:
    value: float
    trial: int
    best_score: float
    evaluations: int
    wall_ms: float
    error: Optional[str] = None


def apply_axis(config: RunConfig, axis: str, value) -> RunConfig:
    if axis == "ant_count":
        if not isinstance(value, int) or value < 1:
            raise ConfigError("ant_count", f"sweep values must be integers >= 1, got {value!r}")
        return replace(config, ant_count=value)
    if axis == "greediness":
        return replace(
            config,
            selection=SelectionParams(greediness=float(value), beta=config.selection.beta),
        )
    raise ConfigError("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")


def run_sweep(
    config: RunConfig,
    axis: str,
    values: Sequence,
    trials: int = DEFAULT_TRIALS,
    space: Optional[SearchSpace] = None,
    evaluator_factory=None,
) -> list[SweepRow]:
    """One search per (value, trial); trial t runs with seed config.seed + t.

    Per-run failures are recorded in the row and the sweep keeps going.
    """
    if trials < 1:
        raise ConfigError("trials", f"must be at least 1, got {trials}")
    space = space or default_space()
    rows: list[SweepRow] = []
    for value in values:
        swept = apply_axis(config, axis, value)
        for trial in range(trials):
            trial_config = replace(swept, seed=config.seed + trial)
            started = time.perf_counter()
            try:
                evaluator = evaluator_factory(trial_config) if evaluator_factory else None
                result: SearchResult = search(trial_config, evaluator=evaluator, space=space)
                rows.append(
                    SweepRow(
                        value=value,
                        trial=trial,
                        best_score=result.best.accuracy,
                        evaluations=result.evaluations,
                        wall_ms=(time.perf_counter() - started) * 1000.0,
                    )
                )
            except Exception as exc:  # noqa: BLE001 - sweep must survive bad runs
                rows.append(
                    SweepRow(
                        value=value,
                        trial=trial,
                        best_score=0.0,
                        evaluations=0,
                        wall_ms=(time.perf_counter() - started) * 1000.0,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow(
            [row.value, row.trial, f"{row.best_score:.6f}", row.evaluations, f"{row.wall_ms:.3f}"]
        )


def sweep_to_file(rows: Sequence[SweepRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        write_sweep_csv(rows, fh)
