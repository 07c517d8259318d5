"""Operator entry point: run and resume searches, sweep hyperparameters,
export results, or serve the HTTP API.

Every flag has a config-file equivalent; flags override file values.  The
effective configuration is echoed into best.json so a run can be reproduced
from its outputs alone.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path
from typing import Optional

import click

from .engine import (
    RunConfig,
    STATS_HEADER,
    best_json_dict,
    build_evaluator,
    load_checkpoint,
    search,
)
from .errors import AntSearchError, CheckpointError, ConfigError
from .space import default_space
from .sweep import DEFAULT_TRIALS, SWEEP_AXES, apply_axis, run_sweep, sweep_to_file

_CONFIG_FLAGS = {
    "seed": "--seed",
    "ants": "--ants",
    "max_depth": "--max-depth",
    "greediness": "--greediness",
    "beta": "--beta",
    "rho": "--rho",
    "alpha": "--alpha",
    "tau0": "--tau0",
    "evaluator": "--evaluator",
}


def _load_config(config_path: Optional[str], **overrides) -> RunConfig:
    data: dict = {}
    if config_path:
        try:
            data = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(data, dict):
            raise click.ClickException(f"config {config_path} must be a JSON object")
    renames = {"ants": "ant_count"}
    for key, value in overrides.items():
        if value is not None:
            data[renames.get(key, key)] = value
    try:
        return RunConfig.from_json_dict(data)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from None


class _StatsWriter:
    """Appends one CSV row per evaluated ant; header written once per file."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not path.exists() or path.stat().st_size == 0
        self._fh = open(path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(STATS_HEADER)

    def __call__(self, row: dict) -> None:
        self._writer.writerow(
            [
                row["round"],
                row["ant_index"],
                row["depth"],
                f"{row['score']:.6f}",
                row["architecture"],
                f"{row['wall_ms']:.3f}",
            ]
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _write_best(result, space, out_dir: Path) -> Path:
    best_path = out_dir / "best.json"
    best_path.write_text(json.dumps(best_json_dict(result, space), sort_keys=True, indent=2) + "\n")
    return best_path


def _close_remote(evaluator) -> None:
    close = getattr(evaluator, "close", None)
    if close is not None:
        close()


@click.group()
@click.version_option(package_name="antsearch")
def main() -> None:
    """Ant colony search over progressively deepening architecture graphs."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--seed", type=int, default=None)
@click.option("--ants", type=int, default=None, help="Ants per round.")
@click.option("--max-depth", "max_depth", type=int, default=None)
@click.option("--greediness", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--tau0", type=float, default=None)
@click.option("--evaluator", type=str, default=None,
              help="synthetic | exec:<command> | tcp:<host>:<port>")
@click.option("--out-dir", "out_dir", type=click.Path(), default="antsearch_run", show_default=True)
def run(config_path, out_dir, **overrides) -> None:
    """Run a search; writes per-round checkpoints, stats.csv, and best.json."""
    config = _load_config(config_path, **overrides)
    space = default_space()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = _StatsWriter(out / "stats.csv")
    evaluator = None
    try:
        evaluator = build_evaluator(config, space)
        result = search(config, evaluator=evaluator, space=space, out_dir=out, stats=stats)
    except AntSearchError as exc:
        raise click.ClickException(str(exc)) from None
    finally:
        stats.close()
        if evaluator is not None:
            _close_remote(evaluator)
    best_path = _write_best(result, space, out)
    click.echo(f"best score {result.best.accuracy:.6f} after {result.evaluations} evaluations")
    click.echo(f"wrote {best_path}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--out-dir", "out_dir", type=click.Path(), default=None,
              help="Defaults to the checkpoint's directory.")
def resume(checkpoint, out_dir) -> None:
    """Continue an interrupted run from a checkpoint file."""
    checkpoint_path = Path(checkpoint)
    out = Path(out_dir) if out_dir else checkpoint_path.parent
    space = default_space()
    try:
        state = load_checkpoint(checkpoint_path, space)
    except CheckpointError as exc:
        raise click.ClickException(str(exc)) from None
    if state.completed_rounds >= state.config.max_depth:
        click.echo("run already finished; nothing to resume")
        return
    stats = _StatsWriter(out / "stats.csv")
    evaluator = None
    try:
        evaluator = build_evaluator(state.config, space)
        result = search(
            state.config, evaluator=evaluator, space=space,
            out_dir=out, stats=stats, resume_state=state,
        )
    except AntSearchError as exc:
        raise click.ClickException(str(exc)) from None
    finally:
        stats.close()
        if evaluator is not None:
            _close_remote(evaluator)
    best_path = _write_best(result, space, out)
    click.echo(
        f"resumed after round {state.completed_rounds}; "
        f"best score {result.best.accuracy:.6f}"
    )
    click.echo(f"wrote {best_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True)
@click.option("--values", required=True,
              help="Comma-separated values, e.g. 1,2,4,8 or 0,0.25,0.5,0.75,1.0")
@click.option("--trials", type=int, default=DEFAULT_TRIALS, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--ants", type=int, default=None)
@click.option("--max-depth", "max_depth", type=int, default=None)
@click.option("--greediness", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--rho", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--tau0", type=float, default=None)
@click.option("--evaluator", type=str, default=None)
@click.option("--out-dir", "out_dir", type=click.Path(), default="antsearch_sweep",
              show_default=True)
def sweep(config_path, axis, values, trials, out_dir, **overrides) -> None:
    """Sweep one hyperparameter axis; emits sweep.csv."""
    config = _load_config(config_path, **overrides)
    try:
        if axis == "ant_count":
            parsed = [int(v) for v in values.split(",") if v.strip()]
        else:
            parsed = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise click.ClickException(f"cannot parse --values {values!r} for axis {axis}") from None
    try:
        for value in parsed:
            apply_axis(config, axis, value)  # validate bounds up front
        rows = run_sweep(config, axis, parsed, trials=trials)
    except AntSearchError as exc:
        raise click.ClickException(str(exc)) from None
    out = Path(out_dir)
    sweep_to_file(rows, out / "sweep.csv")
    failures = sum(1 for r in rows if r.error)
    click.echo(f"wrote {out / 'sweep.csv'} ({len(rows)} rows, {failures} failed runs)")


@main.command("export-best")
@click.argument("source", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write best.json here instead of stdout.")
def export_best(source, out_path) -> None:
    """Export best.json from a checkpoint file or a run directory."""
    src = Path(source)
    if src.is_dir():
        best = src / "best.json"
        if best.exists():
            payload = best.read_text()
        else:
            checkpoints = sorted(src.glob("checkpoint_round_*.json"))
            if not checkpoints:
                raise click.ClickException(f"{src} holds no best.json or checkpoints")
            payload = _best_from_checkpoint(checkpoints[-1])
    else:
        payload = _best_from_checkpoint(src)
    if out_path:
        Path(out_path).write_text(payload)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(payload, nl=False)


def _best_from_checkpoint(path: Path) -> str:
    from .space import canonical_string, serialize

    space = default_space()
    try:
        state = load_checkpoint(path, space)
    except CheckpointError as exc:
        raise click.ClickException(str(exc)) from None
    if state.incumbent is None:
        raise click.ClickException(f"checkpoint {path} has no incumbent tour yet")
    descriptor = state.incumbent.to_descriptor(space, state.config.input_shape)
    payload = {
        "descriptor": serialize(descriptor),
        "canonical": canonical_string(descriptor, space),
        "score": state.incumbent.accuracy,
        "config": state.config.to_json_dict(),
        "seed": state.config.seed,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port) -> None:
    """Serve the HTTP API (FastAPI app via uvicorn)."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
