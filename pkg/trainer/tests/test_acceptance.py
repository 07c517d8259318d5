"""Trainer acceptance: the end-to-end smoke run and protocol degradation.

The smoke criterion trains real CNNs through the full engine-worker loop at
desk scale: 2 ants, depth 2, a 10k/1k split, one epoch per evaluation, best
validation accuracy at least 0.90, with weight reuse observed.  Real MNIST is
used when a local cache exists; otherwise the deterministic synthetic-digits
dataset stands in (same shape, same classes, no network).
"""

import json
import os
import shutil
import subprocess
import sys
import textwrap
import time
from pathlib import Path

import pytest

from anttrainer.data import DatasetUnavailable, load_split

ANTSEARCH = shutil.which("antsearch")
pytestmark = pytest.mark.skipif(
    ANTSEARCH is None, reason="antsearch CLI not installed alongside the trainer"
)


def pick_dataset() -> tuple[str, str]:
    data_dir = os.environ.get("ANTTRAINER_MNIST_DIR", "data")
    try:
        load_split("mnist", 10, 2, seed=0, data_dir=data_dir)
        return "mnist", data_dir
    except DatasetUnavailable:
        return "synthetic-digits", data_dir


def report(name, condition, detail=""):
    print(f"[{'PASS' if condition else 'FAIL'}] {name} {detail}")
    assert condition, f"{name}: {detail}"


def test_mnist_smoke(tmp_path):
    dataset, data_dir = pick_dataset()
    cache_dir = tmp_path / "cache"
    out_dir = tmp_path / "run"
    worker_cmd = (
        f"{sys.executable} -m anttrainer worker --dataset {dataset} "
        f"--train-size 10000 --val-size 1000 --epochs 1 "
        f"--cache-dir {cache_dir} --data-dir {data_dir} --seed 0"
    )
    started = time.time()
    proc = subprocess.run(
        [
            ANTSEARCH, "run",
            "--ants", "2", "--max-depth", "2", "--seed", "5",
            "--evaluator", f"exec:{worker_cmd}",
            "--out-dir", str(out_dir),
        ],
        capture_output=True,
        text=True,
        timeout=1800,
    )
    elapsed = time.time() - started
    assert proc.returncode == 0, proc.stderr

    best = json.loads((out_dir / "best.json").read_text())
    entries = [
        json.loads(line)
        for line in (cache_dir / "eval_log.ndjson").read_text().splitlines()
    ]
    successes = [e for e in entries if "accuracy" in e]

    print(f"  dataset={dataset} best={best['score']:.4f} wall={elapsed:.0f}s")
    report("evaluation budget", len(entries) == 4, f"{len(entries)} evaluations")
    report(
        "smoke accuracy >= 0.90",
        best["score"] >= 0.90,
        f"best validation accuracy {best['score']:.4f} on {dataset}",
    )
    report("wall time <= 30 min", elapsed <= 1800, f"{elapsed:.0f}s")
    report(
        "weight reuse observed",
        any(e.get("reused_prefix_len", 0) >= 1 for e in successes),
        str([e.get("reused_prefix_len") for e in successes]),
    )


CHAOTIC_WORKER = textwrap.dedent(
    """
    import sys
    from anttrainer.worker import Worker, WorkerConfig

    class Chaotic(Worker):
        def send(self, payload):
            # garbage before every reply; a result with a bogus id; then truth
            self.stdout.write("not json at all\\n")
            if payload.get("type") == "eval_result":
                self.stdout.write(
                    '{"type": "eval_result", "id": 9999, "accuracy": 0.1, '
                    '"loss": null, "wall_ms": 0, "stored_key": null}\\n'
                )
                if payload["id"] % 2 == 0:
                    # malformed accuracy on even ids: must degrade, not abort
                    payload = dict(payload, accuracy=7.5)
            super().send(payload)

    config = WorkerConfig(
        dataset="synthetic-digits", train_size=64, val_size=16,
        epochs=1, cache_dir=sys.argv[1],
    )
    sys.exit(Chaotic(config).run())
    """
)


def test_malformed_replies_degrade_without_aborting(tmp_path):
    script = tmp_path / "chaotic_worker.py"
    script.write_text(CHAOTIC_WORKER)
    out_dir = tmp_path / "run"
    proc = subprocess.run(
        [
            ANTSEARCH, "run",
            "--ants", "2", "--max-depth", "2", "--seed", "3",
            "--evaluator", f"exec:{sys.executable} {script} {tmp_path / 'cache'}",
            "--out-dir", str(out_dir),
        ],
        capture_output=True,
        text=True,
        timeout=600,
    )
    report("search survives protocol chaos", proc.returncode == 0, proc.stderr[-300:])
    best = json.loads((out_dir / "best.json").read_text())
    stats = (out_dir / "stats.csv").read_text().splitlines()
    report("all ants accounted for", len(stats) == 1 + 4, f"{len(stats) - 1} rows")
    report(
        "malformed replies scored zero, good ones kept",
        0.0 <= best["score"] <= 1.0,
        f"best {best['score']}",
    )
