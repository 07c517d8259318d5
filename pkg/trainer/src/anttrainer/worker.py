"""NDJSON protocol worker: evaluation requests in, validation accuracy out.

Speaks protocol v1 on standard streams: replies hello_ack to hello, answers
every eval_request exactly once with eval_result or eval_error, and exits on
shutdown.  Malformed lines are logged to stderr and skipped so a confused
peer cannot crash the worker.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch

from .data import DatasetUnavailable, load_split
from .descriptor import UnsupportedArchitecture, parse_descriptor
from .model import build_model
from .training import train_and_score
from .weights import WeightStore

PROTOCOL_VERSION = 1


@dataclass
class WorkerConfig:
    dataset: str = "synthetic-digits"
    train_size: int = 10_000
    val_size: int = 1_000
    epochs: int = 1
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    cache_dir: str = "anttrainer_cache"
    data_dir: str = "data"


class Worker:
    def __init__(self, config: WorkerConfig, stdin=None, stdout=None):
        self.config = config
        self.stdin = stdin or sys.stdin
        self.stdout = stdout or sys.stdout
        self.store = WeightStore(Path(config.cache_dir) / "weights")
        self.log_path = Path(config.cache_dir) / "eval_log.ndjson"
        self._data = None
        self._answered: set[int] = set()

    # -- wire helpers -------------------------------------------------------

    def send(self, payload: dict) -> None:
        self.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
        self.stdout.flush()

    def log(self, message: str) -> None:
        print(f"anttrainer: {message}", file=sys.stderr, flush=True)

    def record(self, entry: dict) -> None:
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    # -- data ---------------------------------------------------------------

    def data(self):
        if self._data is None:
            self._data = load_split(
                self.config.dataset,
                self.config.train_size,
                self.config.val_size,
                self.config.seed,
                self.config.data_dir,
            )
        return self._data

    # -- request handling ---------------------------------------------------

    def run(self) -> int:
        for line in self.stdin:
            line = line.strip()
            if not line:
                continue
            try:
                message = json.loads(line)
            except json.JSONDecodeError as exc:
                self.log(f"skipping bad json: {exc}")
                continue
            if not isinstance(message, dict):
                self.log("skipping non-object message")
                continue
            kind = message.get("type")
            if kind == "hello":
                if message.get("version") != PROTOCOL_VERSION:
                    self.log(f"version mismatch: {message.get('version')}")
                    return 1
                self.send(
                    {
                        "type": "hello_ack",
                        "version": PROTOCOL_VERSION,
                        "supports_weight_reuse": True,
                    }
                )
            elif kind == "eval_request":
                self.handle_eval(message)
            elif kind == "shutdown":
                return 0
            else:
                self.log(f"ignoring message type {kind!r}")
        return 0

    def handle_eval(self, message: dict) -> None:
        request_id = message.get("id")
        if not isinstance(request_id, int):
            self.log(f"eval_request without usable id: {message.get('id')!r}")
            return
        if request_id in self._answered:
            self.log(f"duplicate request id {request_id} ignored")
            return
        self._answered.add(request_id)
        started = time.perf_counter()
        try:
            result = self.evaluate(
                message.get("descriptor"),
                int(message.get("reuse_prefix_len") or 0),
                message.get("reuse_key"),
            )
        except UnsupportedArchitecture as exc:
            self.send(
                {"type": "eval_error", "id": request_id, "code": exc.code, "message": str(exc)}
            )
            self.record({"id": request_id, "error": exc.code, "message": str(exc)})
            return
        except DatasetUnavailable as exc:
            self.send(
                {"type": "eval_error", "id": request_id, "code": "DATASET", "message": str(exc)}
            )
            self.record({"id": request_id, "error": "DATASET", "message": str(exc)})
            return
        except Exception as exc:  # noqa: BLE001 - never a silent wrong score
            self.send(
                {
                    "type": "eval_error",
                    "id": request_id,
                    "code": "INTERNAL",
                    "message": f"{type(exc).__name__}: {exc}",
                }
            )
            self.record({"id": request_id, "error": "INTERNAL", "message": str(exc)})
            return
        wall_ms = (time.perf_counter() - started) * 1000.0
        accuracy, loss, stored_key, reused = result
        self.send(
            {
                "type": "eval_result",
                "id": request_id,
                "accuracy": accuracy,
                "loss": loss,
                "wall_ms": wall_ms,
                "stored_key": stored_key,
            }
        )
        self.record(
            {
                "id": request_id,
                "accuracy": accuracy,
                "reused_prefix_len": reused,
                "stored_key": stored_key,
                "wall_ms": wall_ms,
            }
        )

    def evaluate(
        self, raw_descriptor, reuse_prefix_len: int, reuse_key: Optional[str]
    ) -> tuple[float, float, str, int]:
        descriptor = parse_descriptor(raw_descriptor)
        torch.manual_seed(self.config.seed)
        model = build_model(descriptor)
        reused = self.store.load_prefix(descriptor, model, reuse_prefix_len)
        if reuse_prefix_len and not reused:
            self.log(
                f"no reusable weights for prefix {reuse_prefix_len} "
                f"(key {reuse_key!r}); training from scratch"
            )
        train_x, train_y, val_x, val_y = self.data()
        report = train_and_score(
            model,
            train_x,
            train_y,
            val_x,
            val_y,
            epochs=self.config.epochs,
            batch_size=self.config.batch_size,
            lr=self.config.lr,
            seed=self.config.seed,
        )
        stored_key = self.store.save_prefixes(descriptor, model, report.best_val_accuracy)
        return report.best_val_accuracy, report.final_loss, stored_key, reused
