"""Reference protocol worker serving the synthetic landscape over stdio.

Run as `python -m antsearch.worker --landscape spec.json`; mostly useful for
exercising the exec transport end to end and as a template for real trainer
workers.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DescriptorError, EvaluationFailed, ProtocolError
from .evaluation import LandscapeSpec, ReuseHint, SyntheticEvaluator
from .protocol import (
    PROTOCOL_VERSION,
    EvalError,
    EvalRequest,
    EvalResult,
    Hello,
    HelloAck,
    Shutdown,
    decode,
    encode,
)
from .space import default_space, deserialize


def serve(landscape: LandscapeSpec, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    space = default_space()
    evaluator = SyntheticEvaluator(landscape, space)

    def send(message) -> None:
        stdout.write(encode(message))
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            message = decode(line)
        except ProtocolError as exc:
            print(f"worker: bad message: {exc}", file=sys.stderr)
            continue
        if isinstance(message, Hello):
            if message.version != PROTOCOL_VERSION:
                send(EvalError(id=0, code="VERSION", message=f"worker speaks {PROTOCOL_VERSION}"))
                return 1
            send(HelloAck(version=PROTOCOL_VERSION, supports_weight_reuse=False))
        elif isinstance(message, EvalRequest):
            send(_handle_eval(evaluator, message))
        elif isinstance(message, Shutdown):
            return 0
    return 0


def _handle_eval(evaluator: SyntheticEvaluator, request: EvalRequest):
    try:
        descriptor = deserialize(request.descriptor)
        metrics = evaluator.evaluate(
            descriptor, ReuseHint(request.reuse_prefix_len, request.reuse_key)
        )
    except (DescriptorError, EvaluationFailed) as exc:
        code = exc.code if isinstance(exc, EvaluationFailed) else "INVALID"
        return EvalError(id=request.id, code=code, message=str(exc))
    return EvalResult(
        id=request.id,
        accuracy=metrics.accuracy,
        loss=metrics.loss,
        wall_ms=metrics.wall_ms,
        stored_key=None,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="synthetic-landscape protocol worker")
    parser.add_argument("--landscape", help="path to a landscape spec JSON file")
    parser.add_argument("--landscape-seed", type=int, default=0,
                        help="generate a random landscape from this seed instead")
    args = parser.parse_args(argv)

    if args.landscape:
        with open(args.landscape) as fh:
            landscape = LandscapeSpec.from_json_dict(json.load(fh))
    else:
        landscape = LandscapeSpec.random(args.landscape_seed, default_space())
    return serve(landscape)


if __name__ == "__main__":
    raise SystemExit(main())
