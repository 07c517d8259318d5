"""Newline-delimited JSON protocol binding external trainers to the engine.

One session talks to one worker over a byte stream (subprocess pipes or a
TCP socket).  The engine keeps a single request in flight and blocks for the
matching reply; a reader thread feeds a queue so timeouts work on both
transports.  Anything that goes wrong with one evaluation is reported as
EvaluationFailed so the search loop can score it zero and move on.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import socket
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import IO, Optional, Union

from .errors import EvaluationFailed, ProtocolError
from .evaluation import Metrics, ReuseHint
from .space import ArchitectureDescriptor, SearchSpace, serialize

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HANDSHAKE_TIMEOUT_S = 10.0
REQUEST_TIMEOUT_S = 3600.0


# -- messages -----------------------------------------------------------------


@dataclass(frozen=True)
class Hello:
    version: int
    input_shape: tuple[int, int, int]


@dataclass(frozen=True)
class HelloAck:
    version: int
    supports_weight_reuse: bool = False


@dataclass(frozen=True)
class EvalRequest:
    id: int
    descriptor: dict
    reuse_prefix_len: int = 0
    reuse_key: Optional[str] = None


@dataclass(frozen=True)
class EvalResult:
    id: int
    accuracy: float
    loss: Optional[float] = None
    wall_ms: float = 0.0
    stored_key: Optional[str] = None


@dataclass(frozen=True)
class EvalError:
    id: int
    code: str
    message: str = ""


@dataclass(frozen=True)
class Shutdown:
    pass


Message = Union[Hello, HelloAck, EvalRequest, EvalResult, EvalError, Shutdown]

_TYPE_NAMES = {
    Hello: "hello",
    HelloAck: "hello_ack",
    EvalRequest: "eval_request",
    EvalResult: "eval_result",
    EvalError: "eval_error",
    Shutdown: "shutdown",
}


def encode(message: Message) -> str:
    """One JSON line, trailing newline included."""
    body: dict = {"type": _TYPE_NAMES[type(message)]}
    if isinstance(message, Hello):
        body.update(version=message.version, input_shape=list(message.input_shape))
    elif isinstance(message, HelloAck):
        body.update(
            version=message.version, supports_weight_reuse=message.supports_weight_reuse
        )
    elif isinstance(message, EvalRequest):
        body.update(
            id=message.id,
            descriptor=message.descriptor,
            reuse_prefix_len=message.reuse_prefix_len,
            reuse_key=message.reuse_key,
        )
    elif isinstance(message, EvalResult):
        body.update(
            id=message.id,
            accuracy=message.accuracy,
            loss=message.loss,
            wall_ms=message.wall_ms,
            stored_key=message.stored_key,
        )
    elif isinstance(message, EvalError):
        body.update(id=message.id, code=message.code, message=message.message)
    return json.dumps(body, sort_keys=True) + "\n"


def _field(data: dict, name: str, types, required: bool = True, default=None):
    if name not in data:
        if required:
            raise ProtocolError(f"message missing field {name!r}")
        return default
    value = data[name]
    if value is None and not required:
        return None
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ProtocolError(f"field {name!r} has bad type bool")
    if not isinstance(value, types):
        raise ProtocolError(f"field {name!r} has bad type {type(value).__name__}")
    return value


class ProtocolNoise(ProtocolError):
    """A line that is not JSON at all; skippable chatter, not a reply."""


def decode(line: str) -> Message:
    """Parse and strictly validate one wire line."""
    line = line.strip()
    if not line:
        raise ProtocolNoise("empty message line")
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolNoise(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ProtocolError("message must be a JSON object")
    msg_type = data.get("type")

    def check_fields(*names: str) -> None:
        unknown = set(data) - {"type", *names}
        if unknown:
            raise ProtocolError(f"{msg_type}: unknown fields {sorted(unknown)}")

    if msg_type == "hello":
        check_fields("version", "input_shape")
        shape = _field(data, "input_shape", list)
        if len(shape) != 3 or any(not isinstance(v, int) or isinstance(v, bool) for v in shape):
            raise ProtocolError("hello: input_shape must be three integers")
        return Hello(version=_field(data, "version", int), input_shape=tuple(shape))
    if msg_type == "hello_ack":
        check_fields("version", "supports_weight_reuse")
        return HelloAck(
            version=_field(data, "version", int),
            supports_weight_reuse=_field(
                data, "supports_weight_reuse", bool, required=False, default=False
            )
            or False,
        )
    if msg_type == "eval_request":
        check_fields("id", "descriptor", "reuse_prefix_len", "reuse_key")
        return EvalRequest(
            id=_field(data, "id", int),
            descriptor=_field(data, "descriptor", dict),
            reuse_prefix_len=_field(data, "reuse_prefix_len", int, required=False, default=0) or 0,
            reuse_key=_field(data, "reuse_key", str, required=False),
        )
    if msg_type == "eval_result":
        check_fields("id", "accuracy", "loss", "wall_ms", "stored_key")
        accuracy = _field(data, "accuracy", (int, float))
        if not 0.0 <= accuracy <= 1.0:
            raise ProtocolError(f"eval_result: accuracy {accuracy} outside [0, 1]")
        loss = _field(data, "loss", (int, float), required=False)
        if loss is not None and loss < 0:
            raise ProtocolError(f"eval_result: negative loss {loss}")
        return EvalResult(
            id=_field(data, "id", int),
            accuracy=float(accuracy),
            loss=float(loss) if loss is not None else None,
            wall_ms=float(_field(data, "wall_ms", (int, float), required=False, default=0.0) or 0.0),
            stored_key=_field(data, "stored_key", str, required=False),
        )
    if msg_type == "eval_error":
        check_fields("id", "code", "message")
        return EvalError(
            id=_field(data, "id", int),
            code=_field(data, "code", str),
            message=_field(data, "message", str, required=False, default="") or "",
        )
    if msg_type == "shutdown":
        check_fields()
        return Shutdown()
    raise ProtocolError(f"unknown message type {msg_type!r}")


# -- transports ---------------------------------------------------------------


class TransportClosed(ProtocolError):
    """The underlying stream ended or broke."""


class _LineReader(threading.Thread):
    """Feeds lines from a blocking stream into a queue (the timeout timer)."""

    _EOF = object()

    def __init__(self, stream: IO[str]):
        super().__init__(daemon=True)
        self._stream = stream
        self.lines: queue.Queue = queue.Queue()
        self.start()

    def run(self) -> None:
        try:
            for line in self._stream:
                self.lines.put(line)
        except (OSError, ValueError):
            pass
        self.lines.put(self._EOF)

    def get(self, timeout: Optional[float]) -> Optional[str]:
        """Next line, None on timeout; raises TransportClosed at EOF."""
        try:
            item = self.lines.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is self._EOF:
            raise TransportClosed("stream closed")
        return item


class PipeTransport:
    """Worker spawned as a subprocess, spoken to over its standard streams."""

    def __init__(self, command: str):
        self.process = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        assert self.process.stdin is not None and self.process.stdout is not None
        self._reader = _LineReader(self.process.stdout)

    def send_line(self, line: str) -> None:
        try:
            self.process.stdin.write(line)
            self.process.stdin.flush()
        except (OSError, ValueError) as exc:
            raise TransportClosed(f"worker stdin broke: {exc}") from None

    def recv_line(self, timeout: Optional[float]) -> Optional[str]:
        return self._reader.get(timeout)

    def close(self) -> None:
        try:
            if self.process.stdin:
                self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.process.kill()


class TcpTransport:
    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        self._sock.settimeout(None)
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        self._reader = _LineReader(self._file)

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line)
            self._file.flush()
        except (OSError, ValueError) as exc:
            raise TransportClosed(f"socket broke: {exc}") from None

    def recv_line(self, timeout: Optional[float]) -> Optional[str]:
        return self._reader.get(timeout)

    def close(self) -> None:
        try:
            self._file.close()
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


class InMemoryTransport:
    """Loopback transport for tests: two queues, no processes."""

    def __init__(self):
        self.outgoing: queue.Queue = queue.Queue()
        self.incoming: queue.Queue = queue.Queue()
        self.closed = False

    def send_line(self, line: str) -> None:
        if self.closed:
            raise TransportClosed("transport closed")
        self.outgoing.put(line)

    def recv_line(self, timeout: Optional[float]) -> Optional[str]:
        try:
            item = self.incoming.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is None:
            raise TransportClosed("transport closed")
        return item

    def close(self) -> None:
        self.closed = True

    # test helpers
    def worker_recv(self, timeout: float = 1.0) -> str:
        return self.outgoing.get(timeout=timeout)

    def worker_send(self, line: str) -> None:
        self.incoming.put(line)

    def worker_close(self) -> None:
        self.incoming.put(None)


# -- session ------------------------------------------------------------------


@dataclass
class Capabilities:
    supports_weight_reuse: bool = False


class Session:
    """One worker connection: handshake once, then one request in flight."""

    def __init__(
        self,
        transport,
        handshake_timeout: float = HANDSHAKE_TIMEOUT_S,
        request_timeout: float = REQUEST_TIMEOUT_S,
    ):
        self.transport = transport
        self.handshake_timeout = handshake_timeout
        self.request_timeout = request_timeout
        self.capabilities: Optional[Capabilities] = None
        self.dead = False
        self._next_id = 1
        self._answered: set[int] = set()

    def handshake(self, input_shape: tuple[int, int, int]) -> Capabilities:
        self._check_alive()
        deadline = time.monotonic() + self.handshake_timeout
        try:
            self.transport.send_line(encode(Hello(PROTOCOL_VERSION, input_shape)))
        except TransportClosed as exc:
            self._die(f"handshake transport failure: {exc}")
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._die("handshake timed out")
            try:
                line = self.transport.recv_line(remaining)
            except TransportClosed as exc:
                self._die(f"handshake transport failure: {exc}")
            if line is None:
                self._die("handshake timed out")
            try:
                reply = decode(line)
                break
            except ProtocolNoise as exc:
                log.warning("skipping noise during handshake: %s", exc)
            except ProtocolError as exc:
                self._die(f"bad handshake reply: {exc}")
        if not isinstance(reply, HelloAck):
            self._die(f"expected hello_ack, got {type(reply).__name__}")
        if reply.version != PROTOCOL_VERSION:
            self._die(
                f"protocol version mismatch: engine {PROTOCOL_VERSION}, worker {reply.version}"
            )
        self.capabilities = Capabilities(reply.supports_weight_reuse)
        return self.capabilities

    def evaluate(self, descriptor_json: dict, reuse: ReuseHint) -> Metrics:
        """Send one request and block for its reply.

        Raises EvaluationFailed for worker errors, timeouts, and protocol
        violations; a transport break additionally marks the session dead so
        later calls fail fast.
        """
        self._check_alive()
        if self.capabilities is None:
            raise ProtocolError("handshake must complete before evaluation")
        request_id = self._next_id
        self._next_id += 1
        request = EvalRequest(
            id=request_id,
            descriptor=descriptor_json,
            reuse_prefix_len=reuse.prefix_len,
            reuse_key=reuse.key,
        )
        try:
            self.transport.send_line(encode(request))
        except TransportClosed as exc:
            self._die(f"send failed: {exc}")

        while True:
            try:
                line = self.transport.recv_line(self.request_timeout)
            except TransportClosed as exc:
                self._die(f"worker went away: {exc}")
            if line is None:
                raise EvaluationFailed("TIMEOUT", f"request {request_id} timed out")
            try:
                reply = decode(line)
            except ProtocolNoise as exc:
                log.warning("skipping noise from worker: %s", exc)
                continue
            except ProtocolError as exc:
                raise EvaluationFailed("PROTOCOL", str(exc)) from None
            if isinstance(reply, (EvalResult, EvalError)):
                if reply.id != request_id:
                    # duplicate or stray id: reject and log, never double-apply;
                    # the per-request timeout bounds how long we keep skipping
                    log.warning(
                        "ignoring %s for id %s while waiting for %s",
                        "duplicate" if reply.id in self._answered else "unexpected",
                        reply.id,
                        request_id,
                    )
                    continue
                self._answered.add(reply.id)
                if isinstance(reply, EvalError):
                    raise EvaluationFailed(reply.code, reply.message)
                return Metrics(
                    accuracy=reply.accuracy,
                    loss=reply.loss,
                    wall_ms=reply.wall_ms,
                    reused_prefix_len=reuse.prefix_len,
                )
            raise EvaluationFailed(
                "PROTOCOL", f"unexpected message {type(reply).__name__} mid-session"
            )

    def shutdown(self) -> None:
        if not self.dead:
            try:
                self.transport.send_line(encode(Shutdown()))
            except TransportClosed:
                pass
        self.transport.close()
        self.dead = True

    def _check_alive(self) -> None:
        if self.dead:
            raise EvaluationFailed("SESSION_DEAD", "worker session is dead")

    def _die(self, reason: str) -> None:
        self.dead = True
        raise EvaluationFailed("SESSION_DEAD", reason)


class RemoteEvaluator:
    """Adapts a Session to the engine's evaluator contract."""

    def __init__(self, session: Session, space: Optional[SearchSpace] = None):
        self.session = session
        self.space = space

    def evaluate(self, descriptor: ArchitectureDescriptor, reuse: ReuseHint) -> Metrics:
        return self.session.evaluate(serialize(descriptor), reuse)

    def close(self) -> None:
        self.session.shutdown()


def evaluator_from_binding(
    binding: str,
    input_shape: tuple[int, int, int],
    space: Optional[SearchSpace] = None,
    handshake_timeout: float = HANDSHAKE_TIMEOUT_S,
    request_timeout: float = REQUEST_TIMEOUT_S,
) -> RemoteEvaluator:
    """Build a connected, handshaken evaluator from a CLI binding string.

    Supported forms: `exec:<command>` (worker on standard streams) and
    `tcp:<host>:<port>`.
    """
    if binding.startswith("exec:"):
        command = binding[len("exec:"):]
        if not command.strip():
            raise ProtocolError("exec binding needs a command")
        transport = PipeTransport(command)
    elif binding.startswith("tcp:"):
        rest = binding[len("tcp:"):]
        host, sep, port_text = rest.rpartition(":")
        if not sep or not host:
            raise ProtocolError(f"tcp binding must be tcp:<host>:<port>, got {binding!r}")
        try:
            port = int(port_text)
        except ValueError:
            raise ProtocolError(f"bad tcp port {port_text!r}") from None
        transport = TcpTransport(host, port)
    else:
        raise ProtocolError(f"unknown evaluator binding {binding!r}")
    session = Session(transport, handshake_timeout, request_timeout)
    session.handshake(input_shape)
    return RemoteEvaluator(session, space)
