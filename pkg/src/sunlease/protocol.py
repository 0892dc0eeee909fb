"""Broker <-> local-unit messages, their line-JSON wire format, and a topic bus.

Wire format: one UTF-8 JSON object per ``\\n``-terminated line. Every object
starts with ``type``, ``seq``, ``ts`` followed by the variant's fields in the
order they are declared below.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading
from collections import deque
from dataclasses import dataclass, fields, replace
from datetime import datetime
from typing import Callable, Optional, Union

from .errors import DataFormatError, DomainError, LifecycleError, UnknownMessageType
from .solar import UTC, format_utc, parse_utc

logger = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


@dataclass(frozen=True)
class _Base:
    seq: int
    ts: datetime

    def __post_init__(self):
        if self.seq < 0:
            raise DomainError("seq must be >= 0")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _NONNEG and v < 0:
                raise DomainError(f"{f.name} must be >= 0, got {v}")

    @property
    def sender(self) -> str:
        return f"lu:{self.lu_id}"


_NONNEG = {
    "production_kwh", "local_consumption_kwh", "node_count", "count", "count_granted",
    "duration_h", "price", "instance_hours_used",
}


@dataclass(frozen=True)
class TelemetryReport(_Base):
    lu_id: str
    slot_start: datetime
    production_kwh: float
    local_consumption_kwh: float
    node_states: tuple = ()  # ((node_id, state), ...)


@dataclass(frozen=True)
class StatusReport(_Base):
    lu_id: str
    node_states: tuple = ()


@dataclass(frozen=True)
class WakeCommand(_Base):
    lu_id: str
    node_count: int

    @property
    def sender(self):
        return "eb"


@dataclass(frozen=True)
class SleepCommand(_Base):
    lu_id: str
    node_ids: tuple = ()

    @property
    def sender(self):
        return "eb"


@dataclass(frozen=True)
class PoolOffer(_Base):
    lu_id: str
    instance_type: str
    count: int
    slot_start: datetime

    @property
    def sender(self):
        return "eb"


@dataclass(frozen=True)
class LeaseGrant(_Base):
    lu_id: str
    instance_type: str
    count_granted: int
    duration_h: float
    price: float

    @property
    def sender(self):
        return "pool"


@dataclass(frozen=True)
class UsageReport(_Base):
    lu_id: str
    slot_start: datetime
    instance_hours_used: float

    @property
    def sender(self):
        return "pool"


Message = Union[TelemetryReport, StatusReport, WakeCommand, SleepCommand, PoolOffer, LeaseGrant, UsageReport]

TYPE_NAMES = {
    TelemetryReport: "telemetry",
    StatusReport: "status",
    WakeCommand: "wake",
    SleepCommand: "sleep",
    PoolOffer: "offer",
    LeaseGrant: "grant",
    UsageReport: "usage",
}
_BY_NAME = {v: k for k, v in TYPE_NAMES.items()}
_TIME_FIELDS = {"ts", "slot_start"}


def encode(msg: Message) -> bytes:
    out = {"type": TYPE_NAMES[type(msg)]}
    for f in fields(msg):
        v = getattr(msg, f.name)
        if f.name in _TIME_FIELDS:
            v = format_utc(v)
        elif f.name == "node_states":
            v = [[nid, state] for nid, state in v]
        elif f.name == "node_ids":
            v = list(v)
        out[f.name] = v
    return (json.dumps(out, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def decode(line: Union[bytes, str]) -> Message:
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"not a JSON message: {exc}") from None
    if not isinstance(obj, dict) or "type" not in obj:
        raise DataFormatError("message has no 'type'")
    cls = _BY_NAME.get(obj["type"])
    if cls is None:
        raise UnknownMessageType(f"unknown message type {obj['type']!r}")
    kwargs = {}
    try:
        for f in fields(cls):
            v = obj[f.name]
            if f.name in _TIME_FIELDS:
                v = parse_utc(v)
            elif f.name == "node_states":
                v = tuple((nid, state) for nid, state in v)
            elif f.name == "node_ids":
                v = tuple(v)
            kwargs[f.name] = v
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad {obj['type']} message: {exc!r}") from None
    return cls(**kwargs)


# --- topics and bus ---------------------------------------------------------


def _segments(path: str) -> list[str]:
    segs = path.split("/")
    if not path or any(s == "" for s in segs):
        raise DomainError(f"invalid topic {path!r}: empty segment")
    return segs


def topic_matches(pattern: str, topic: str) -> bool:
    """``+`` matches exactly one segment."""
    p, t = _segments(pattern), _segments(topic)
    return len(p) == len(t) and all(a == "+" or a == b for a, b in zip(p, t))


class Subscription:
    """Ordered stream of (topic, message) deliveries for one pattern."""

    def __init__(self, pattern: str, callback: Optional[Callable] = None):
        _segments(pattern)
        if any("+" in s and s != "+" for s in pattern.split("/")):
            raise DomainError(f"invalid pattern {pattern!r}: '+' must be a whole segment")
        self.pattern = pattern
        self.callback = callback
        self.queue: deque = deque()
        self.active = True

    def _deliver(self, topic, msg):
        if self.callback is not None:
            self.callback(topic, msg)
        else:
            self.queue.append((topic, msg))

    def drain(self) -> list:
        items = list(self.queue)
        self.queue.clear()
        return items

    def __iter__(self):
        while self.queue:
            yield self.queue.popleft()


class Bus:
    """Synchronous in-process pub/sub.

    Delivery happens inside ``publish``, in subscription order, to every
    subscriber whose pattern matches. Nothing is retained. A message whose
    sequence number is not above the last one seen from its sender is
    dropped, which makes delivery at-most-once and ordered per sender.
    """

    def __init__(self):
        self._subs: list[Subscription] = []
        self._last_seq: dict[str, int] = {}
        self.closed = False
        self.dropped = 0

    def subscribe(self, pattern: str, callback: Optional[Callable] = None) -> Subscription:
        if self.closed:
            raise LifecycleError("bus is closed")
        sub = Subscription(pattern, callback)
        self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        sub.active = False
        self._subs = [s for s in self._subs if s is not sub]

    def publish(self, topic: str, msg: Message) -> int:
        """Returns the number of deliveries made."""
        if self.closed:
            raise LifecycleError("publish on a closed bus")
        _segments(topic)
        if "+" in topic:
            raise DomainError("wildcards are not allowed in publish topics")
        sender = msg.sender
        last = self._last_seq.get(sender)
        if last is not None and msg.seq <= last:
            self.dropped += 1
            logger.debug("dropping %s seq %d from %s (last %d)", type(msg).__name__, msg.seq, sender, last)
            return 0
        self._last_seq[sender] = msg.seq
        delivered = 0
        for sub in list(self._subs):
            if sub.active and topic_matches(sub.pattern, topic):
                sub._deliver(topic, msg)
                delivered += 1
        return delivered

    def close(self):
        self.closed = True
        self._subs.clear()


class Endpoint:
    """Publishing handle for one sender; stamps monotone sequence numbers."""

    def __init__(self, bus: Bus):
        self.bus = bus
        self._seq = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def send(self, topic: str, msg: Message) -> int:
        return self.bus.publish(topic, replace(msg, seq=self.next_seq()))


# --- TCP framing ------------------------------------------------------------
# A frame is "<topic> <encoded message>": the topic, one space, then the
# encoded JSON line. Handling is serialized per connection and across
# connections through a single lock, since the bus itself is not thread-safe.


def frame(topic: str, msg: Message) -> bytes:
    _segments(topic)
    return topic.encode("utf-8") + b" " + encode(msg)


def unframe(line: bytes) -> tuple[str, Message]:
    topic, sep, rest = line.partition(b" ")
    if not sep:
        raise DataFormatError("frame has no topic separator")
    return topic.decode("utf-8"), decode(rest)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: TcpBusServer = self.server  # type: ignore[assignment]
        for raw in self.rfile:
            if not raw.strip():
                continue
            try:
                topic, msg = unframe(raw)
            except DataFormatError as exc:
                logger.warning("rejecting frame: %s", exc)
                self.wfile.write(b"ERR " + str(exc).encode() + b"\n")
                continue
            with server.lock:
                n = server.bus.publish(topic, msg)
            self.wfile.write(f"OK {n}\n".encode())


class TcpBusServer(socketserver.ThreadingTCPServer):
    """Feeds framed lines from TCP clients into a ``Bus``; replies ``OK <deliveries>``."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, bus: Bus, address=("127.0.0.1", 0)):
        super().__init__(address, _Handler)
        self.bus = bus
        self.lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()


class TcpBusClient:
    def __init__(self, address):
        self.sock = socket.create_connection(address)
        self.rfile = self.sock.makefile("rb")

    def publish(self, topic: str, msg: Message) -> str:
        self.sock.sendall(frame(topic, msg))
        return self.rfile.readline().decode().strip()

    def close(self):
        self.rfile.close()
        self.sock.close()
