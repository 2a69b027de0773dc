"""Radio-analytics reporting between the monitoring side and its consumers.

Each simulation step produces one report carrying the demand pair, the user
count, and three KPI values. Latency and throughput have no packet-level
meaning in this simulator, so the schema carries explicit proxies: the
contention ratio stands in for latency pressure and the step's completed
mass stands in for throughput.

Wire format (schema version 1): UTF-8 JSON, one object per line, field
names exactly ``t, d_ran, d_ai, active_users, latency_proxy,
throughput_proxy, network_load, schema_version``. Parsing is strict; any
unknown or missing field rejects the line.

Delivery is synchronous and ordered per consumer, either in-process or over
a local stream socket. There is no durable queue: a failed send surfaces a
:class:`TransportError` that retains the undelivered report.
"""

from __future__ import annotations

import json
import math
import socket
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional

from .resource_env import StepInfo
from .workload import DemandSample, contention

SCHEMA_VERSION = 1

REPORT_FIELDS = (
    "t",
    "d_ran",
    "d_ai",
    "active_users",
    "latency_proxy",
    "throughput_proxy",
    "network_load",
    "schema_version",
)


class Y1ParseError(ValueError):
    """Line could not be decoded; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class Y1ValidationError(ValueError):
    """Decoded fields violate the report invariants."""


class UnregisteredConsumerError(KeyError):
    """Publish was attempted for a consumer that never registered."""


class TransportError(RuntimeError):
    """Delivery failed; the undelivered report is kept on the exception."""

    def __init__(self, message: str, report: "Y1Report") -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Y1Report:
    """One radio-analytics record for a single timestep."""

    t: int
    d_ran: float
    d_ai: float
    active_users: int
    latency_proxy: float
    throughput_proxy: float
    network_load: float
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise Y1ValidationError(
                f"schema_version must be {SCHEMA_VERSION}, got {self.schema_version}"
            )
        if self.t < 0:
            raise Y1ValidationError(f"t must be >= 0, got {self.t}")
        if self.network_load < 0.0:
            raise Y1ValidationError(f"network_load must be >= 0, got {self.network_load}")
        for name in ("d_ran", "d_ai", "latency_proxy", "throughput_proxy", "network_load"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise Y1ValidationError(f"{name} must be finite, got {v}")
        if self.active_users < 0:
            raise Y1ValidationError(f"active_users must be >= 0, got {self.active_users}")


def build_report(step_info: StepInfo, sample: DemandSample) -> Y1Report:
    """Package a completed step and its demand sample into one report.

    The two inputs must describe the same timestep; reports are a pure
    function of them, so equal inputs serialize to identical bytes.
    """
    if step_info.t != sample.t:
        raise ValueError(
            f"timestep mismatch: step_info.t={step_info.t}, sample.t={sample.t}"
        )
    total = sample.d_ran + sample.d_ai
    return Y1Report(
        t=sample.t,
        d_ran=sample.d_ran,
        d_ai=sample.d_ai,
        active_users=sample.active_users,
        latency_proxy=contention(total, step_info.r_max),
        throughput_proxy=step_info.c_ran + step_info.c_ai,
        network_load=total / step_info.r_max,
        schema_version=SCHEMA_VERSION,
    )


def demand_indication(
    sample: DemandSample, r_max: float, trailing_throughput: float = 0.0
) -> Y1Report:
    """Decision-time KPI view for the step about to execute.

    Completions for the step are unknown until the allocation is applied,
    so the throughput proxy carries the most recent measured value (zero at
    the start of an episode). Demand-derived fields are current.
    """
    total = sample.d_ran + sample.d_ai
    return Y1Report(
        t=sample.t,
        d_ran=sample.d_ran,
        d_ai=sample.d_ai,
        active_users=sample.active_users,
        latency_proxy=contention(total, r_max),
        throughput_proxy=trailing_throughput,
        network_load=total / r_max,
        schema_version=SCHEMA_VERSION,
    )


def serialize_report(report: Y1Report) -> bytes:
    """One newline-terminated JSON line; key order is fixed for stable bytes."""
    payload = {name: getattr(report, name) for name in REPORT_FIELDS}
    return (json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def parse_report(line: bytes | str) -> Y1Report:
    """Strictly parse one serialized report line.

    Unknown fields, missing fields, wrong types, or invariant violations are
    rejected. Decode failures carry the byte offset of the error.
    """
    if isinstance(line, str):
        line = line.encode("utf-8")
    text = line.decode("utf-8", errors="replace").strip()
    if not text:
        raise Y1ParseError("empty report line", 0)
    try:
        fields = json.loads(text)
    except json.JSONDecodeError as exc:
        raise Y1ParseError(f"invalid JSON: {exc.msg}", exc.pos) from exc
    if not isinstance(fields, dict):
        raise Y1ParseError("report line is not a JSON object", 0)
    unknown = set(fields) - set(REPORT_FIELDS)
    if unknown:
        raise Y1ParseError(f"unknown fields under schema 1: {sorted(unknown)}", 0)
    missing = set(REPORT_FIELDS) - set(fields)
    if missing:
        raise Y1ParseError(f"missing fields: {sorted(missing)}", 0)
    for name in ("t", "active_users", "schema_version"):
        if not isinstance(fields[name], int):
            raise Y1ParseError(f"field {name} must be an integer", 0)
    for name in ("d_ran", "d_ai", "latency_proxy", "throughput_proxy", "network_load"):
        if not isinstance(fields[name], (int, float)) or isinstance(fields[name], bool):
            raise Y1ParseError(f"field {name} must be a number", 0)
        fields[name] = float(fields[name])
    return Y1Report(**fields)


class DeliveryMode(Enum):
    IN_PROCESS = "in_process"
    LOCAL_SOCKET = "local_socket"


@dataclass(frozen=True)
class ConsumerRegistration:
    """Identity and delivery channel of one authorized report consumer."""

    consumer_id: str
    delivery: DeliveryMode = DeliveryMode.IN_PROCESS
    endpoint: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.consumer_id:
            raise ValueError("consumer_id must be non-empty")
        if self.delivery is DeliveryMode.LOCAL_SOCKET and not self.endpoint:
            raise ValueError("LOCAL_SOCKET delivery requires an endpoint path")


@dataclass(frozen=True)
class DeliveryAck:
    consumer_id: str
    t: int
    seq: int


class TelemetryBus:
    """Synchronous, per-consumer-ordered report delivery.

    In-process consumers get each report via their callback (or an internal
    inbox readable through :meth:`received`) before ``publish`` returns.
    Socket consumers get one serialized line per report over a Unix stream
    socket connected lazily on first publish.
    """

    def __init__(self) -> None:
        self._registrations: Dict[str, ConsumerRegistration] = {}
        self._callbacks: Dict[str, Callable[[Y1Report], None]] = {}
        self._inboxes: Dict[str, List[Y1Report]] = {}
        self._sockets: Dict[str, socket.socket] = {}
        self._seq: Dict[str, int] = {}

    def register(
        self,
        registration: ConsumerRegistration,
        callback: Callable[[Y1Report], None] | None = None,
    ) -> None:
        self._registrations[registration.consumer_id] = registration
        self._seq.setdefault(registration.consumer_id, 0)
        if registration.delivery is DeliveryMode.IN_PROCESS:
            self._inboxes.setdefault(registration.consumer_id, [])
            if callback is not None:
                self._callbacks[registration.consumer_id] = callback

    def received(self, consumer_id: str) -> List[Y1Report]:
        """Inbox of an in-process consumer registered without a callback."""
        if consumer_id not in self._inboxes:
            raise UnregisteredConsumerError(consumer_id)
        return self._inboxes[consumer_id]

    def publish(self, report: Y1Report, registration: ConsumerRegistration) -> DeliveryAck:
        reg = self._registrations.get(registration.consumer_id)
        if reg is None or reg != registration:
            raise UnregisteredConsumerError(registration.consumer_id)
        if reg.delivery is DeliveryMode.IN_PROCESS:
            cb = self._callbacks.get(reg.consumer_id)
            if cb is not None:
                cb(report)
            else:
                self._inboxes[reg.consumer_id].append(report)
        else:
            self._send_line(reg, report)
        seq = self._seq[reg.consumer_id]
        self._seq[reg.consumer_id] = seq + 1
        return DeliveryAck(consumer_id=reg.consumer_id, t=report.t, seq=seq)

    def _send_line(self, reg: ConsumerRegistration, report: Y1Report) -> None:
        sock = self._sockets.get(reg.consumer_id)
        if sock is None:
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            try:
                sock.connect(reg.endpoint)
            except OSError as exc:
                sock.close()
                raise TransportError(
                    f"cannot connect to {reg.endpoint}: {exc}", report
                ) from exc
            self._sockets[reg.consumer_id] = sock
        try:
            sock.sendall(serialize_report(report))
        except OSError as exc:
            sock.close()
            del self._sockets[reg.consumer_id]
            raise TransportError(f"send to {reg.endpoint} failed: {exc}", report) from exc

    def close(self) -> None:
        for sock in self._sockets.values():
            try:
                sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            sock.close()
        self._sockets.clear()

    def __enter__(self) -> "TelemetryBus":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
