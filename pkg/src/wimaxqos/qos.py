"""Service classes, service flows and their per-connection FIFO queues."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field


class SchedulingType(enum.Enum):
    UGS = "UGS"
    ERTPS = "ertPS"
    RTPS = "rtPS"
    NRTPS = "nrtPS"
    BE = "BE"

    @classmethod
    def parse(cls, text: str) -> "SchedulingType":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValueError(f"unknown scheduling type {text!r}")


# strict priority, highest first
PRIORITY_ORDER = (SchedulingType.UGS, SchedulingType.ERTPS, SchedulingType.RTPS,
                  SchedulingType.NRTPS, SchedulingType.BE)


class Direction(enum.Enum):
    UPLINK = "uplink"
    DOWNLINK = "downlink"


class AppTag(enum.Enum):
    VOICE = "voice"
    DATA = "data"
    RESERVATION = "reservation"


@dataclass(frozen=True)
class ServiceClass:
    """A named QoS parameter set.

    Rates are SDU rates in bit/s: MAC header overhead is granted on top of
    them, never charged against them.
    """

    name: str
    scheduling_type: SchedulingType
    max_sustained_rate: int
    min_reserved_rate: int = 0
    sdu_size: int | None = None
    max_traffic_burst: int | None = None

    def __post_init__(self):
        if self.min_reserved_rate < 0 or self.max_sustained_rate < 0:
            raise ValueError(f"class {self.name}: rates must be non-negative")
        if self.min_reserved_rate > self.max_sustained_rate:
            raise ValueError(f"class {self.name}: min reserved rate exceeds max sustained rate")
        if (self.scheduling_type is SchedulingType.UGS
                and self.min_reserved_rate != self.max_sustained_rate):
            raise ValueError(f"class {self.name}: UGS requires min reserved == max sustained rate")
        if self.sdu_size is not None and self.sdu_size <= 0:
            raise ValueError(f"class {self.name}: sdu_size must be positive")

    @property
    def nominal_rate(self) -> int:
        """Rate backing periodic grants (UGS and ertPS)."""
        if self.scheduling_type is SchedulingType.UGS:
            return self.max_sustained_rate
        return self.min_reserved_rate


@dataclass(slots=True)
class MacPdu:
    flow_id: int
    payload_bytes: int
    mac_header_bytes: int
    created_at: int
    enqueued_at: int = 0
    app_tag: AppTag = AppTag.DATA
    # opaque application context (transaction id, segment index, ...)
    meta: object = None

    def __post_init__(self):
        if self.payload_bytes < 0 or self.mac_header_bytes < 0:
            raise ValueError("PDU sizes must be non-negative")
        if self.payload_bytes + self.mac_header_bytes <= 0:
            raise ValueError("PDU total size must be positive")

    @property
    def total_bytes(self) -> int:
        return self.payload_bytes + self.mac_header_bytes


class FlowMismatchError(ValueError):
    pass


@dataclass(eq=False)
class ServiceFlow:
    """A unidirectional MAC connection with a FIFO of whole PDUs.

    Counters (``bytes_offered`` etc.) are in payload bytes, the unit the
    higher layer offers and receives. ``backlog_bytes`` is in on-air bytes
    (payload plus MAC header): it is what a bandwidth request reports and
    what the optional queue cap limits.
    """

    flow_id: int
    direction: Direction
    service_class: ServiceClass
    owner_station: str
    name: str = ""
    queue_byte_cap: int | None = None
    queue: deque = field(default_factory=deque, repr=False)
    bytes_offered: int = 0
    bytes_sent: int = 0
    bytes_dropped: int = 0
    pdus_offered: int = 0
    pdus_sent: int = 0
    pdus_dropped: int = 0
    queued_payload_bytes: int = 0
    _backlog: int = 0

    @property
    def scheduling_type(self) -> SchedulingType:
        return self.service_class.scheduling_type

    def enqueue(self, pdu: MacPdu, now: int) -> bool:
        """Tail-drop enqueue. Returns True if accepted."""
        if pdu.flow_id != self.flow_id:
            raise FlowMismatchError(
                f"PDU for flow {pdu.flow_id} offered to flow {self.flow_id}")
        self.bytes_offered += pdu.payload_bytes
        self.pdus_offered += 1
        size = pdu.total_bytes
        if self.queue_byte_cap is not None and self._backlog + size > self.queue_byte_cap:
            self.bytes_dropped += pdu.payload_bytes
            self.pdus_dropped += 1
            return False
        pdu.enqueued_at = now
        self.queue.append(pdu)
        self._backlog += size
        self.queued_payload_bytes += pdu.payload_bytes
        return True

    def dequeue_up_to(self, grant_bytes: int) -> list[MacPdu]:
        """Remove whole PDUs from the head while they fit in ``grant_bytes``."""
        out: list[MacPdu] = []
        q = self.queue
        room = grant_bytes
        while q and q[0].total_bytes <= room:
            pdu = q.popleft()
            room -= pdu.total_bytes
            self._backlog -= pdu.total_bytes
            self.queued_payload_bytes -= pdu.payload_bytes
            self.bytes_sent += pdu.payload_bytes
            self.pdus_sent += 1
            out.append(pdu)
        return out

    def backlog_bytes(self) -> int:
        return self._backlog

    def head_size(self) -> int:
        return self.queue[0].total_bytes if self.queue else 0

    def conservation_delta(self) -> int:
        """offered - (sent + dropped + queued); zero for a consistent flow.

        Queued bytes are recounted from the queue itself so that a drifting
        running counter cannot hide a bookkeeping error.
        """
        queued = sum(p.payload_bytes for p in self.queue)
        return self.bytes_offered - (self.bytes_sent + self.bytes_dropped + queued)
