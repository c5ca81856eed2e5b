"""Base-station grant scheduler.

Each frame the scheduler turns flow state and received bandwidth requests
into a frame map (a list of grants) in strict priority order
UGS > ertPS > rtPS > nrtPS > BE, round-robin within a class. Whatever the
reserved classes leave is split among BE flows in proportion to their
outstanding requests.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from .errors import InvariantViolation
from .qos import Direction, SchedulingType, ServiceFlow

log = logging.getLogger(__name__)

BW_REQUEST_BYTES = 6
_BITS_US_PER_BYTE = 8 * 1_000_000


class GrantKind(enum.Enum):
    DATA = "data_grant"
    POLL = "unicast_poll"


@dataclass(frozen=True, slots=True)
class Grant:
    flow_id: int
    frame_index: int
    granted_bytes: int
    kind: GrantKind = GrantKind.DATA
    # MAC header allowance included in granted_bytes (periodic grants only)
    overhead_bytes: int = 0


@dataclass
class FrameLedger:
    frame_index: int
    capacity_bytes: int
    grants: list[Grant] = field(default_factory=list)
    bytes_used: int = 0
    bytes_wasted: int = 0
    settled: bool = False

    @property
    def granted_bytes(self) -> int:
        return sum(g.granted_bytes for g in self.grants)

    def settle(self, used_by_grant: list[int]) -> None:
        """Record how many bytes of each grant (same order) carried traffic."""
        if len(used_by_grant) != len(self.grants):
            raise ValueError("one usage figure per grant required")
        self.bytes_used = sum(used_by_grant)
        self.bytes_wasted = self.granted_bytes - self.bytes_used
        self.settled = True

    def check(self) -> None:
        granted = self.granted_bytes
        if granted > self.capacity_bytes:
            raise InvariantViolation(
                f"frame {self.frame_index}: granted {granted} B exceeds capacity "
                f"{self.capacity_bytes} B", dump=self.dump())
        if any(g.granted_bytes <= 0 for g in self.grants):
            raise InvariantViolation(f"frame {self.frame_index}: empty grant", dump=self.dump())
        if self.settled and (self.bytes_used + self.bytes_wasted != granted
                             or self.bytes_wasted < 0):
            raise InvariantViolation(
                f"frame {self.frame_index}: used {self.bytes_used} + wasted "
                f"{self.bytes_wasted} != granted {granted}", dump=self.dump())

    def dump(self) -> str:
        lines = [f"frame={self.frame_index} capacity={self.capacity_bytes} "
                 f"used={self.bytes_used} wasted={self.bytes_wasted}"]
        lines += [f"  flow={g.flow_id} bytes={g.granted_bytes} kind={g.kind.value}"
                  for g in self.grants]
        return "\n".join(lines)

    def as_rows(self) -> list[tuple[int, int, str]]:
        return [(g.flow_id, g.granted_bytes, g.kind.value) for g in self.grants]


@dataclass(frozen=True, slots=True)
class BwRequest:
    flow_id: int
    requested_bytes: int
    issued_frame: int


@dataclass(frozen=True, slots=True)
class GrantChange:
    """ertPS in-band request to change the periodic grant size.

    ``per_frame_bytes == 0`` signals silence.
    """
    flow_id: int
    per_frame_bytes: int
    issued_frame: int


def ugs_grant_bytes(rate: int, frame_duration: int) -> int:
    """Whole bytes per frame for ``rate`` bit/s; use RateAccumulator for the carry."""
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return rate * frame_duration // _BITS_US_PER_BYTE


class RateAccumulator:
    """Deficit accumulator: per-frame byte counts whose running sum never
    drifts from ``rate * elapsed / 8`` by a byte or more."""

    def __init__(self, rate: int, frame_duration: int):
        if rate < 0:
            raise ValueError("rate must be non-negative")
        self.rate = rate
        self.frame_duration = frame_duration
        self._step = rate * frame_duration
        self._carry = 0

    def next_frame(self) -> int:
        self._carry += self._step
        out = self._carry // _BITS_US_PER_BYTE
        self._carry -= out * _BITS_US_PER_BYTE
        return out

    def reset(self) -> None:
        self._carry = 0


class TokenBucket:
    """Max-sustained-rate limiter, refilled once per frame, charged on use."""

    def __init__(self, rate: int, frame_duration: int, burst: int):
        self.burst = burst
        self.tokens = burst
        self._fill = RateAccumulator(rate, frame_duration)

    def refill(self) -> None:
        self.tokens = min(self.burst, self.tokens + self._fill.next_frame())

    def consume(self, n: int) -> None:
        self.tokens = max(0, self.tokens - n)


def default_burst(rate: int) -> int:
    # 100 ms at the sustained rate, never below one maximum-size PDU pair
    return max(rate // 80, 2048)


class PeriodicGrant:
    """Grant generator for UGS and active ertPS flows.

    Credit accrues at the reserved rate every frame regardless of queue
    state. With a fixed SDU size the credit is released in whole SDUs, each
    carrying a MAC header allowance; without one, the raw per-frame credit
    is granted as is.
    """

    def __init__(self, rate: int, frame_duration: int, sdu_size: int | None = None,
                 header_bytes: int = 0):
        self.acc = RateAccumulator(rate, frame_duration)
        self.sdu_size = sdu_size
        self.header_bytes = header_bytes
        self.credit = 0

    def next_grant(self, per_frame_bytes: int | None = None) -> tuple[int, int]:
        """Returns (granted_bytes, header_allowance) for this frame."""
        self.credit += self.acc.next_frame() if per_frame_bytes is None else per_frame_bytes
        if self.sdu_size is None:
            out, self.credit = self.credit, 0
            return out, 0
        n = self.credit // self.sdu_size
        self.credit -= n * self.sdu_size
        return n * (self.sdu_size + self.header_bytes), n * self.header_bytes

    def reset(self) -> None:
        self.acc.reset()
        self.credit = 0


@dataclass
class ErtpsGrantState:
    flow_id: int
    nominal_grant_bytes: int
    current_grant_bytes: int
    max_grant_bytes: int
    bw_request_size: int = BW_REQUEST_BYTES
    silent: bool = False

    def __post_init__(self):
        self.max_grant_bytes = max(self.max_grant_bytes, self.nominal_grant_bytes)


def ertps_update_grant(state: ErtpsGrantState, latest_request: int | None,
                       backlog: int) -> int:
    """Apply an ertPS grant-change request; returns the new per-frame grant.

    A request for 0 means silence: only a request-sized slot is kept. A
    positive request is clamped to the max-sustained-rate equivalent. With no
    request, a silent flow that shows backlog is restored to its nominal grant
    and never above it.
    """
    if latest_request is not None:
        if latest_request == 0:
            state.silent = True
            state.current_grant_bytes = state.bw_request_size
        else:
            state.silent = False
            state.current_grant_bytes = min(latest_request, state.max_grant_bytes)
    elif state.silent and backlog > 0:
        state.silent = False
        state.current_grant_bytes = state.nominal_grant_bytes
    return state.current_grant_bytes


def rtps_poll_due(frame_index: int, polling_interval_frames: int) -> bool:
    return frame_index % polling_interval_frames == 0


def be_contention_request(flow: ServiceFlow, frame_index: int,
                          contention_period_frames: int) -> BwRequest | None:
    """Collision-free contention: a backlogged flow asks once per period."""
    if frame_index % contention_period_frames != 0:
        return None
    backlog = flow.backlog_bytes()
    if backlog <= 0:
        return None
    return BwRequest(flow.flow_id, backlog, frame_index)


def serve_bw_request(request: BwRequest, rate_cap: int, remaining: int,
                     frame_index: int) -> Grant | None:
    n = min(request.requested_bytes, rate_cap, remaining)
    if n <= 0:
        return None
    return Grant(request.flow_id, frame_index, n)


@dataclass
class SchedulerStats:
    admission_violations: int = 0
    shed_bytes: int = 0
    silent_frames: dict[int, int] = field(default_factory=dict)


class FrameScheduler:
    """Builds one direction's frame maps.

    On the uplink, polled and best-effort flows are served only after the
    base station has heard a bandwidth request; on the downlink the base
    station owns the queues and callers pass their backlogs as requests.
    """

    def __init__(self, capacity: int, frame_duration: int = 5_000, *,
                 direction: Direction = Direction.UPLINK,
                 bw_request_size: int = BW_REQUEST_BYTES, mac_header_bytes: int = 6,
                 rtps_poll_interval: int = 4, nrtps_poll_interval: int = 200,
                 be_min_grant: int = 0):
        if capacity <= 0:
            raise ValueError("frame capacity must be positive")
        self.capacity = capacity
        self.frame_duration = frame_duration
        self.direction = direction
        self.bw_request_size = bw_request_size
        self.mac_header_bytes = mac_header_bytes
        self.be_min_grant = be_min_grant
        self.poll_interval = {SchedulingType.RTPS: rtps_poll_interval,
                              SchedulingType.NRTPS: nrtps_poll_interval}
        self.flows: dict[int, ServiceFlow] = {}
        self._by_type: dict[SchedulingType, list[int]] = {t: [] for t in SchedulingType}
        self._periodic: dict[int, PeriodicGrant] = {}
        self.ertps: dict[int, ErtpsGrantState] = {}
        self._buckets: dict[int, TokenBucket] = {}
        self.outstanding: dict[int, int] = {}
        self.stats = SchedulerStats()

    def add_flow(self, flow: ServiceFlow) -> None:
        if flow.flow_id in self.flows:
            raise ValueError(f"flow {flow.flow_id} already registered")
        cls = flow.service_class
        fid = flow.flow_id
        self.flows[fid] = flow
        self._by_type[cls.scheduling_type].append(fid)
        self._by_type[cls.scheduling_type].sort()
        t = cls.scheduling_type
        if t in (SchedulingType.UGS, SchedulingType.ERTPS):
            self._periodic[fid] = PeriodicGrant(cls.nominal_rate, self.frame_duration,
                                                cls.sdu_size, self.mac_header_bytes)
            if t is SchedulingType.ERTPS:
                nominal = ugs_grant_bytes(cls.nominal_rate, self.frame_duration)
                cap = min(ugs_grant_bytes(cls.max_sustained_rate, self.frame_duration),
                          self.capacity)
                self.ertps[fid] = ErtpsGrantState(fid, nominal, nominal, cap,
                                                  self.bw_request_size)
                self.stats.silent_frames[fid] = 0
        else:
            if cls.max_sustained_rate <= 0:
                raise ValueError(f"flow {fid}: polled/BE class needs a positive max rate")
            burst = cls.max_traffic_burst or default_burst(cls.max_sustained_rate)
            self._buckets[fid] = TokenBucket(cls.max_sustained_rate, self.frame_duration, burst)
            self.outstanding[fid] = 0

    def _rr(self, sched_type: SchedulingType, frame_index: int) -> list[int]:
        ids = self._by_type[sched_type]
        if not ids:
            return ids
        k = frame_index % len(ids)
        return ids[k:] + ids[:k]

    def receive(self, request) -> None:
        fid = request.flow_id
        if fid not in self.flows:
            raise KeyError(f"request for unknown flow {fid}")
        if isinstance(request, GrantChange):
            st = self.ertps[fid]
            before = (st.silent, st.current_grant_bytes)
            ertps_update_grant(st, request.per_frame_bytes, self.flows[fid].backlog_bytes())
            if (st.silent, st.current_grant_bytes) != before:
                self._periodic[fid].reset()
        else:
            # aggregate request: replaces what the BS believed was pending
            self.outstanding[fid] = request.requested_bytes

    def note_usage(self, flow_id: int, used: int) -> None:
        """Bytes of a data grant that actually carried PDUs."""
        if flow_id in self.outstanding:
            self.outstanding[flow_id] = max(0, self.outstanding[flow_id] - used)
            self._buckets[flow_id].consume(used)

    def _shed(self, fid: int, n: int, frame_index: int) -> None:
        self.stats.admission_violations += 1
        self.stats.shed_bytes += n
        if self.stats.admission_violations == 1 or self.stats.admission_violations % 1000 == 0:
            log.warning("admission violation: frame %d cannot fit %d B periodic grant "
                        "for flow %d (%d violations so far)", frame_index, n, fid,
                        self.stats.admission_violations)

    def build_frame_map(self, frame_index: int, pending_requests=()) -> FrameLedger:
        for req in pending_requests:
            self.receive(req)
        for bucket in self._buckets.values():
            bucket.refill()

        ledger = FrameLedger(frame_index, self.capacity)
        grants = ledger.grants
        remaining = self.capacity
        uplink = self.direction is Direction.UPLINK

        for fid in self._rr(SchedulingType.UGS, frame_index):
            n, ovh = self._periodic[fid].next_grant()
            if n <= 0:
                continue
            if n > remaining:
                self._shed(fid, n, frame_index)
                continue
            grants.append(Grant(fid, frame_index, n, GrantKind.DATA, ovh))
            remaining -= n

        for fid in self._rr(SchedulingType.ERTPS, frame_index):
            st = self.ertps[fid]
            if st.silent:
                self.stats.silent_frames[fid] += 1
                # only an uplink flow needs a slot to ask for its grant back
                n, ovh, kind = (st.bw_request_size if uplink else 0), 0, GrantKind.POLL
            else:
                per_frame = (None if st.current_grant_bytes == st.nominal_grant_bytes
                             else st.current_grant_bytes)
                n, ovh = self._periodic[fid].next_grant(per_frame)
                kind = GrantKind.DATA
            if n <= 0:
                continue
            if n > remaining:
                self._shed(fid, n, frame_index)
                continue
            grants.append(Grant(fid, frame_index, n, kind, ovh))
            remaining -= n

        for sched_type in (SchedulingType.RTPS, SchedulingType.NRTPS):
            order = self._rr(sched_type, frame_index)
            if uplink and rtps_poll_due(frame_index, self.poll_interval[sched_type]):
                for fid in order:
                    if self.bw_request_size <= remaining:
                        grants.append(Grant(fid, frame_index, self.bw_request_size,
                                            GrantKind.POLL))
                        remaining -= self.bw_request_size
            for fid in order:
                req = BwRequest(fid, self.outstanding[fid], frame_index)
                g = serve_bw_request(req, self._buckets[fid].tokens, remaining, frame_index)
                if g is not None:
                    grants.append(g)
                    remaining -= g.granted_bytes

        if remaining > 0:
            remaining = self._share_best_effort(frame_index, remaining, grants)
        return ledger

    def _share_best_effort(self, frame_index: int, remaining: int, grants: list[Grant]) -> int:
        order = self._rr(SchedulingType.BE, frame_index)
        need = {fid: min(self.outstanding[fid], self._buckets[fid].tokens) for fid in order}
        queue = [fid for fid in order if need[fid] > 0]
        if self.be_min_grant:
            # a token-starved flow waits rather than take a grant it cannot fill
            queue = [fid for fid in queue
                     if need[fid] >= min(self.be_min_grant, self.outstanding[fid])]
        while remaining > 0 and queue:
            # without fragmentation a grant below one PDU is useless: admit only
            # as many flows as can each get be_min_grant, the cursor rotates the rest
            n_fit = len(queue) if not self.be_min_grant else max(1, remaining // self.be_min_grant)
            batch, queue = queue[:n_fit], queue[n_fit:]
            total = sum(need[fid] for fid in batch)
            if total <= remaining:
                share = {fid: need[fid] for fid in batch}
            else:
                share = {fid: remaining * need[fid] // total for fid in batch}
                # floor shares leave fewer spare bytes than flows in the batch
                spare = remaining - sum(share.values())
                for fid in batch[:spare]:
                    share[fid] += 1
            for fid in batch:
                if share[fid] > 0:
                    grants.append(Grant(fid, frame_index, share[fid]))
                    remaining -= share[fid]
        return remaining
