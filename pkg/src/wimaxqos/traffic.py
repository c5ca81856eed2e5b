"""Application sources: PCM voice with optional talk-spurts, and a closed-loop
request/response data client standing in for a captured transaction trace."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Callable

from .engine import Event, Simulator
from .qos import AppTag, MacPdu

_US = 1_000_000


@dataclass(frozen=True)
class VoiceSourceConfig:
    codec_rate: int = 64_000          # bit/s
    packetization: int = 10_000       # us
    header_overhead: int = 40         # RTP/UDP/IP bytes per packet
    talk_spurt_mean: int = 1_000_000  # us
    silence_mean: int = 1_350_000     # us
    silence_suppression: bool = False

    def __post_init__(self):
        if self.codec_rate <= 0 or self.packetization <= 0:
            raise ValueError("codec rate and packetization must be positive")
        if (self.codec_rate * self.packetization) % (8 * _US):
            raise ValueError("codec rate x packetization must be a whole number of bytes")

    @property
    def codec_bytes(self) -> int:
        return self.codec_rate * self.packetization // (8 * _US)

    @property
    def packet_bytes(self) -> int:
        return self.codec_bytes + self.header_overhead

    @property
    def offered_rate(self) -> float:
        """IP-layer bit/s while talking."""
        return self.packet_bytes * 8 * _US / self.packetization

    @property
    def talking_fraction(self) -> float:
        if not self.silence_suppression or self.silence_mean == 0:
            return 1.0
        return self.talk_spurt_mean / (self.talk_spurt_mean + self.silence_mean)


class TalkState(enum.Enum):
    TALKING = "talking"
    SILENT = "silent"


@dataclass(frozen=True)
class TalkStatus:
    state: TalkState
    state_entered_at: int


def _holding_time(mean: int, rng: random.Random) -> int:
    return max(1, round(rng.expovariate(1.0 / mean)))


def talk_state_transition(status: TalkStatus, cfg: VoiceSourceConfig, rng: random.Random,
                          now: int) -> tuple[TalkStatus, int | None]:
    """Flip talking <-> silent; returns the new status and when it ends.

    A zero silence mean pins the source in the talking state (no further
    transitions, end time None).
    """
    if cfg.silence_mean == 0:
        return TalkStatus(TalkState.TALKING, status.state_entered_at), None
    if status.state is TalkState.TALKING:
        return TalkStatus(TalkState.SILENT, now), now + _holding_time(cfg.silence_mean, rng)
    return TalkStatus(TalkState.TALKING, now), now + _holding_time(cfg.talk_spurt_mean, rng)


def voice_emit_packet(cfg: VoiceSourceConfig, now: int, talking: bool, flow_id: int = 0,
                      mac_header_bytes: int = 6) -> MacPdu | None:
    if cfg.silence_suppression and not talking:
        return None
    return MacPdu(flow_id, cfg.packet_bytes, mac_header_bytes, now, now, AppTag.VOICE)


class VoiceSource:
    """Emits one packet per packetization tick while talking.

    Ticks sit at ``phase + n * packetization`` exactly; the phase is drawn once
    from the source's stream.
    """

    def __init__(self, sim: Simulator, cfg: VoiceSourceConfig, rng: random.Random,
                 offer: Callable[[MacPdu], None], flow_id: int, mac_header_bytes: int = 6,
                 name: str = "voice"):
        self.sim = sim
        self.cfg = cfg
        self.rng = rng
        self.offer = offer
        self.flow_id = flow_id
        self.mac_header_bytes = mac_header_bytes
        self.name = name
        self.status = TalkStatus(TalkState.TALKING, 0)
        self.transitions: list[tuple[int, TalkState]] = []
        self.emitted = 0

    def start(self, at: int = 0) -> None:
        phase = self.rng.randrange(self.cfg.packetization)
        self.status = TalkStatus(TalkState.TALKING, at)
        if self.cfg.silence_suppression and self.cfg.silence_mean > 0:
            end = at + _holding_time(self.cfg.talk_spurt_mean, self.rng)
            self.sim.schedule_event(end, "talk", self._flip, target=self.name)
        self.sim.schedule_event(at + phase, "voice_tick", self._tick, target=self.name)

    def is_active(self) -> bool:
        return self.status.state is TalkState.TALKING

    def _flip(self) -> None:
        self.status, end = talk_state_transition(self.status, self.cfg, self.rng, self.sim.now)
        self.transitions.append((self.sim.now, self.status.state))
        if end is not None:
            self.sim.schedule_event(end, "talk", self._flip, target=self.name)

    def _tick(self) -> None:
        now = self.sim.now
        pdu = voice_emit_packet(self.cfg, now, self.is_active(), self.flow_id,
                                self.mac_header_bytes)
        if pdu is not None:
            self.emitted += 1
            self.offer(pdu)
        self.sim.schedule_event(now + self.cfg.packetization, "voice_tick", self._tick,
                                target=self.name)


@dataclass(frozen=True)
class DataSourceConfig:
    request_bytes: int = 500
    response_bytes: int = 2000
    think_time_mean: int = 1_000_000  # us
    concurrency: int = 1
    timeout: int = 5_000_000          # us; an unanswered transaction is abandoned
    segment_bytes: int = 1500         # largest SDU handed to the MAC

    def __post_init__(self):
        if self.request_bytes <= 0 or self.response_bytes <= 0:
            raise ValueError("request and response sizes must be positive")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")
        if self.segment_bytes <= 0 or self.timeout <= 0:
            raise ValueError("segment size and timeout must be positive")


def segment_sizes(nbytes: int, segment: int) -> list[int]:
    full, rest = divmod(nbytes, segment)
    return [segment] * full + ([rest] if rest else [])


class DataAction(enum.Enum):
    SEND_REQUEST = "send_request"
    AWAIT_RESPONSE = "await_response"
    THINK = "think"
    IGNORE = "ignore"


@dataclass
class Transaction:
    txn_id: int
    client: "DataClient"
    slot: int
    started_at: int
    timeout_event: Event | None = field(default=None, repr=False)


class DataClient:
    """Closed-loop client: at most ``concurrency`` transactions in flight.

    Each slot cycles think -> send request -> await response. A transaction
    that is not answered within the timeout is abandoned and the slot goes
    back to thinking, so a starved connection keeps receiving new requests.
    """

    def __init__(self, sim: Simulator, cfg: DataSourceConfig, rng: random.Random,
                 send_request: Callable[[Transaction, list[int]], None], name: str = "data"):
        self.sim = sim
        self.cfg = cfg
        self.rng = rng
        self.send_request = send_request
        self.name = name
        self.in_flight: dict[int, Transaction] = {}
        self._next_id = 0
        self.started = 0
        self.completed = 0
        self.timed_out = 0
        self.response_times: list[int] = []

    def start(self, at: int = 0) -> None:
        for slot in range(self.cfg.concurrency):
            self.sim.schedule_event(at + self._think(), "data_think", self.step,
                                    "think_done", slot, target=self.name)

    def _think(self) -> int:
        if self.cfg.think_time_mean <= 0:
            return 0
        return round(self.rng.expovariate(1.0 / self.cfg.think_time_mean))

    def step(self, event: str, arg: int) -> DataAction:
        """Advance the state machine.

        ``event`` is ``think_done`` (arg = slot), ``response`` or ``timeout``
        (arg = transaction id).
        """
        now = self.sim.now
        if event == "think_done":
            if len(self.in_flight) >= self.cfg.concurrency:
                raise RuntimeError(f"{self.name}: concurrency limit exceeded")
            txn = Transaction(self._next_id, self, arg, now)
            self._next_id += 1
            self.started += 1
            self.in_flight[txn.txn_id] = txn
            txn.timeout_event = self.sim.schedule_event(
                now + self.cfg.timeout, "data_timeout", self.step, "timeout", txn.txn_id,
                target=self.name)
            self.send_request(txn, segment_sizes(self.cfg.request_bytes, self.cfg.segment_bytes))
            return DataAction.SEND_REQUEST
        txn = self.in_flight.pop(arg, None)
        if txn is None:
            # late response to an abandoned transaction
            return DataAction.IGNORE
        if event == "response":
            txn.timeout_event.cancel()
            self.completed += 1
            self.response_times.append(now - txn.started_at)
        elif event == "timeout":
            self.timed_out += 1
        else:
            raise ValueError(f"unknown data client event {event!r}")
        self.sim.schedule_event(now + self._think(), "data_think", self.step, "think_done",
                                txn.slot, target=self.name)
        return DataAction.THINK
