"""Per-flow measurement: load, throughput, queue depth, delay, windowed voice
quality, plus conservation audits and CSV/JSON output."""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .emodel import VoiceWindowStats, score_window
from .errors import InvariantViolation
from .qos import MacPdu, ServiceFlow

CSV_HEADER = ("time_s", "entity", "metric", "value")


def fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.10g}"


def fmt_time(t_us: int) -> str:
    s, us = divmod(t_us, 1_000_000)
    return f"{s}.{us:06d}"


@dataclass
class MetricSeries:
    name: str
    unit: str
    samples: list[tuple[int, float]] = field(default_factory=list)

    def add(self, t: int, value: float) -> None:
        if self.samples and t <= self.samples[-1][0]:
            raise ValueError(f"{self.name}: sample time {t} not after {self.samples[-1][0]}")
        self.samples.append((t, value))

    def times(self) -> list[int]:
        return [t for t, _ in self.samples]

    def values(self) -> list[float]:
        return [v for _, v in self.samples]


@dataclass(frozen=True)
class DelaySample:
    created_at: int
    delivered_at: int

    @property
    def end_to_end(self) -> int:
        return self.delivered_at - self.created_at


@dataclass
class _VoiceBin:
    delay_sum: int = 0
    received: int = 0
    lost: int = 0
    jitter_sum: int = 0
    jitter_n: int = 0


class FlowMetrics:
    def __init__(self, flow: ServiceFlow, entity: str, voice: bool, window_bins: int):
        self.flow = flow
        self.entity = entity
        self.voice = voice
        self.series: dict[str, MetricSeries] = {}
        self.load_bytes = 0
        self.tput_bytes = 0
        self.delay_sum = 0
        self.delay_n = 0
        self.depth = 0
        self.depth_since = 0
        self.depth_integral = 0
        self.delivered_bytes = 0
        self.delivered_pdus = 0
        self.lost_pdus = 0
        self.lost_bytes = 0
        self.tx_bytes = 0
        self.tx_pdus = 0
        self.steady_delays: list[int] = []
        self.steady_delivered_bytes = 0
        self.steady_lost_pdus = 0
        self.steady_tx_pdus = 0
        self.min_delay: int | None = None
        self._bin = _VoiceBin()
        self._window: deque[_VoiceBin] = deque(maxlen=window_bins)
        self._last_delay: int | None = None
        self.scores: list[tuple[int, object, VoiceWindowStats]] = []

    def series_for(self, name: str, unit: str) -> MetricSeries:
        s = self.series.get(name)
        if s is None:
            s = self.series[name] = MetricSeries(f"{self.entity}.{name}", unit)
        return s


def audit_conservation(flow: ServiceFlow) -> tuple[bool, int]:
    delta = flow.conservation_delta()
    return delta == 0, delta


class MetricsRecorder:
    """Collects per-flow statistics and closes one reporting window at a time.

    Load is counted when a PDU is offered to the MAC queue (accepted or not),
    throughput when it is delivered at the far side, both in payload bytes.
    """

    def __init__(self, interval_us: int = 1_000_000, warmup_us: int = 0,
                 mos_window_us: int = 10_000_000, codec: str = "g711"):
        self.interval = interval_us
        self.warmup = warmup_us
        self.window_bins = max(1, mos_window_us // interval_us)
        self.codec = codec
        self.flows: dict[int, FlowMetrics] = {}
        self.rows: list[tuple[str, str, str, str]] = []
        self._closed_at = 0

    def add_flow(self, flow: ServiceFlow, entity: str, voice: bool = False) -> FlowMetrics:
        fm = FlowMetrics(flow, entity, voice, self.window_bins)
        self.flows[flow.flow_id] = fm
        return fm

    def record_load(self, flow_id: int, pdu: MacPdu, now: int) -> None:
        self.flows[flow_id].load_bytes += pdu.payload_bytes

    def queue_changed(self, flow_id: int, now: int) -> None:
        fm = self.flows[flow_id]
        fm.depth_integral += fm.depth * (now - fm.depth_since)
        fm.depth_since = now
        fm.depth = fm.flow.queued_payload_bytes

    def record_transmit(self, flow_id: int, pdu: MacPdu, now: int, lost: bool) -> None:
        fm = self.flows[flow_id]
        fm.tx_bytes += pdu.payload_bytes
        fm.tx_pdus += 1
        steady = now >= self.warmup
        if steady:
            fm.steady_tx_pdus += 1
        if lost:
            fm.lost_pdus += 1
            fm.lost_bytes += pdu.payload_bytes
            if steady:
                fm.steady_lost_pdus += 1
            if fm.voice:
                fm._bin.lost += 1

    def record_throughput(self, flow_id: int, pdu: MacPdu, now: int) -> None:
        fm = self.flows[flow_id]
        fm.tput_bytes += pdu.payload_bytes
        fm.delivered_bytes += pdu.payload_bytes
        fm.delivered_pdus += 1
        d = now - pdu.created_at
        fm.delay_sum += d
        fm.delay_n += 1
        if fm.min_delay is None or d < fm.min_delay:
            fm.min_delay = d
        if now >= self.warmup:
            fm.steady_delays.append(d)
            fm.steady_delivered_bytes += pdu.payload_bytes
        if fm.voice:
            b = fm._bin
            b.delay_sum += d
            b.received += 1
            if fm._last_delay is not None:
                b.jitter_sum += abs(d - fm._last_delay)
                b.jitter_n += 1
            fm._last_delay = d

    def close_interval(self, t: int) -> None:
        span = t - self._closed_at
        if span <= 0:
            return
        secs = span / 1_000_000
        ts = fmt_time(t)
        rows = self.rows
        for fm in self.flows.values():
            ent = fm.entity
            load = fm.load_bytes * 8 / secs
            tput = fm.tput_bytes * 8 / secs
            fm.depth_integral += fm.depth * (t - fm.depth_since)
            fm.depth_since = t
            qmean = fm.depth_integral / span
            fm.series_for("load_bps", "bit/s").add(t, load)
            fm.series_for("throughput_bps", "bit/s").add(t, tput)
            fm.series_for("queue_bytes", "B").add(t, fm.depth)
            fm.series_for("queue_mean_bytes", "B").add(t, qmean)
            rows.append((ts, ent, "load_bps", fmt(load)))
            rows.append((ts, ent, "throughput_bps", fmt(tput)))
            rows.append((ts, ent, "queue_bytes", fmt(fm.depth)))
            rows.append((ts, ent, "queue_mean_bytes", fmt(qmean)))
            if fm.delay_n:
                dms = fm.delay_sum / fm.delay_n / 1000
                fm.series_for("delay_ms", "ms").add(t, dms)
                rows.append((ts, ent, "delay_ms", fmt(dms)))
            fm.load_bytes = fm.tput_bytes = fm.delay_sum = fm.delay_n = 0
            fm.depth_integral = 0
            if fm.voice:
                self._score_voice(fm, t, ts)
        self._closed_at = t

    def _score_voice(self, fm: FlowMetrics, t: int, ts: str) -> None:
        fm._window.append(fm._bin)
        fm._bin = _VoiceBin()
        if len(fm._window) < self.window_bins:
            return
        received = sum(b.received for b in fm._window)
        lost = sum(b.lost for b in fm._window)
        jn = sum(b.jitter_n for b in fm._window)
        start = t - self.window_bins * self.interval
        if received == 0:
            stats = VoiceWindowStats(start, t, 0.0, 0.0, received=0)
        else:
            stats = VoiceWindowStats(
                start, t,
                mean_mouth_to_ear_delay=sum(b.delay_sum for b in fm._window) / received / 1000,
                packet_loss_fraction=lost / (received + lost),
                received=received,
                jitter_ms=(sum(b.jitter_sum for b in fm._window) / jn / 1000) if jn else 0.0)
        score = score_window(stats, self.codec)
        fm.scores.append((t, score, stats))
        rows = self.rows
        if score.no_data:
            rows.append((ts, fm.entity, "mos_no_data", "1"))
            return
        for name, unit, value in (("r_factor", "", score.r_value), ("mos", "", score.mos),
                                  ("id", "", score.id_component), ("ie", "", score.ie_component),
                                  ("win_delay_ms", "ms", stats.mean_mouth_to_ear_delay),
                                  ("win_loss", "", stats.packet_loss_fraction),
                                  ("win_jitter_ms", "ms", stats.jitter_ms)):
            fm.series_for(name, unit).add(t, value)
            rows.append((ts, fm.entity, name, fmt(value)))

    def audit(self, now: int) -> None:
        bad = []
        for fm in self.flows.values():
            ok, delta = audit_conservation(fm.flow)
            if not ok:
                f = fm.flow
                bad.append(f"{fm.entity}: offered={f.bytes_offered} sent={f.bytes_sent} "
                           f"dropped={f.bytes_dropped} queued={f.queued_payload_bytes} "
                           f"delta={delta}")
        if bad:
            raise InvariantViolation(f"conservation audit failed at t={fmt_time(now)}s",
                                     dump="\n".join(bad))


def write_metrics_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)


def read_metrics_csv(path: Path) -> dict[tuple[str, str], list[tuple[float, float]]]:
    out: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for t, ent, metric, value in reader:
            out.setdefault((ent, metric), []).append((float(t), float(value)))
    return out


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
