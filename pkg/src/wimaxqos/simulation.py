"""One WiMAX cell: stations, service flows, sources, both schedulers and the
air links, driven frame by frame on the event engine."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import LinkModel
from .config import ScenarioConfig
from .engine import FrameClock, RandomStreams, Simulator
from .metrics import FlowMetrics, MetricsRecorder, fmt_time
from .qos import AppTag, Direction, MacPdu, SchedulingType, ServiceFlow
from .scheduler import (BwRequest, FrameLedger, FrameScheduler, GrantChange, GrantKind,
                        be_contention_request)
from .traffic import DataClient, Transaction, VoiceSource, segment_sizes

log = logging.getLogger(__name__)

_ROLES = {
    # role: (short name, direction, app)
    "voice_uplink": ("voice_ul", Direction.UPLINK, AppTag.VOICE),
    "voice_downlink": ("voice_dl", Direction.DOWNLINK, AppTag.VOICE),
    "reservation_uplink": ("resv_ul", Direction.UPLINK, AppTag.RESERVATION),
    "data_uplink": ("data_ul", Direction.UPLINK, AppTag.DATA),
    "data_downlink": ("data_dl", Direction.DOWNLINK, AppTag.DATA),
}
_PERIODIC = (SchedulingType.UGS, SchedulingType.ERTPS)


@dataclass
class Station:
    name: str
    voice: bool
    flows: dict[str, ServiceFlow] = field(default_factory=dict)


@dataclass
class CellResult:
    summary: dict
    rows: list
    frame_rows: list
    recorder: MetricsRecorder
    flows: dict
    schedulers: dict
    trace: list | None = None


class CellSimulation:
    def __init__(self, cfg: ScenarioConfig, seed: int | None = None, cell: int = 0,
                 prefix: str = "", dump_frames: bool = False, trace: bool = False):
        self.cfg = cfg
        self.seed = cfg.run.seed if seed is None else seed
        self.cell = cell
        self.prefix = prefix
        self.dump_frames = dump_frames
        fc = cfg.frame
        self.sim = Simulator(trace=trace)
        self.clock = FrameClock(fc.duration_us)
        self.streams = RandomStreams(self.seed)
        self.duration = round(cfg.run.duration_s * 1_000_000)
        self.warmup = round(cfg.run.warmup_s * 1_000_000)
        self.interval = cfg.run.report_interval_ms * 1000
        self.recorder = MetricsRecorder(self.interval, self.warmup,
                                        round(cfg.run.mos_window_s * 1_000_000))
        self.schedulers = {
            d: FrameScheduler(cap, fc.duration_us, direction=d,
                              bw_request_size=fc.bw_request_bytes,
                              mac_header_bytes=fc.mac_header_bytes,
                              rtps_poll_interval=fc.rtps_poll_interval_frames,
                              nrtps_poll_interval=fc.nrtps_poll_interval_frames,
                              be_min_grant=cfg.data.segment_bytes + fc.mac_header_bytes)
            for d, cap in ((Direction.UPLINK, fc.ul_capacity_bytes),
                           (Direction.DOWNLINK, fc.dl_capacity_bytes))}
        self.pending: dict[Direction, list] = {d: [] for d in Direction}
        self.flows: dict[int, ServiceFlow] = {}
        self.metrics: dict[int, FlowMetrics] = {}
        self.stations: list[Station] = []
        self.links: dict[tuple[str, Direction], LinkModel] = {}
        self.voice_sources: dict[int, VoiceSource] = {}
        self.clients: dict[str, DataClient] = {}
        self._signaled: dict[int, bool] = {}
        self._progress: dict[tuple[str, int], int] = {}
        self._silent_at_warmup: dict[int, int] = {}
        self._direction_flows: dict[Direction, list[ServiceFlow]] = {d: [] for d in Direction}
        self.frame_rows: list = []
        self.ledger_totals = {d: [0, 0, 0] for d in Direction}
        self._build()

    def _build(self) -> None:
        cfg = self.cfg
        nv = cfg.topology.voice_nodes
        fid = 0
        for i in range(cfg.topology.nodes_per_cell):
            st = Station(f"ms{i}", voice=i < nv)
            self.stations.append(st)
            for role, (short, direction, app) in _ROLES.items():
                if app is not AppTag.DATA and not st.voice:
                    continue
                cls_name = getattr(cfg.flows, role)
                if not cls_name:
                    continue
                flow = ServiceFlow(fid, direction, cfg.classes[cls_name], st.name,
                                   name=f"{self.prefix}{st.name}.{short}")
                fid += 1
                st.flows[short] = flow
                self.flows[flow.flow_id] = flow
                self._direction_flows[direction].append(flow)
                self.schedulers[direction].add_flow(flow)
                self.metrics[flow.flow_id] = self.recorder.add_flow(
                    flow, flow.name, voice=app is AppTag.VOICE)
                if flow.scheduling_type is SchedulingType.ERTPS:
                    self._signaled[flow.flow_id] = True
            for d, tag in ((Direction.UPLINK, "ul"), (Direction.DOWNLINK, "dl")):
                rng = self.streams.stream(self.streams.register(f"link/{st.name}/{tag}"))
                self.links[(st.name, d)] = LinkModel(cfg.channel.one_way_delay_us,
                                                     cfg.channel.loss_for(st.name), rng)
        for st in self.stations:
            for short in ("voice_ul", "voice_dl"):
                flow = st.flows.get(short)
                if flow is None:
                    continue
                rng = self.streams.stream(self.streams.register(f"voice/{st.name}/{short}"))
                self.voice_sources[flow.flow_id] = VoiceSource(
                    self.sim, cfg.voice, rng, self._offer_to(flow), flow.flow_id,
                    cfg.frame.mac_header_bytes, name=flow.name)
            if "data_ul" in st.flows:
                rng = self.streams.stream(self.streams.register(f"data/{st.name}"))
                self.clients[st.name] = DataClient(
                    self.sim, cfg.data, rng, self._request_sender(st), name=f"{st.name}.data")

    # -- sources -------------------------------------------------------------

    def _offer(self, flow: ServiceFlow, pdu: MacPdu) -> None:
        now = self.sim.now
        flow.enqueue(pdu, now)
        self.recorder.record_load(flow.flow_id, pdu, now)
        self.recorder.queue_changed(flow.flow_id, now)

    def _offer_to(self, flow: ServiceFlow):
        return lambda pdu: self._offer(flow, pdu)

    def _request_sender(self, st: Station):
        flow = st.flows["data_ul"]
        hdr = self.cfg.frame.mac_header_bytes

        def send(txn: Transaction, sizes: list[int]) -> None:
            now = self.sim.now
            for i, size in enumerate(sizes):
                self._offer(flow, MacPdu(flow.flow_id, size, hdr, now, now, AppTag.DATA,
                                         meta=("req", st.name, txn, len(sizes))))
        return send

    # -- air interface -------------------------------------------------------

    def _deliver(self, flow: ServiceFlow, pdus: list[MacPdu]) -> None:
        now = self.sim.now
        for pdu in pdus:
            self.recorder.record_throughput(flow.flow_id, pdu, now)
            if pdu.meta is not None:
                self._app_receive(pdu.meta)

    def _app_receive(self, meta) -> None:
        kind, station, txn, nseg = meta
        key = (f"{kind}/{station}", txn.txn_id)
        got = self._progress.get(key, 0) + 1
        if got < nseg:
            self._progress[key] = got
            return
        self._progress.pop(key, None)
        if kind == "req":
            st = self.stations[int(station[2:])]
            dl = st.flows.get("data_dl")
            if dl is None:
                return
            now = self.sim.now
            sizes = segment_sizes(self.cfg.data.response_bytes, self.cfg.data.segment_bytes)
            for size in sizes:
                self._offer(dl, MacPdu(dl.flow_id, size, self.cfg.frame.mac_header_bytes,
                                       now, now, AppTag.DATA,
                                       meta=("resp", station, txn, len(sizes))))
        else:
            txn.client.step("response", txn.txn_id)

    def _ertps_active(self, flow: ServiceFlow) -> bool:
        if flow.backlog_bytes() > 0:
            return True
        src = self.voice_sources.get(flow.flow_id)
        return src is not None and src.is_active()

    def _signal_ertps(self, flow: ServiceFlow, sched: FrameScheduler, k: int, out: list) -> bool:
        fid = flow.flow_id
        active = self._ertps_active(flow)
        if active == self._signaled[fid]:
            return False
        out.append(GrantChange(fid, sched.ertps[fid].nominal_grant_bytes if active else 0, k))
        self._signaled[fid] = active
        return True

    def _run_direction(self, k: int, direction: Direction) -> None:
        sched = self.schedulers[direction]
        now = self.sim.now
        fc = self.cfg.frame
        requests = self.pending[direction]
        if direction is Direction.DOWNLINK:
            # the BS owns downlink queues: no request signalling needed
            requests += [BwRequest(f.flow_id, f.backlog_bytes(), k)
                         for f in self._direction_flows[direction]
                         if f.scheduling_type not in _PERIODIC]
            for f in self._direction_flows[direction]:
                if f.scheduling_type is SchedulingType.ERTPS:
                    self._signal_ertps(f, sched, k, requests)
        ledger = sched.build_frame_map(k, requests)
        new_requests: list = []
        used: list[int] = []
        flows = self.flows
        recorder = self.recorder
        for g in ledger.grants:
            flow = flows[g.flow_id]
            fid = g.flow_id
            if g.kind is GrantKind.DATA:
                pdus = flow.dequeue_up_to(g.granted_bytes)
                u = 0
                if pdus:
                    recorder.queue_changed(fid, now)
                    link = self.links[(flow.owner_station, direction)]
                    arriving = []
                    for pdu in pdus:
                        u += pdu.total_bytes
                        t = link.transmit(pdu, now)
                        recorder.record_transmit(fid, pdu, now, lost=t is None)
                        if t is not None:
                            arriving.append(pdu)
                    if arriving:
                        self.sim.schedule_event(now + link.one_way_delay, "deliver",
                                                self._deliver, flow, arriving, target=flow.name)
                sched.note_usage(fid, u)
            elif flow.scheduling_type is SchedulingType.ERTPS:
                u = 0
            else:
                new_requests.append(BwRequest(fid, flow.backlog_bytes(), k))
                u = g.granted_bytes
            if flow.scheduling_type is SchedulingType.ERTPS and direction is Direction.UPLINK:
                if self._signal_ertps(flow, sched, k, new_requests) and g.kind is GrantKind.POLL:
                    u = g.granted_bytes
            used.append(u)
        if direction is Direction.UPLINK:
            period = fc.be_contention_period_frames
            for flow in self._direction_flows[direction]:
                if flow.scheduling_type in (SchedulingType.BE, SchedulingType.NRTPS):
                    req = be_contention_request(flow, k, period)
                    if req is not None:
                        new_requests.append(req)
        ledger.settle(used)
        ledger.check()
        totals = self.ledger_totals[direction]
        totals[0] += ledger.granted_bytes
        totals[1] += ledger.bytes_used
        totals[2] += ledger.bytes_wasted
        self.pending[direction] = new_requests
        if self.dump_frames:
            self._dump(ledger, direction)

    def _dump(self, ledger: FrameLedger, direction: Direction) -> None:
        grants = ";".join(f"{self.flows[g.flow_id].name}:{g.granted_bytes}:{g.kind.value}"
                          for g in ledger.grants)
        self.frame_rows.append((ledger.frame_index, direction.value, ledger.capacity_bytes,
                                ledger.granted_bytes, ledger.bytes_used, ledger.bytes_wasted,
                                grants))

    def _frame(self, k: int) -> None:
        self._run_direction(k, Direction.UPLINK)
        self._run_direction(k, Direction.DOWNLINK)
        nxt = self.clock.frame_start(k + 1)
        if nxt <= self.duration:
            self.sim.schedule_event(nxt, "frame", self._frame, k + 1, target="bs")

    # -- run -----------------------------------------------------------------

    def _audit(self) -> None:
        self.recorder.audit(self.sim.now)

    def _snapshot_warmup(self) -> None:
        for sched in self.schedulers.values():
            self._silent_at_warmup.update(sched.stats.silent_frames)

    def run(self) -> CellResult:
        sim = self.sim
        # reporting boundaries go in first so they precede anything else at the same instant
        for t in range(self.interval, self.duration + 1, self.interval):
            sim.schedule_event(t, "report", self.recorder.close_interval, t, target="metrics")
        audit_step = round(self.cfg.run.audit_interval_s * 1_000_000)
        for t in range(audit_step, self.duration + 1, audit_step):
            sim.schedule_event(t, "audit", self._audit, target="metrics")
        sim.schedule_event(self.warmup, "warmup", self._snapshot_warmup, target="metrics")
        sim.schedule_event(0, "frame", self._frame, 0, target="bs")
        for src in self.voice_sources.values():
            src.start(0)
        for client in self.clients.values():
            client.start(0)
        sim.run_until(self.duration)
        if self.duration % self.interval:
            self.recorder.close_interval(self.duration)
        self.recorder.audit(self.duration)
        return CellResult(self._summary(), self.recorder.rows, self.frame_rows, self.recorder,
                          self.flows, self.schedulers, sim.trace)

    # -- summary -------------------------------------------------------------

    def _summary(self) -> dict:
        steady_s = (self.duration - self.warmup) / 1_000_000
        total_s = self.duration / 1_000_000
        flows_out = {}
        voice_delays = []
        voice_mos = []
        flags = []
        for fid, flow in self.flows.items():
            fm = self.metrics[fid]
            delays = np.asarray(fm.steady_delays, dtype=float) / 1000
            cls = flow.service_class
            offered_bps = flow.bytes_offered * 8 / total_s
            entry = {
                "station": flow.owner_station,
                "direction": flow.direction.value,
                "service_class": cls.name,
                "scheduling_type": cls.scheduling_type.value,
                "bytes_offered": flow.bytes_offered,
                "bytes_sent": flow.bytes_sent,
                "bytes_dropped": flow.bytes_dropped,
                "bytes_queued": flow.queued_payload_bytes,
                "bytes_delivered": fm.delivered_bytes,
                "pdus_sent": flow.pdus_sent,
                "pdus_lost": fm.lost_pdus,
                "loss_fraction": fm.lost_pdus / fm.tx_pdus if fm.tx_pdus else 0.0,
                "offered_bps": offered_bps,
                "throughput_bps_steady": fm.steady_delivered_bytes * 8 / steady_s,
                "delay_mean_ms": float(delays.mean()) if delays.size else None,
                "delay_p95_ms": float(np.percentile(delays, 95)) if delays.size else None,
                "delay_max_ms": float(delays.max()) if delays.size else None,
                "conservation_delta": flow.conservation_delta(),
            }
            if cls.scheduling_type in _PERIODIC and offered_bps > cls.nominal_rate * 1.01:
                flags.append(f"UGS under-provisioned: {flow.name} offers {offered_bps:.0f} bit/s "
                             f"against a {cls.nominal_rate} bit/s reservation"
                             if cls.scheduling_type is SchedulingType.UGS else
                             f"ertPS under-provisioned: {flow.name} offers {offered_bps:.0f} "
                             f"bit/s against a {cls.nominal_rate} bit/s reservation")
            if fm.voice:
                voice_delays.append(delays)
                steady_scores = [s for t, s, _ in fm.scores if t > self.warmup]
                scored = [s for s in steady_scores if not s.no_data]
                mos = [s.mos for s in scored]
                voice_mos += mos
                entry["voice_quality"] = {
                    "windows": len(steady_scores),
                    "no_data_windows": len(steady_scores) - len(scored),
                    "mos_mean": float(np.mean(mos)) if mos else None,
                    "mos_min": min(mos) if mos else None,
                    "mos_max": max(mos) if mos else None,
                    "mos_final": mos[-1] if mos else None,
                    "r_mean": float(np.mean([s.r_value for s in scored])) if scored else None,
                    "id_mean": float(np.mean([s.id_component for s in scored])) if scored else None,
                    "ie_mean": float(np.mean([s.ie_component for s in scored])) if scored else None,
                }
            for sched in self.schedulers.values():
                if fid in sched.stats.silent_frames:
                    total = sched.stats.silent_frames[fid]
                    entry["silent_frames"] = total
                    entry["silent_frames_steady"] = total - self._silent_at_warmup.get(fid, 0)
            flows_out[flow.name] = entry

        def be_flows(direction):
            return [f for f in self._direction_flows[direction]
                    if f.scheduling_type is SchedulingType.BE]

        be_ul = be_flows(Direction.UPLINK)
        pooled = np.concatenate(voice_delays) if voice_delays else np.empty(0)
        ul_voice = [f for f in self._direction_flows[Direction.UPLINK]
                    if self.metrics[f.flow_id].voice]
        aggregate = {
            "voice_delay_mean_ms": float(pooled.mean()) if pooled.size else None,
            "voice_delay_p95_ms": float(np.percentile(pooled, 95)) if pooled.size else None,
            "voice_mos_mean": float(np.mean(voice_mos)) if voice_mos else None,
            "be_ul_delivered_bytes_steady": sum(self.metrics[f.flow_id].steady_delivered_bytes
                                                for f in be_ul),
            "be_ul_throughput_bps_steady": sum(self.metrics[f.flow_id].steady_delivered_bytes
                                               for f in be_ul) * 8 / steady_s,
            "be_ul_queued_bytes": sum(f.queued_payload_bytes for f in be_ul),
            "voice_ul_silent_frames_steady": sum(flows_out[f.name].get("silent_frames_steady", 0)
                                                 for f in ul_voice),
            "transactions_started": sum(c.started for c in self.clients.values()),
            "transactions_completed": sum(c.completed for c in self.clients.values()),
            "transactions_timed_out": sum(c.timed_out for c in self.clients.values()),
        }
        schedulers = {}
        for d, sched in self.schedulers.items():
            granted, used, wasted = self.ledger_totals[d]
            schedulers[d.value] = {
                "capacity_bytes_per_frame": sched.capacity,
                "admission_violations": sched.stats.admission_violations,
                "shed_bytes": sched.stats.shed_bytes,
                "granted_bytes": granted,
                "used_bytes": used,
                "wasted_bytes": wasted,
            }
        return {
            "scenario": self.cfg.name,
            "cell": self.cell,
            "seed": self.seed,
            "duration_s": self.cfg.run.duration_s,
            "warmup_s": self.cfg.run.warmup_s,
            "end_time_s": fmt_time(self.duration),
            "events_processed": self.sim.processed,
            "audits_passed": True,
            "flags": flags,
            "aggregate": aggregate,
            "schedulers": schedulers,
            "flows": flows_out,
        }
