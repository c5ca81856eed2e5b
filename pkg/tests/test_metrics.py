import random

import pytest

from helpers import make_flow
from wimaxqos.emodel import r_to_mos
from wimaxqos.engine import Simulator
from wimaxqos.errors import InvariantViolation
from wimaxqos.metrics import (DelaySample, MetricSeries, MetricsRecorder, audit_conservation,
                              read_metrics_csv, write_metrics_csv)
from wimaxqos.qos import AppTag, MacPdu, SchedulingType
from wimaxqos.scheduler import PeriodicGrant

SEC = 1_000_000


def rows_for(rec, metric):
    return [float(v) for _, _, m, v in rec.rows if m == metric]


def recorder_with_flow(voice=False, **kw):
    rec = MetricsRecorder(**kw)
    flow = make_flow(0, SchedulingType.UGS, 96_000)
    rec.add_flow(flow, "f0", voice=voice)
    return rec, flow


def test_series_times_strictly_increase():
    s = MetricSeries("x", "B")
    s.add(1, 0.0)
    with pytest.raises(ValueError):
        s.add(1, 1.0)


def test_delay_sample():
    assert DelaySample(100, 1350).end_to_end == 1250


def test_cbr_load_and_throughput_rates():
    rec, flow = recorder_with_flow()
    for i in range(100):
        t = i * 10_000
        pdu = MacPdu(0, 120, 6, t, t, AppTag.VOICE)
        rec.record_load(0, pdu, t)
        rec.record_throughput(0, pdu, t + 1000)
    rec.close_interval(SEC)
    assert rows_for(rec, "load_bps") == [96_000]
    assert rows_for(rec, "throughput_bps") == [96_000]
    assert rows_for(rec, "delay_ms") == [1.0]


def test_idle_window_reports_zero():
    rec, _ = recorder_with_flow()
    rec.close_interval(SEC)
    assert rows_for(rec, "load_bps") == [0]
    assert rows_for(rec, "throughput_bps") == [0]


def test_conservation_audit_catches_double_count():
    rec, flow = recorder_with_flow()
    flow.enqueue(MacPdu(0, 120, 6, 0), 0)
    flow.dequeue_up_to(126)
    assert audit_conservation(flow) == (True, 0)
    rec.audit(0)
    flow.bytes_sent += 120  # injected fault
    assert audit_conservation(flow) == (False, -120)
    with pytest.raises(InvariantViolation) as exc:
        rec.audit(10 * SEC)
    assert "f0" in exc.value.dump


def test_voice_windows_score_and_flag_gaps():
    rec, _ = recorder_with_flow(voice=True, mos_window_us=2 * SEC)
    pdu = MacPdu(0, 120, 6, 0, 0, AppTag.VOICE)
    rec.record_transmit(0, pdu, 0, lost=False)
    rec.record_throughput(0, pdu, 80_000)
    rec.close_interval(SEC)
    assert rows_for(rec, "mos") == []  # window not yet full
    rec.close_interval(2 * SEC)
    assert rows_for(rec, "mos") == [pytest.approx(r_to_mos(94.2 - 0.024 * 80), abs=1e-9)]
    rec.close_interval(3 * SEC)
    rec.close_interval(4 * SEC)
    assert rows_for(rec, "mos_no_data") == [1, 1]


def test_csv_round_trip(tmp_path):
    rows = [("1.000000", "a", "load_bps", "96000"), ("2.000000", "a", "load_bps", "0")]
    write_metrics_csv(tmp_path / "m.csv", rows)
    assert read_metrics_csv(tmp_path / "m.csv") == {("a", "load_bps"): [(1.0, 96000.0),
                                                                          (2.0, 0.0)]}


def test_queue_growth_law():
    # 96 kbit/s offered against a 64 kbit/s periodic grant, no drops
    rec, flow = recorder_with_flow()
    grants = PeriodicGrant(64_000, 5000, sdu_size=120)
    sim = Simulator()

    def frame(k):
        now = sim.now
        if k % 2 == 0:
            pdu = MacPdu(0, 120, 0, now, now, AppTag.VOICE)
            flow.enqueue(pdu, now)
            rec.record_load(0, pdu, now)
        if flow.dequeue_up_to(grants.next_grant()[0]):
            pass
        rec.queue_changed(0, now)
        sim.schedule_in(5000, "frame", frame, k + 1)

    for t in range(SEC, 60 * SEC + 1, SEC):
        sim.schedule_event(t, "report", rec.close_interval, t)
    sim.schedule_event(0, "frame", frame, 0)
    sim.run_until(60 * SEC)
    depth = rows_for(rec, "queue_bytes")
    for i, d in enumerate(depth, start=1):
        assert abs(d - (96_000 - 64_000) * i / 8) <= 2 * 126


def test_littles_law_on_stationary_queue():
    rng = random.Random(17)
    rec, flow = recorder_with_flow()
    grants = PeriodicGrant(96_000, 5000, sdu_size=120)
    sim = Simulator()
    horizon = 300 * SEC

    def arrive():
        now = sim.now
        pdu = MacPdu(0, 120, 0, now, now, AppTag.DATA)
        flow.enqueue(pdu, now)
        rec.record_load(0, pdu, now)
        rec.queue_changed(0, now)
        sim.schedule_in(max(1, round(rng.expovariate(1 / 12_500))), "arrive", arrive)

    def frame():
        now = sim.now
        out = flow.dequeue_up_to(grants.next_grant()[0])
        if out:
            rec.queue_changed(0, now)
            for pdu in out:
                rec.record_throughput(0, pdu, now)
        sim.schedule_in(5000, "frame", frame)

    for t in range(SEC, horizon + 1, SEC):
        sim.schedule_event(t, "report", rec.close_interval, t)
    sim.schedule_event(0, "frame", frame)
    sim.schedule_event(0, "arrive", arrive)
    sim.run_until(horizon)
    fm = rec.flows[0]
    # skip the first 20 s as warm-up
    q = fm.series["queue_mean_bytes"].values()[20:]
    tp = fm.series["throughput_bps"].values()[20:]
    mean_q = sum(q) / len(q)
    mean_tp = sum(tp) / len(tp) / 8
    delays = fm.steady_delays[int(len(fm.steady_delays) * 20 / 300):]
    mean_delay = sum(delays) / len(delays) / SEC
    assert mean_delay == pytest.approx(mean_q / mean_tp, rel=0.10)
