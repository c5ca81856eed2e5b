"""Shared test utilities: golden-table replay and small scheduler fixtures."""

import json
from pathlib import Path

from wimaxqos.qos import AppTag, Direction, MacPdu, SchedulingType, ServiceClass, ServiceFlow
from wimaxqos.scheduler import BwRequest, FrameScheduler, GrantChange, GrantKind

GOLDEN_DIR = Path(__file__).parent / "golden"


def make_flow(fid, sched_type, mstr, mrtr=0, sdu=None, direction=Direction.UPLINK):
    if sched_type is SchedulingType.UGS:
        mrtr = mstr
    cls = ServiceClass(f"c{fid}", sched_type, mstr, mrtr, sdu_size=sdu)
    return ServiceFlow(fid, direction, cls, f"ms{fid}")


def fill(flow, n, size, hdr=0, t=0):
    for _ in range(n):
        flow.enqueue(MacPdu(flow.flow_id, size, hdr, t, t, AppTag.DATA), t)


def golden_cases():
    return sorted(GOLDEN_DIR.glob("*.json"))


def replay_golden(path):
    """Rebuild the case's scheduler, run it and return (case, ledgers, scheduler).

    Every data grant to a polled or BE flow is assumed fully used.
    """
    case = json.loads(Path(path).read_text())
    sched = FrameScheduler(case["capacity"], case["frame_duration"])
    for spec in case["flows"]:
        st = SchedulingType.parse(spec["type"])
        sched.add_flow(make_flow(spec["id"], st, spec["mstr"], spec.get("mrtr", 0),
                                 spec.get("sdu")))
    ledgers = []
    for k in range(case["frames"]):
        pending = []
        for kind, fid, n in case["requests"].get(str(k), []):
            pending.append(BwRequest(fid, n, k) if kind == "bw" else GrantChange(fid, n, k))
        ledger = sched.build_frame_map(k, pending)
        for g in ledger.grants:
            if g.kind is GrantKind.DATA:
                sched.note_usage(g.flow_id, g.granted_bytes)
        ledger.settle([g.granted_bytes for g in ledger.grants])
        ledger.check()
        ledgers.append(ledger)
    return case, ledgers, sched


def golden_matches(path):
    case, ledgers, sched = replay_golden(path)
    got = [[list(r) for r in ledger.as_rows()] for ledger in ledgers]
    silent = {str(k): v for k, v in sched.stats.silent_frames.items() if v}
    return (got == case["expected"]
            and sched.stats.admission_violations == case["admission_violations"]
            and silent == case["silent_frames"])
