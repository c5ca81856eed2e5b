"""Scenario configuration: schema, validation, presets.

Files are INI-style with one section per concern and ``[class.<Name>]``
sections for service classes. Key names carry their units.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .qos import SchedulingType, ServiceClass
from .traffic import DataSourceConfig, VoiceSourceConfig

PRESETS = ("baseline", "improve_voice", "improve_data")
FLOW_ROLES = ("voice_uplink", "voice_downlink", "reservation_uplink",
              "data_uplink", "data_downlink")


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 400.0
    seed: int = 1
    warmup_s: float = 20.0
    report_interval_ms: int = 1000
    audit_interval_s: float = 10.0
    mos_window_s: float = 10.0


@dataclass(frozen=True)
class TopologyConfig:
    cells: int = 1
    nodes_per_cell: int = 5
    # "ceil_quarter" (one in four, rounded up) or an explicit count
    voice_node_rule: str = "ceil_quarter"
    cell_radius_km: float = 0.2

    @property
    def voice_nodes(self) -> int:
        if self.voice_node_rule == "ceil_quarter":
            return math.ceil(self.nodes_per_cell / 4)
        return int(self.voice_node_rule)


@dataclass(frozen=True)
class FrameConfig:
    duration_us: int = 5000
    ul_capacity_bytes: int = 1625
    dl_capacity_bytes: int = 3250
    mac_header_bytes: int = 6
    bw_request_bytes: int = 6
    rtps_poll_interval_frames: int = 4
    nrtps_poll_interval_frames: int = 200
    be_contention_period_frames: int = 10


@dataclass(frozen=True)
class ChannelConfig:
    one_way_delay_us: int = 1000
    pdu_loss_prob: float = 0.005
    station_loss_prob: dict = field(default_factory=dict)

    def loss_for(self, station: str) -> float:
        return self.station_loss_prob.get(station, self.pdu_loss_prob)


@dataclass(frozen=True)
class FlowBindings:
    voice_uplink: str = "Gold"
    voice_downlink: str = "Gold"
    reservation_uplink: str = "Platinum"
    data_uplink: str = "Bronze"
    data_downlink: str = "Bronze"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    run: RunConfig = RunConfig()
    topology: TopologyConfig = TopologyConfig()
    frame: FrameConfig = FrameConfig()
    channel: ChannelConfig = ChannelConfig()
    classes: dict = field(default_factory=dict)
    flows: FlowBindings = FlowBindings()
    voice: VoiceSourceConfig = VoiceSourceConfig()
    data: DataSourceConfig = DataSourceConfig()
    metadata: dict = field(default_factory=dict)

    def replace(self, **sections) -> "ScenarioConfig":
        """Copy with selected fields of sections overridden, e.g.
        ``cfg.replace(channel={"pdu_loss_prob": 0.0})``. The result is
        revalidated; ConfigError lists every problem."""
        changes = {}
        for section, values in sections.items():
            current = getattr(self, section)
            if dataclasses.is_dataclass(current) and isinstance(values, dict):
                changes[section] = dataclasses.replace(current, **values)
            else:
                changes[section] = values
        new = dataclasses.replace(self, **changes)
        problems = validate(new)
        if problems:
            raise ConfigError(problems)
        return new


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_station_losses(text: str) -> dict:
    out = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        station, _, p = item.partition(":")
        out[station.strip()] = float(p)
    return out


# (section, key) -> (dataclass field, converter); units folded into the converter
_SECTIONS = {
    "run": (RunConfig, {
        "duration_s": ("duration_s", float),
        "seed": ("seed", int),
        "warmup_s": ("warmup_s", float),
        "report_interval_ms": ("report_interval_ms", int),
        "audit_interval_s": ("audit_interval_s", float),
        "mos_window_s": ("mos_window_s", float),
    }),
    "topology": (TopologyConfig, {
        "cells": ("cells", int),
        "nodes_per_cell": ("nodes_per_cell", int),
        "voice_node_rule": ("voice_node_rule", str.strip),
        "cell_radius_km": ("cell_radius_km", float),
    }),
    "frame": (FrameConfig, {
        "duration_us": ("duration_us", int),
        "ul_capacity_bytes": ("ul_capacity_bytes", int),
        "dl_capacity_bytes": ("dl_capacity_bytes", int),
        "mac_header_bytes": ("mac_header_bytes", int),
        "bw_request_bytes": ("bw_request_bytes", int),
        "rtps_poll_interval_frames": ("rtps_poll_interval_frames", int),
        "nrtps_poll_interval_frames": ("nrtps_poll_interval_frames", int),
        "be_contention_period_frames": ("be_contention_period_frames", int),
    }),
    "channel": (ChannelConfig, {
        "one_way_delay_us": ("one_way_delay_us", int),
        "pdu_loss_prob": ("pdu_loss_prob", float),
        "station_loss_prob": ("station_loss_prob", _parse_station_losses),
    }),
    "flows": (FlowBindings, {role: (role, str.strip) for role in FLOW_ROLES}),
    "voice": (VoiceSourceConfig, {
        "codec_rate_bps": ("codec_rate", int),
        "packetization_us": ("packetization", int),
        "header_overhead_bytes": ("header_overhead", int),
        "talk_spurt_mean_ms": ("talk_spurt_mean", lambda s: round(float(s) * 1000)),
        "silence_mean_ms": ("silence_mean", lambda s: round(float(s) * 1000)),
        "silence_suppression": ("silence_suppression", _parse_bool),
    }),
    "data": (DataSourceConfig, {
        "request_bytes": ("request_bytes", int),
        "response_bytes": ("response_bytes", int),
        "think_time_mean_ms": ("think_time_mean", lambda s: round(float(s) * 1000)),
        "concurrency": ("concurrency", int),
        "timeout_ms": ("timeout", lambda s: round(float(s) * 1000)),
        "segment_bytes": ("segment_bytes", int),
    }),
}

_CLASS_KEYS = {
    "scheduling_type": ("scheduling_type", SchedulingType.parse),
    "max_sustained_rate_bps": ("max_sustained_rate", int),
    "min_reserved_rate_bps": ("min_reserved_rate", int),
    "sdu_size_bytes": ("sdu_size", int),
    "max_traffic_burst_bytes": ("max_traffic_burst", int),
}

_SCENARIO_KEYS = {"name"}


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse and validate; raises ConfigError listing every problem."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    problems: list[str] = []
    built: dict = {}
    classes: dict[str, ServiceClass] = {}
    metadata: dict = {}
    name = "custom"

    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "scenario":
            for key in items:
                if key not in _SCENARIO_KEYS:
                    problems.append(f"[scenario] unknown key {key!r}")
            name = items.get("name", name)
        elif section == "metadata":
            metadata = items
        elif section.startswith("class."):
            cls_name = section[len("class."):]
            kwargs = {"name": cls_name}
            for key, raw in items.items():
                if key not in _CLASS_KEYS:
                    problems.append(f"[{section}] unknown key {key!r}")
                    continue
                fname, conv = _CLASS_KEYS[key]
                try:
                    kwargs[fname] = conv(raw)
                except ValueError as exc:
                    problems.append(f"[{section}] {key}: {exc}")
            for required in ("scheduling_type", "max_sustained_rate"):
                if required not in kwargs:
                    problems.append(f"[{section}] missing {required}")
            if all(r in kwargs for r in ("scheduling_type", "max_sustained_rate")):
                try:
                    classes[cls_name] = ServiceClass(**kwargs)
                except ValueError as exc:
                    problems.append(f"[{section}] {exc}")
        elif section in _SECTIONS:
            dc, keys = _SECTIONS[section]
            kwargs = {}
            for key, raw in items.items():
                if key not in keys:
                    problems.append(f"[{section}] unknown key {key!r}")
                    continue
                fname, conv = keys[key]
                try:
                    kwargs[fname] = conv(raw)
                except ValueError as exc:
                    problems.append(f"[{section}] {key}: {exc}")
            built[section] = (dc, kwargs)
        else:
            problems.append(f"unknown section [{section}]")

    sections = {}
    for section, (dc, _) in _SECTIONS.items():
        kwargs = built.get(section, (dc, {}))[1]
        try:
            sections[section] = dc(**kwargs)
        except (ValueError, TypeError) as exc:
            problems.append(f"[{section}] {exc}")
            sections[section] = dc()

    cfg = ScenarioConfig(name=name, classes=classes, metadata=metadata, **sections)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: ScenarioConfig) -> list[str]:
    p: list[str] = []
    r, t, f, c = cfg.run, cfg.topology, cfg.frame, cfg.channel
    if r.duration_s <= 0:
        p.append("[run] duration_s must be positive")
    if not 0 <= r.warmup_s < r.duration_s:
        p.append("[run] warmup_s must be in [0, duration_s)")
    if r.report_interval_ms <= 0:
        p.append("[run] report_interval_ms must be positive")
    if r.audit_interval_s <= 0 or r.mos_window_s <= 0:
        p.append("[run] audit_interval_s and mos_window_s must be positive")
    if t.cells < 1 or t.nodes_per_cell < 1:
        p.append("[topology] cells and nodes_per_cell must be at least 1")
    if t.voice_node_rule != "ceil_quarter":
        try:
            n = int(t.voice_node_rule)
            if not 0 <= n <= t.nodes_per_cell:
                p.append("[topology] voice node count out of range")
        except ValueError:
            p.append(f"[topology] voice_node_rule {t.voice_node_rule!r}: "
                     "expected 'ceil_quarter' or an integer")
    if f.duration_us <= 0:
        p.append("[frame] duration_us must be positive")
    if f.ul_capacity_bytes <= 0 or f.dl_capacity_bytes <= 0:
        p.append("[frame] capacities must be positive")
    if min(f.rtps_poll_interval_frames, f.nrtps_poll_interval_frames,
           f.be_contention_period_frames) < 1:
        p.append("[frame] poll and contention intervals must be at least 1 frame")
    if f.mac_header_bytes < 0 or f.bw_request_bytes <= 0:
        p.append("[frame] header sizes out of range")
    for station, prob in [("*", c.pdu_loss_prob), *c.station_loss_prob.items()]:
        if not 0.0 <= prob <= 1.0:
            p.append(f"[channel] loss probability for {station} outside [0, 1]")
    if c.one_way_delay_us < 0:
        p.append("[channel] one_way_delay_us must be non-negative")
    if r.report_interval_ms * 1000 % f.duration_us and f.duration_us > 0:
        p.append("[run] report_interval_ms must be a whole number of frames")

    for role in FLOW_ROLES:
        cls_name = getattr(cfg.flows, role)
        if cls_name and cls_name not in cfg.classes:
            p.append(f"[flows] {role} references undeclared class {cls_name!r}")
        elif cls_name:
            sc = cfg.classes[cls_name]
            if (sc.scheduling_type not in (SchedulingType.UGS, SchedulingType.ERTPS)
                    and sc.max_sustained_rate <= 0):
                p.append(f"[class.{cls_name}] polled/BE classes need a positive max rate")
    voice_nodes = t.voice_nodes if not any("voice_node_rule" in x for x in p) else 0
    data_nodes = t.nodes_per_cell - voice_nodes
    if not cfg.flows.data_uplink:
        if data_nodes > 0:
            p.append("[flows] stations without voice need a data_uplink flow")
        elif not (cfg.flows.voice_uplink or cfg.flows.reservation_uplink):
            p.append("[flows] every station needs at least one uplink flow")
    return p


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, source=str(path))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("wimaxqos.presets").joinpath(f"{name}.cfg").read_text()


def load_preset(name: str) -> ScenarioConfig:
    return parse_config(preset_text(name), source=f"preset:{name}")


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize to the file format; parse_config(dump_config(c)) == c."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["scenario"] = {"name": cfg.name}
    for section, (_, keys) in _SECTIONS.items():
        obj = getattr(cfg, section)
        values = {}
        for key, (fname, _) in keys.items():
            v = getattr(obj, fname)
            if key.endswith("_ms") and section in ("voice", "data"):
                v = v / 1000
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, dict):
                v = ", ".join(f"{k}:{x!r}" for k, x in sorted(v.items()))
            values[key] = str(v)
        parser[section] = values
    for cls_name, sc in cfg.classes.items():
        sec = {"scheduling_type": sc.scheduling_type.value,
               "max_sustained_rate_bps": str(sc.max_sustained_rate),
               "min_reserved_rate_bps": str(sc.min_reserved_rate)}
        if sc.sdu_size is not None:
            sec["sdu_size_bytes"] = str(sc.sdu_size)
        if sc.max_traffic_burst is not None:
            sec["max_traffic_burst_bytes"] = str(sc.max_traffic_burst)
        parser[f"class.{cls_name}"] = sec
    if cfg.metadata:
        parser["metadata"] = dict(cfg.metadata)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
