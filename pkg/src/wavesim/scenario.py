"""Scenario configuration, the three built-in highway builders, run orchestration.

Every run is generated purely from ScenarioConfig: JSON in, validated defaults
filled, strict unknown-key rejection. The builders realize the highway
scenarios: single_hop (mobile node and a roadside server), multi_hop (second
server planted beyond the first server's range) and node_to_node (two moving
nodes exchanging FTP).
"""

import json
import os
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

from .engine import Engine, RngRegistry, US_PER_SECOND, seconds_to_us
from .phy import Medium, PhyParams, PhyConfigError, validate_channel
from .mac import Frame, WaveMac, MacParams, WbssAdvertisement, WILDCARD_BSSID
from .aodv import (AodvParams, AodvRouter, DataPacket, DiscoveryRecord,
                   RreqPacket, RrepPacket, RerrPacket)
from .apps import (FtpClientApp, FtpParams, FtpRequest, FtpSegment,
                   FtpServerApp, H323Msg, H323Params, H323Responder,
                   VoiceCallApp, VoiceFrame, VoiceParams, VoiceSink)
from .mobility import MobilityProfile, make_profile, position_at
from .metrics import MetricsRecorder, PacketLedger, export_csv

SCENARIOS = ("single_hop", "multi_hop", "node_to_node", "custom")


class ConfigError(ValueError):
    pass


def _check_keys(block: dict, allowed: set[str], where: str) -> None:
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where} "
                              f"(allowed: {sorted(allowed)})")


@dataclass(frozen=True)
class GeometryConfig:
    server1_m: float = 0.0
    s1_node_start_m: float = -1000.0
    s2_server2_m: float = 2100.0
    s2_node_start_m: float = 100.0
    s3_front_speed_kmh: float = 32.0
    s3_equal_gap_m: float = 200.0
    s3_unequal_gap_m: float = 1100.0


@dataclass(frozen=True)
class VoiceConfig:
    codec_rate_bps: int = 64_000
    frame_interval_ms: float = 20.0
    encode_delay_ms: float = 20.0
    decode_delay_ms: float = 20.0

    def params(self) -> VoiceParams:
        return VoiceParams(self.codec_rate_bps,
                           round(self.frame_interval_ms * 1000),
                           round(self.encode_delay_ms * 1000),
                           round(self.decode_delay_ms * 1000))


@dataclass(frozen=True)
class H323Config:
    message_octets: int = 64
    response_timeout_s: float = 5.0
    retry_delay_s: float = 0.0
    start_s: float = 0.5

    def params(self) -> H323Params:
        return H323Params(self.message_octets,
                          seconds_to_us(self.response_timeout_s),
                          seconds_to_us(self.retry_delay_s))


@dataclass(frozen=True)
class FtpConfig:
    file_size_octets: int = 500_000
    segment_octets: int = 1460
    request_octets: int = 64
    start_s: float = 5.0
    interval_s: float = 30.0
    inactivity_timeout_s: float = 15.0

    def params(self) -> FtpParams:
        return FtpParams(self.file_size_octets, self.segment_octets,
                         self.request_octets,
                         seconds_to_us(self.inactivity_timeout_s))


@dataclass(frozen=True)
class AodvConfig:
    hello_interval_s: float = 1.0
    allowed_hello_loss: int = 2
    active_route_lifetime_s: float = 3.0
    rreq_retries: int = 2
    discovery_timeout_s: float = 1.0
    rreq_octets: int = 24
    rrep_octets: int = 20
    rerr_octets: int = 20
    hello_octets: int = 20
    forward_jitter_us: int = 25

    def params(self) -> AodvParams:
        return AodvParams(seconds_to_us(self.hello_interval_s),
                          self.allowed_hello_loss,
                          seconds_to_us(self.active_route_lifetime_s),
                          self.rreq_retries,
                          seconds_to_us(self.discovery_timeout_s),
                          self.rreq_octets, self.rrep_octets,
                          self.rerr_octets, self.hello_octets,
                          forward_jitter_us=self.forward_jitter_us)


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    start_m: float = 0.0
    speed_kmh: float = 0.0
    direction: int = 1
    role: str = "mobile"  # mobile | server

    def profile(self) -> MobilityProfile:
        return make_profile(self.start_m, self.speed_kmh, self.direction)


@dataclass(frozen=True)
class TrafficSpec:
    kind: str  # voice | ftp | data
    src: str
    dst: str
    start_s: float = 0.5
    octets: int = 64  # data kind only


@dataclass
class ScenarioConfig:
    scenario: str = "single_hop"
    seed: int = 1
    duration_s: float = 120.0
    speed_kmh: float = 32.0
    out_dir: str = "out"
    channel: int = 178
    hello_enabled: bool = True
    use_wbss: bool = False
    wbss_service: str = "roadside"
    phy: PhyParams = field(default_factory=PhyParams)
    mac: MacParams = field(default_factory=MacParams)
    aodv: AodvConfig = field(default_factory=AodvConfig)
    voice: VoiceConfig = field(default_factory=VoiceConfig)
    h323: H323Config = field(default_factory=H323Config)
    ftp: FtpConfig = field(default_factory=FtpConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    nodes: tuple[NodeSpec, ...] = ()
    traffic: tuple[TrafficSpec, ...] = ()

    def to_dict(self) -> dict:
        def block(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj)}

        out = {"scenario": self.scenario, "seed": self.seed,
               "duration_s": self.duration_s, "speed_kmh": self.speed_kmh,
               "out_dir": self.out_dir, "channel": self.channel,
               "hello_enabled": self.hello_enabled, "use_wbss": self.use_wbss,
               "wbss_service": self.wbss_service,
               "phy": block(self.phy), "mac": block(self.mac),
               "aodv": block(self.aodv), "voice": block(self.voice),
               "h323": block(self.h323), "ftp": block(self.ftp),
               "geometry": block(self.geometry),
               "nodes": [block(n) for n in self.nodes],
               "traffic": [block(t) for t in self.traffic]}
        return out


_TOP_KEYS = {"scenario", "seed", "duration_s", "speed_kmh", "out_dir", "channel",
             "hello_enabled", "use_wbss", "wbss_service", "phy", "mac", "aodv",
             "voice", "h323", "ftp", "geometry", "nodes", "traffic"}


def _build_block(cls, block: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    _check_keys(block, allowed, where)
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")
    scenario = raw.get("scenario", "single_hop")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")

    phy_block = dict(raw.get("phy", {}))
    allowed_phy = {f.name for f in fields(PhyParams)}
    _check_keys(phy_block, allowed_phy, "phy")
    if "difs_us" not in phy_block and ("sifs_us" in phy_block
                                       or "slot_time_us" in phy_block):
        sifs = phy_block.get("sifs_us", PhyParams.sifs_us)
        slot = phy_block.get("slot_time_us", PhyParams.slot_time_us)
        phy_block["difs_us"] = sifs + 2 * slot
    try:
        phy = PhyParams(**phy_block)
    except PhyConfigError as exc:
        raise ConfigError(f"invalid phy: {exc}") from exc

    try:
        mac = _build_block(MacParams, dict(raw.get("mac", {})), "mac")
    except ConfigError:
        raise

    nodes = tuple(_build_block(NodeSpec, dict(n), "nodes[]")
                  for n in raw.get("nodes", []))
    traffic = tuple(_build_block(TrafficSpec, dict(t), "traffic[]")
                    for t in raw.get("traffic", []))

    config = ScenarioConfig(
        scenario=scenario,
        seed=int(raw.get("seed", 1)),
        duration_s=float(raw.get("duration_s", 120.0)),
        speed_kmh=float(raw.get("speed_kmh", 32.0)),
        out_dir=str(raw.get("out_dir", "out")),
        channel=int(raw.get("channel", 178)),
        hello_enabled=bool(raw.get("hello_enabled", True)),
        use_wbss=bool(raw.get("use_wbss", False)),
        wbss_service=str(raw.get("wbss_service", "roadside")),
        phy=phy,
        mac=mac,
        aodv=_build_block(AodvConfig, dict(raw.get("aodv", {})), "aodv"),
        voice=_build_block(VoiceConfig, dict(raw.get("voice", {})), "voice"),
        h323=_build_block(H323Config, dict(raw.get("h323", {})), "h323"),
        ftp=_build_block(FtpConfig, dict(raw.get("ftp", {})), "ftp"),
        geometry=_build_block(GeometryConfig, dict(raw.get("geometry", {})),
                              "geometry"),
        nodes=nodes,
        traffic=traffic,
    )
    validate_config(config)
    return config


def validate_config(config: ScenarioConfig) -> None:
    try:
        validate_channel(config.channel)
    except PhyConfigError as exc:
        raise ConfigError(str(exc)) from exc
    if config.duration_s <= 0:
        raise ConfigError("duration_s must be positive")
    if config.speed_kmh < 0:
        raise ConfigError("speed_kmh must be non-negative")
    if config.scenario == "multi_hop":
        separation = abs(config.geometry.s2_server2_m - config.geometry.server1_m)
        if separation <= config.phy.comm_range_m:
            raise ConfigError(
                f"multi_hop server separation {separation} m is within "
                f"comm_range {config.phy.comm_range_m} m; the second server "
                f"must not share the first server's channel footprint")
    if config.scenario == "custom":
        ids = [n.node_id for n in config.nodes]
        if len(ids) < 2:
            raise ConfigError("custom scenario needs at least 2 nodes")
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate node ids in nodes[]")
        for t in config.traffic:
            for ref in (t.src, t.dst):
                if ref not in ids:
                    raise ConfigError(f"traffic references unknown node {ref!r}")
            if t.kind not in ("voice", "ftp", "data"):
                raise ConfigError(f"unknown traffic kind {t.kind!r}")


def load_config(path: str) -> ScenarioConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Builders.

@dataclass
class ScenarioPlan:
    nodes: tuple[NodeSpec, ...]
    traffic: tuple[TrafficSpec, ...]


def build_scenario(config: ScenarioConfig) -> ScenarioPlan:
    g = config.geometry
    if config.scenario == "single_hop":
        nodes = (NodeSpec("node1", g.s1_node_start_m, config.speed_kmh, 1, "mobile"),
                 NodeSpec("server1", g.server1_m, 0.0, 1, "server"))
        traffic = (TrafficSpec("voice", "node1", "server1",
                               config.h323.start_s),)
    elif config.scenario == "multi_hop":
        nodes = (NodeSpec("node1", g.s2_node_start_m, config.speed_kmh, 1, "mobile"),
                 NodeSpec("server1", g.server1_m, 0.0, 1, "server"),
                 NodeSpec("server2", g.s2_server2_m, 0.0, 1, "server"))
        traffic = (TrafficSpec("voice", "node1", "server2",
                               config.h323.start_s),)
    elif config.scenario == "node_to_node":
        front_speed = g.s3_front_speed_kmh
        gap = (g.s3_equal_gap_m if config.speed_kmh == front_speed
               else g.s3_unequal_gap_m)
        nodes = (NodeSpec("node1", gap, front_speed, 1, "mobile"),
                 NodeSpec("node2", 0.0, config.speed_kmh, 1, "mobile"))
        traffic = (TrafficSpec("ftp", "node2", "node1", config.ftp.start_s),)
    else:
        nodes = config.nodes
        traffic = config.traffic
    return ScenarioPlan(tuple(nodes), tuple(traffic))


# ---------------------------------------------------------------------------
# Node assembly and run orchestration.

class SimNode:
    """One station: mobility profile + MAC + AODV router + app handlers."""

    def __init__(self, spec: NodeSpec, engine: Engine, medium: Medium,
                 rng: RngRegistry, config: ScenarioConfig,
                 recorder: MetricsRecorder, ledger: PacketLedger,
                 data_log: list):
        self.spec = spec
        self.node_id = spec.node_id
        self.profile = spec.profile()
        self.engine = engine
        self.recorder = recorder
        self.data_log = data_log

        join_filter = (config.wbss_service.encode()
                       if config.use_wbss and spec.role == "mobile" else None)
        mode_bssid = (f"wbss:{self.node_id}"
                      if config.use_wbss and spec.role == "server" else None)
        self.mac = WaveMac(self.node_id, engine, medium, config.phy, config.mac,
                           rng.stream(f"backoff/{self.node_id}"),
                           channel=config.channel, mode_bssid=mode_bssid,
                           join_filter=join_filter)
        self.router = AodvRouter(self.node_id, engine, self.mac,
                                 config.aodv.params(),
                                 rng.stream(f"hello/{self.node_id}"),
                                 rng.stream(f"rreq-jitter/{self.node_id}"),
                                 hello_enabled=config.hello_enabled)

        medium.attach(self.node_id,
                      lambda t_us: position_at(self.profile, t_us),
                      self.mac.on_phy_receive,
                      self.mac.on_activity_change)

        self.mac.ledger = ledger
        self.mac.on_data = self._on_mac_data
        self.mac.on_delay_sample = self._on_mac_delay
        self.mac.on_tx_event = lambda frame, t: recorder.record_event(
            "pkts_tx_pps", t)
        self.mac.on_rx_event = self._on_mac_rx
        self.router.deliver_local = self._deliver_app
        self.router.on_control_sent = lambda kind, t: recorder.record_event(
            "aodv_sent_pps", t)
        self.router.on_control_received = lambda kind, t: recorder.record_event(
            "aodv_received_pps", t)

        # app-side handlers, filled in by the traffic wiring
        self.h323_responder: Optional[H323Responder] = None
        self.voice_apps: list[VoiceCallApp] = []
        self.voice_sink: Optional[VoiceSink] = None
        self.ftp_server: Optional[FtpServerApp] = None
        self.ftp_clients: list[FtpClientApp] = []

    def _on_mac_delay(self, frame: Frame, delay_us: int) -> None:
        self.recorder.record("wlan_delay_s", self.engine.now,
                             delay_us / US_PER_SECOND)

    def _on_mac_rx(self, frame: Frame, t_us: int) -> None:
        self.recorder.record_event("pkts_rx_pps", t_us)
        self.recorder.record_event("wlan_throughput_bps", t_us,
                                   8 * frame.payload_len)

    def _on_mac_data(self, payload, frame: Frame, now: int) -> None:
        self.router.note_heard(frame.src, now)
        if isinstance(payload, (RreqPacket, RrepPacket, RerrPacket)):
            self.router.on_control(payload, frame.src, now)
        elif isinstance(payload, DataPacket):
            self.router.on_data_frame(payload, now)

    def _deliver_app(self, pkt: DataPacket, now: int) -> None:
        payload = pkt.payload
        if payload is None:
            self.data_log.append((now, pkt.src, self.node_id, pkt.hops))
            return
        if isinstance(payload, H323Msg):
            consumed = False
            for app in self.voice_apps:
                if payload.call_id == app.call_id:
                    app.on_message(payload, now)
                    consumed = True
            if not consumed and self.h323_responder is not None:
                self.h323_responder.on_message(payload, pkt.src, now)
        elif isinstance(payload, VoiceFrame):
            if self.voice_sink is not None:
                self.voice_sink.on_frame(payload, now)
        elif isinstance(payload, FtpRequest):
            if self.ftp_server is not None:
                self.ftp_server.on_request(payload, pkt.src, now)
        elif isinstance(payload, FtpSegment):
            for client in self.ftp_clients:
                client.on_segment(payload, now)


@dataclass
class RunResult:
    config: ScenarioConfig
    recorder: MetricsRecorder
    counters: dict
    discovery: list[DiscoveryRecord]
    nodes: dict[str, MobilityProfile]
    events_processed: int
    out_paths: list[str]
    voice_apps: list[VoiceCallApp]
    ftp_clients: list[FtpClientApp]
    data_log: list[tuple[int, str, str, int]]
    route_tables: dict[str, dict]


def run(config: ScenarioConfig, export: bool = True) -> RunResult:
    """Build the scenario, run the engine to `duration`, export the metrics."""
    plan = build_scenario(config)
    engine = Engine(RngRegistry(config.seed))
    recorder = MetricsRecorder()
    ledger = PacketLedger()
    medium = Medium(engine, config.phy)

    nodes: dict[str, SimNode] = {}
    data_log: list[tuple[int, str, str, int]] = []
    for spec in plan.nodes:
        nodes[spec.node_id] = SimNode(spec, engine, medium, engine.rng, config,
                                      recorder, ledger, data_log)
    if len(nodes) < 2:
        raise ConfigError("a scenario needs at least 2 nodes")

    voice_params = config.voice.params()
    h323_params = config.h323.params()
    ftp_params = config.ftp.params()

    def record_setup(t_us, setup_us):
        recorder.record("h323_setup_time_s", t_us, setup_us / US_PER_SECOND)

    def record_voice(t_us, delay_us):
        recorder.record("voice_e2e_delay_s", t_us, delay_us / US_PER_SECOND)

    def record_ftp(t_us, response_us):
        recorder.record("ftp_response_s", t_us, response_us / US_PER_SECOND)

    duration_us = seconds_to_us(config.duration_s)
    for spec in plan.traffic:
        src, dst = nodes[spec.src], nodes[spec.dst]
        start_us = seconds_to_us(spec.start_s)
        if spec.kind == "voice":
            app = VoiceCallApp(engine, src.router, spec.dst, h323_params,
                               voice_params, on_setup_time=record_setup)
            src.voice_apps.append(app)
            dst.h323_responder = H323Responder(dst.router, h323_params)
            dst.voice_sink = VoiceSink(voice_params, record_voice)
            engine.schedule_at(start_us, app.start, target=spec.src,
                               kind="app.voice_start")
        elif spec.kind == "ftp":
            client = FtpClientApp(engine, src.router, spec.dst, ftp_params,
                                  on_response_time=record_ftp)
            src.ftp_clients.append(client)
            dst.ftp_server = FtpServerApp(dst.router, ftp_params)
            interval_us = seconds_to_us(config.ftp.interval_s)
            t = start_us
            while t < duration_us:
                engine.schedule_at(t, client.start_session, target=spec.src,
                                   kind="app.ftp_start")
                if interval_us <= 0:
                    break
                t += interval_us
        elif spec.kind == "data":
            pkt_src, pkt_dst, octets = spec.src, spec.dst, spec.octets

            def send_one(router=src.router, d=pkt_dst, o=octets):
                router.send_packet(DataPacket(
                    src=router.node_id, dst=d, payload=None, octets=o,
                    created_us=engine.now))

            engine.schedule_at(start_us, send_one, target=spec.src,
                               kind="app.data")

    if config.use_wbss:
        for node in nodes.values():
            if node.spec.role == "server":
                ad = WbssAdvertisement(f"wbss:{node.node_id}",
                                       config.wbss_service.encode(),
                                       config.channel)
                engine.schedule_at(seconds_to_us(0.1),
                                   lambda n=node, a=ad: n.mac.wbss_advertise(a),
                                   target=node.node_id, kind="wbss.advertise")

    summary = engine.run_until(duration_us)
    counts = ledger.finalize()

    discovery: list[DiscoveryRecord] = []
    for node in nodes.values():
        discovery.extend(node.router.discovery_log)
    discovery.sort(key=lambda r: (r.ended_us, r.origin, r.dest))
    for rec in discovery:
        if rec.success:
            recorder.record("aodv_discovery_time_s", rec.ended_us,
                            (rec.ended_us - rec.started_us) / US_PER_SECOND)

    counters = {
        "generated": counts.generated,
        "delivered": counts.delivered,
        "collided": counts.collided,
        "filtered": counts.filtered,
        "retry_exhausted": counts.retry_exhausted,
        "in_flight": counts.in_flight,
        "routing_dropped_no_route": sum(
            n.router.packets_dropped_no_route for n in nodes.values()),
        "rrep_no_reverse": sum(n.router.rrep_no_reverse for n in nodes.values()),
        "discoveries_succeeded": sum(1 for r in discovery if r.success),
        "discoveries_failed": sum(1 for r in discovery if not r.success),
        "calls_aborted": sum(a.calls_aborted for n in nodes.values()
                             for a in n.voice_apps),
        "voice_frames_generated": sum(a.frames_generated for n in nodes.values()
                                      for a in n.voice_apps),
        "voice_frames_received": sum(n.voice_sink.frames_received
                                     for n in nodes.values()
                                     if n.voice_sink is not None),
        "ftp_sessions_completed": sum(1 for n in nodes.values()
                                      for c in n.ftp_clients
                                      for r in c.results if r.completed),
        "ftp_sessions_failed": sum(1 for n in nodes.values()
                                   for c in n.ftp_clients
                                   for r in c.results if not r.completed),
        "events_processed": summary.events_processed,
    }

    out_paths: list[str] = []
    if export:
        out_paths = export_csv(recorder, config.out_dir, duration_us, counters)

    return RunResult(config=config, recorder=recorder, counters=counters,
                     discovery=discovery,
                     nodes={n.node_id: n.profile for n in nodes.values()},
                     events_processed=summary.events_processed,
                     out_paths=out_paths,
                     voice_apps=[a for n in nodes.values() for a in n.voice_apps],
                     ftp_clients=[c for n in nodes.values()
                                  for c in n.ftp_clients],
                     data_log=data_log,
                     route_tables={n.node_id: dict(n.router.table)
                                   for n in nodes.values()})
