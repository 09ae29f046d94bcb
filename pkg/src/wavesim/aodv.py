"""AODV on-demand routing: RREQ flood, RREP unicast, RERR on break, hellos.

Control packets ride as wildcard-BSSID MAC frames: RREQ and hello broadcast
(no ACK), RREP and RERR unicast (ACKed). Data packets carry an end-to-end
(src, dst) header and are forwarded hop by hop through each node's table.
"""

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .engine import Engine, EventHandle, RngStream, US_PER_SECOND
from . import mac as mac_mod
from .mac import Frame, WaveMac, BROADCAST_ADDR, ACKED, GAVE_UP

_packet_ids = itertools.count()

MAX_HOPS = 32  # forwarding safety bound


@dataclass(frozen=True)
class AodvParams:
    hello_interval_us: int = 1_000_000
    allowed_hello_loss: int = 2
    active_route_lifetime_us: int = 3_000_000
    rreq_retries: int = 2          # total RREQ attempts per discovery
    discovery_timeout_us: int = 1_000_000
    rreq_octets: int = 24
    rrep_octets: int = 20
    rerr_octets: int = 20
    hello_octets: int = 20
    hello_grace_us: int = 50_000   # tolerance on the hello-loss deadline
    forward_jitter_us: int = 25    # de-syncs flood rebroadcasts of one RREQ copy


@dataclass
class RouteEntry:
    dest: str
    next_hop: str
    hop_count: int
    dest_seq: int
    expiry_us: int
    valid: bool = True


@dataclass
class RreqPacket:
    originator: str
    originator_seq: int
    rreq_id: int
    dest: str
    dest_seq: int
    hop_count: int


@dataclass
class RrepPacket:
    dest: str
    dest_seq: int
    hop_count: int
    originator: Optional[str]  # None marks a hello (a self-RREP broadcast)


@dataclass
class RerrPacket:
    unreachable: list  # [(dest, dest_seq), ...]


@dataclass
class DataPacket:
    src: str
    dst: str
    payload: object
    octets: int
    created_us: int
    hops: int = 0
    packet_id: int = field(default_factory=lambda: next(_packet_ids))


@dataclass
class DiscoveryRecord:
    origin: str
    dest: str
    started_us: int
    ended_us: int
    hop_count: int
    success: bool


class _Discovery:
    __slots__ = ("dest", "attempts", "buffer", "started_us", "timer")

    def __init__(self, dest: str, started_us: int):
        self.dest = dest
        self.attempts = 0
        self.buffer: list[tuple[DataPacket, object]] = []
        self.started_us = started_us
        self.timer: Optional[EventHandle] = None


class AodvRouter:
    """Per-node AODV agent bound to one MAC instance."""

    def __init__(self, node_id: str, engine: Engine, mac: WaveMac,
                 params: AodvParams, hello_stream: RngStream,
                 jitter_stream: RngStream, hello_enabled: bool = True):
        self.node_id = node_id
        self.engine = engine
        self.mac = mac
        self.params = params
        self.hello_enabled = hello_enabled
        self._jitter = jitter_stream

        self.table: dict[str, RouteEntry] = {}
        self.own_seq = 0
        self._rreq_id = 0
        self._seen: dict[tuple[str, int], int] = {}  # (orig, rreq_id) -> best hops
        self._pending: dict[str, _Discovery] = {}
        self._neighbors: dict[str, int] = {}  # neighbor -> last heard (us)
        self.discovery_log: list[DiscoveryRecord] = []

        self.packets_dropped_no_route = 0
        self.rrep_no_reverse = 0

        # wiring hooks
        self.deliver_local: Optional[Callable[[DataPacket, int], None]] = None
        self.on_control_sent: Optional[Callable[[str, int], None]] = None
        self.on_control_received: Optional[Callable[[str, int], None]] = None

        if hello_enabled:
            offset = hello_stream.uniform_int(0, params.hello_interval_us - 1)
            engine.schedule(params.hello_interval_us + offset, self._hello_tick,
                            target=node_id, kind="aodv.hello")

    # -- data plane ----------------------------------------------------------

    def send_packet(self, pkt: DataPacket, on_result=None) -> None:
        """Route one packet: forward via a valid entry or start discovery."""
        now = self.engine.now
        if pkt.dst == self.node_id:
            if self.deliver_local is not None:
                self.deliver_local(pkt, now)
            return
        entry = self._valid_route(pkt.dst)
        if entry is not None:
            self._forward(pkt, entry, on_result)
        else:
            self._buffer_and_discover(pkt, on_result)

    def _valid_route(self, dest: str) -> Optional[RouteEntry]:
        entry = self.table.get(dest)
        if entry is not None and entry.valid and entry.expiry_us > self.engine.now:
            return entry
        return None

    def _forward(self, pkt: DataPacket, entry: RouteEntry, on_result) -> None:
        pkt.hops += 1
        if pkt.hops > MAX_HOPS:
            self.packets_dropped_no_route += 1
            if on_result is not None:
                on_result("failed")
            return
        entry.expiry_us = self.engine.now + self.params.active_route_lifetime_us
        frame = Frame(src=self.node_id, dst=entry.next_hop,
                      payload_len=pkt.octets, payload=pkt)

        def on_complete(outcome, _pkt=pkt, _cb=on_result, _hop=entry.next_hop):
            if outcome == ACKED:
                if _cb is not None:
                    _cb("delivered")
            elif outcome == GAVE_UP:
                self.on_link_break(_hop)
                self._buffer_and_discover(_pkt, _cb)

        self.mac.enqueue(frame, on_complete)

    def on_data_frame(self, pkt: DataPacket, now: int) -> None:
        """A data packet surfaced by the MAC: consume or keep forwarding."""
        if pkt.dst == self.node_id:
            if self.deliver_local is not None:
                self.deliver_local(pkt, now)
        else:
            self.send_packet(pkt)

    # -- discovery -----------------------------------------------------------

    def _buffer_and_discover(self, pkt: DataPacket, on_result) -> None:
        disc = self._pending.get(pkt.dst)
        if disc is None:
            disc = _Discovery(pkt.dst, self.engine.now)
            self._pending[pkt.dst] = disc
            disc.buffer.append((pkt, on_result))
            self._send_rreq(disc)
        else:
            disc.buffer.append((pkt, on_result))

    def resolve_route(self, dest: str):
        """Spec surface: next hop if cached, otherwise a started discovery."""
        entry = self._valid_route(dest)
        if entry is not None:
            return entry.next_hop
        if dest not in self._pending:
            disc = _Discovery(dest, self.engine.now)
            self._pending[dest] = disc
            self._send_rreq(disc)
        return None

    def _send_rreq(self, disc: _Discovery) -> None:
        disc.attempts += 1
        self.own_seq += 1
        self._rreq_id += 1
        known = self.table.get(disc.dest)
        rreq = RreqPacket(originator=self.node_id, originator_seq=self.own_seq,
                          rreq_id=self._rreq_id, dest=disc.dest,
                          dest_seq=known.dest_seq if known is not None else 0,
                          hop_count=0)
        self._seen[(self.node_id, self._rreq_id)] = 0  # never rebroadcast own flood
        self._broadcast_control(rreq, self.params.rreq_octets)
        disc.timer = self.engine.schedule(
            self.params.discovery_timeout_us,
            lambda: self._on_discovery_timeout(disc),
            target=self.node_id, kind="aodv.rreq_timeout")

    def _on_discovery_timeout(self, disc: _Discovery) -> None:
        if self._pending.get(disc.dest) is not disc:
            return
        if disc.attempts < self.params.rreq_retries:
            self._send_rreq(disc)
            return
        del self._pending[disc.dest]
        self.discovery_log.append(DiscoveryRecord(
            self.node_id, disc.dest, disc.started_us, self.engine.now, 0, False))
        for pkt, cb in disc.buffer:
            self.packets_dropped_no_route += 1
            if cb is not None:
                cb("failed")

    def _complete_discovery(self, dest: str, hop_count: int) -> None:
        disc = self._pending.pop(dest, None)
        if disc is None:
            return
        if disc.timer is not None:
            disc.timer.cancel()
        self.discovery_log.append(DiscoveryRecord(
            self.node_id, dest, disc.started_us, self.engine.now, hop_count, True))
        for pkt, cb in disc.buffer:
            self.send_packet(pkt, cb)

    # -- control plane ---------------------------------------------------------

    def _broadcast_control(self, packet, octets: int) -> None:
        frame = Frame(src=self.node_id, dst=BROADCAST_ADDR,
                      payload_len=octets, payload=packet)
        self.mac.enqueue(frame)
        if self.on_control_sent is not None:
            self.on_control_sent(type(packet).__name__, self.engine.now)

    def _unicast_control(self, packet, octets: int, next_hop: str) -> None:
        frame = Frame(src=self.node_id, dst=next_hop,
                      payload_len=octets, payload=packet)

        def on_complete(outcome, _hop=next_hop):
            if outcome == GAVE_UP:
                self.on_link_break(_hop)

        self.mac.enqueue(frame, on_complete)
        if self.on_control_sent is not None:
            self.on_control_sent(type(packet).__name__, self.engine.now)

    def on_control(self, packet, sender: str, now: int) -> None:
        self._touch_neighbor(sender, now)
        if self.on_control_received is not None:
            self.on_control_received(type(packet).__name__, now)
        if isinstance(packet, RreqPacket):
            self.process_rreq(packet, sender)
        elif isinstance(packet, RrepPacket):
            if packet.originator is None:
                self._process_hello(packet, sender)
            else:
                self.process_rrep(packet, sender)
        elif isinstance(packet, RerrPacket):
            self.process_rerr(packet, sender)

    def _update_route(self, dest: str, next_hop: str, hop_count: int,
                      dest_seq: int) -> bool:
        """Install/refresh using the freshness rule: newer seq wins, equal seq
        keeps the fewer-hop path; an identical route refreshes its lifetime."""
        now = self.engine.now
        entry = self.table.get(dest)
        expiry = now + self.params.active_route_lifetime_us
        if entry is None or not entry.valid or entry.expiry_us <= now:
            self.table[dest] = RouteEntry(dest, next_hop, hop_count, dest_seq, expiry)
            return True
        if dest_seq > entry.dest_seq or (dest_seq == entry.dest_seq
                                         and hop_count < entry.hop_count):
            self.table[dest] = RouteEntry(dest, next_hop, hop_count, dest_seq, expiry)
            return True
        if (dest_seq == entry.dest_seq and hop_count == entry.hop_count
                and next_hop == entry.next_hop):
            entry.expiry_us = expiry
        return False

    def process_rreq(self, rreq: RreqPacket, sender: str) -> str:
        key = (rreq.originator, rreq.rreq_id)
        if rreq.originator == self.node_id:
            return "drop_duplicate"
        duplicate = key in self._seen
        improved = self._update_route(rreq.originator, sender,
                                      rreq.hop_count + 1, rreq.originator_seq)
        if duplicate:
            # never rebroadcast twice, but the destination answers a strictly
            # shorter copy so backoff races cannot freeze a long reverse path
            if (rreq.dest == self.node_id
                    and rreq.hop_count + 1 < self._seen[key] and improved):
                self._seen[key] = rreq.hop_count + 1
                self._reply_as_dest(rreq, sender)
            return "drop_duplicate"
        self._seen[key] = rreq.hop_count + 1
        if rreq.dest == self.node_id:
            self._reply_as_dest(rreq, sender)
            return "reply_rrep"
        entry = self._valid_route(rreq.dest)
        if entry is not None and entry.dest_seq >= rreq.dest_seq:
            rrep = RrepPacket(dest=rreq.dest, dest_seq=entry.dest_seq,
                              hop_count=entry.hop_count, originator=rreq.originator)
            self._unicast_control(rrep, self.params.rrep_octets, sender)
            return "reply_rrep"
        forwarded = replace(rreq, hop_count=rreq.hop_count + 1)
        if self.params.forward_jitter_us > 0:
            delay = self._jitter.uniform_int(0, self.params.forward_jitter_us)
            self.engine.schedule(
                delay,
                lambda: self._broadcast_control(forwarded, self.params.rreq_octets),
                target=self.node_id, kind="aodv.rreq_forward")
        else:
            self._broadcast_control(forwarded, self.params.rreq_octets)
        return "rebroadcast"

    def _reply_as_dest(self, rreq: RreqPacket, sender: str) -> None:
        self.own_seq = max(self.own_seq, rreq.dest_seq)
        rrep = RrepPacket(dest=self.node_id, dest_seq=self.own_seq,
                          hop_count=0, originator=rreq.originator)
        self._unicast_control(rrep, self.params.rrep_octets, sender)

    def process_rrep(self, rrep: RrepPacket, sender: str) -> str:
        self._update_route(rrep.dest, sender, rrep.hop_count + 1, rrep.dest_seq)
        if rrep.originator == self.node_id:
            self._complete_discovery(rrep.dest, rrep.hop_count + 1)
            return "consume"
        reverse = self._valid_route(rrep.originator)
        if reverse is None:
            self.rrep_no_reverse += 1
            return "drop"
        self._unicast_control(replace(rrep, hop_count=rrep.hop_count + 1),
                              self.params.rrep_octets, reverse.next_hop)
        return "forward"

    def process_rerr(self, rerr: RerrPacket, sender: str) -> None:
        affected = []
        for dest, seq in rerr.unreachable:
            entry = self.table.get(dest)
            if entry is not None and entry.valid and entry.next_hop == sender:
                entry.valid = False
                entry.dest_seq = max(entry.dest_seq, seq)
                affected.append((dest, entry.dest_seq))
        if affected:
            self._broadcast_control(RerrPacket(affected), self.params.rerr_octets)

    def on_link_break(self, next_hop: str) -> None:
        """MAC gave up toward next_hop (or hellos went silent)."""
        affected = []
        for dest, entry in self.table.items():
            if entry.valid and entry.next_hop == next_hop:
                entry.valid = False
                entry.dest_seq += 1
                affected.append((dest, entry.dest_seq))
        self._neighbors.pop(next_hop, None)
        if affected:
            self._broadcast_control(RerrPacket(affected), self.params.rerr_octets)

    # -- hellos ----------------------------------------------------------------

    def _hello_tick(self) -> None:
        hello = RrepPacket(dest=self.node_id, dest_seq=self.own_seq,
                           hop_count=0, originator=None)
        self._broadcast_control(hello, self.params.hello_octets)
        self.engine.schedule(self.params.hello_interval_us, self._hello_tick,
                             target=self.node_id, kind="aodv.hello")

    def _process_hello(self, hello: RrepPacket, sender: str) -> None:
        self._update_route(sender, sender, 1, hello.dest_seq)

    def _touch_neighbor(self, neighbor: str, now: int) -> None:
        self._neighbors[neighbor] = now
        deadline = (self.params.allowed_hello_loss * self.params.hello_interval_us
                    + self.params.hello_grace_us)
        self.engine.schedule(deadline,
                             lambda: self._check_neighbor(neighbor, now),
                             target=self.node_id, kind="aodv.hello_check")

    def _check_neighbor(self, neighbor: str, heard_at: int) -> None:
        if self._neighbors.get(neighbor) == heard_at:
            self.on_link_break(neighbor)

    def note_heard(self, neighbor: str, now: int) -> None:
        """Any accepted frame from a neighbor counts as liveness evidence."""
        if neighbor in self._neighbors:
            self._touch_neighbor(neighbor, now)
