"""IEEE 802.11p MAC: DCF channel access plus the WAVE enhancements.

DCF: carrier sense, DIFS wait, slotted binary-exponential backoff with
freeze/resume, optional RTS/CTS, ACK and retries. WAVE: wildcard-BSSID
operation without association, on-demand WBSS beacons with zero-overhead
join, and the DS-bit validity rule for wildcard frames.
"""

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import Engine, EventHandle, RngStream
from .phy import DELIVERED, COLLIDED, Medium, PhyParams, frame_airtime_us

BROADCAST_ADDR = "ff:ff:ff:ff:ff:ff"
WILDCARD_BSSID = "ff:ff:ff:ff:ff:ff"

DATA = "data"
ACK = "ack"
RTS = "rts"
CTS = "cts"
WAVE_BEACON = "wave_beacon"

# accept_frame verdicts
ACCEPT = "accept"
DROP_FILTER = "drop_filter"
DROP_INVALID = "drop_invalid"

# dcf_transmit completions
ACKED = "acked"
GAVE_UP = "gave_up"
SENT_NO_ACK_EXPECTED = "sent_no_ack_expected"

_frame_ids = itertools.count()


@dataclass
class Frame:
    src: str
    dst: str
    kind: str = DATA
    bssid: str = WILDCARD_BSSID
    to_ds: int = 0
    from_ds: int = 0
    payload_len: int = 0
    channel: int = 178
    payload: object = None
    nav_until_us: int = 0  # virtual carrier sense horizon carried by rts/cts
    frame_id: int = field(default_factory=lambda: next(_frame_ids))


@dataclass(frozen=True)
class MacParams:
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7
    rts_threshold_octets: Optional[int] = None  # None disables RTS/CTS
    ack_octets: int = 10
    rts_octets: int = 20
    cts_octets: int = 14

    def __post_init__(self):
        for label, cw in (("cw_min", self.cw_min), ("cw_max", self.cw_max)):
            if (cw + 1) & cw != 0:
                raise ValueError(f"{label} must be a power of two minus one, got {cw}")
        if self.cw_min > self.cw_max:
            raise ValueError("cw_min must not exceed cw_max")


@dataclass
class WbssAdvertisement:
    bssid: str
    service: bytes
    channel: int


def accept_frame(mode_bssid: Optional[str], station_id: str, frame: Frame) -> str:
    """WAVE frame filter.

    mode_bssid is None for a station in WAVE mode, or the WBSS bssid it has
    joined. Wildcard frames are valid only with both DS bits clear; a WBSS
    member additionally accepts its own bssid, everything else is filtered.
    """
    if frame.bssid == WILDCARD_BSSID:
        if frame.to_ds or frame.from_ds:
            return DROP_INVALID
    elif mode_bssid is None or frame.bssid != mode_bssid:
        return DROP_FILTER
    if frame.dst != station_id and frame.dst != BROADCAST_ADDR:
        return DROP_FILTER
    return ACCEPT


def next_backoff(cw: int, stream: RngStream) -> int:
    """Uniform backoff draw in [0, cw] slots from the station's stream."""
    return stream.uniform_int(0, cw)


class _TxContext:
    __slots__ = ("frame", "retries", "backoff_remaining", "hoq_time_us",
                 "on_complete", "rts_done")

    def __init__(self, frame: Frame, hoq_time_us: int, on_complete):
        self.frame = frame
        self.retries = 0
        self.backoff_remaining: Optional[int] = None
        self.hoq_time_us = hoq_time_us
        self.on_complete = on_complete
        self.rts_done = False


# channel-access engine states
_IDLE = "idle"
_WAIT_IDLE = "wait_idle"
_DIFS = "difs"
_BACKOFF = "backoff"
_TX_DATA = "tx_data"
_TX_RTS = "tx_rts"
_AWAIT_ACK = "await_ack"
_AWAIT_CTS = "await_cts"
_SIFS_DATA = "sifs_data"


class WaveMac:
    """One station's MAC instance, driven by the shared engine and medium."""

    def __init__(self, node_id: str, engine: Engine, medium: Medium,
                 phy: PhyParams, params: MacParams, backoff_stream: RngStream,
                 channel: int = 178, mode_bssid: Optional[str] = None,
                 join_filter: Optional[bytes] = None):
        self.node_id = node_id
        self.engine = engine
        self.medium = medium
        self.phy = phy
        self.params = params
        self.channel = channel
        self.mode_bssid = mode_bssid  # None = WAVE mode
        self.join_filter = join_filter
        self._joined_once = mode_bssid is not None

        self._stream = backoff_stream
        self.cw = params.cw_min
        self.cw_history: list[int] = []  # cw value at each backoff draw

        self._queue: deque[tuple[Frame, object]] = deque()
        self._ctx: Optional[_TxContext] = None
        self._state = _IDLE
        self._difs_h: Optional[EventHandle] = None
        self._difs_at = 0
        self._slot_h: Optional[EventHandle] = None
        self._slot_at = 0
        self._timeout_h: Optional[EventHandle] = None
        self.nav_until_us = 0
        self._last_accepted: dict[str, int] = {}  # per-sender duplicate guard

        ack_air = frame_airtime_us(params.ack_octets, phy)
        cts_air = frame_airtime_us(params.cts_octets, phy)
        self.ack_timeout_us = phy.sifs_us + ack_air + 2 * phy.slot_time_us
        self.cts_timeout_us = phy.sifs_us + cts_air + 2 * phy.slot_time_us

        # wiring hooks, set by the node assembly
        self.on_data: Optional[Callable[[object, Frame, int], None]] = None
        self.on_delay_sample: Optional[Callable[[Frame, int], None]] = None
        self.on_tx_event: Optional[Callable[[Frame, int], None]] = None
        self.on_rx_event: Optional[Callable[[Frame, int], None]] = None
        self.ledger = None  # metrics.PacketLedger

    # -- queue interface ---------------------------------------------------

    def enqueue(self, frame: Frame, on_complete=None) -> None:
        frame.channel = self.channel
        if self.ledger is not None:
            self.ledger.frame_generated(frame)
        self._queue.append((frame, on_complete))
        if self._ctx is None:
            self._promote()

    def wbss_advertise(self, ad: WbssAdvertisement) -> Frame:
        """Queue a single on-demand beacon advertising a WBSS; never repeated."""
        if ad.bssid == WILDCARD_BSSID:
            raise ValueError("WBSS advertisement must carry a non-wildcard bssid")
        beacon = Frame(src=self.node_id, dst=BROADCAST_ADDR, kind=WAVE_BEACON,
                       bssid=WILDCARD_BSSID, payload_len=len(ad.service),
                       payload=ad)
        self.enqueue(beacon)
        return beacon

    def queue_length(self) -> int:
        return len(self._queue) + (1 if self._ctx is not None else 0)

    # -- channel access ----------------------------------------------------

    def _promote(self) -> None:
        frame, cb = self._queue.popleft()
        self._ctx = _TxContext(frame, self.engine.now, cb)
        self._start_access()

    def _busy_now(self) -> bool:
        if self.engine.now < self.nav_until_us:
            return True
        return self.medium.busy(self.node_id, self.channel, self.engine.now)

    def _start_access(self) -> None:
        if self._busy_now():
            self._state = _WAIT_IDLE
        else:
            self._begin_difs()

    def _begin_difs(self) -> None:
        self._state = _DIFS
        self._difs_at = self.engine.now + self.phy.difs_us
        self._difs_h = self.engine.schedule(self.phy.difs_us, self._on_difs,
                                            target=self.node_id, kind="mac.difs")

    def _on_difs(self) -> None:
        ctx = self._ctx
        if ctx.backoff_remaining is None:
            self.cw_history.append(self.cw)
            ctx.backoff_remaining = next_backoff(self.cw, self._stream)
        if ctx.backoff_remaining == 0:
            self._transmit()
        else:
            self._state = _BACKOFF
            self._schedule_slot()

    def _schedule_slot(self) -> None:
        self._slot_at = self.engine.now + self.phy.slot_time_us
        self._slot_h = self.engine.schedule(self.phy.slot_time_us, self._on_slot,
                                            target=self.node_id, kind="mac.slot")

    def _on_slot(self) -> None:
        ctx = self._ctx
        ctx.backoff_remaining -= 1
        if ctx.backoff_remaining == 0:
            self._transmit()
        else:
            self._schedule_slot()

    def on_activity_change(self) -> None:
        """Medium transition notification: freeze or resume the countdown.

        A pending DIFS/slot timer due exactly now is left to fire: the slot
        completed at the same instant the medium went busy, which is how two
        stations draw the same slot and collide.
        """
        busy = self._busy_now()
        now = self.engine.now
        if self._state == _WAIT_IDLE and not busy:
            self._begin_difs()
        elif self._state == _DIFS and busy and self._difs_at > now:
            self._difs_h.cancel()
            self._state = _WAIT_IDLE
        elif self._state == _BACKOFF and busy and self._slot_at > now:
            self._slot_h.cancel()
            self._state = _WAIT_IDLE

    def _airtime(self, frame: Frame) -> int:
        if frame.kind == ACK:
            octets = self.params.ack_octets
        elif frame.kind == RTS:
            octets = self.params.rts_octets
        elif frame.kind == CTS:
            octets = self.params.cts_octets
        else:
            octets = frame.payload_len
        return frame_airtime_us(octets, self.phy)

    def _needs_rts(self, frame: Frame) -> bool:
        return (self.params.rts_threshold_octets is not None
                and frame.kind == DATA
                and frame.dst != BROADCAST_ADDR
                and frame.payload_len >= self.params.rts_threshold_octets)

    def _transmit(self) -> None:
        ctx = self._ctx
        if self._needs_rts(ctx.frame) and not ctx.rts_done:
            data_air = self._airtime(ctx.frame)
            rts_air = frame_airtime_us(self.params.rts_octets, self.phy)
            cts_air = frame_airtime_us(self.params.cts_octets, self.phy)
            ack_air = frame_airtime_us(self.params.ack_octets, self.phy)
            nav = (self.engine.now + rts_air + 3 * self.phy.sifs_us
                   + cts_air + data_air + self.phy.sifs_us + ack_air)
            rts = Frame(src=self.node_id, dst=ctx.frame.dst, kind=RTS,
                        bssid=ctx.frame.bssid, channel=self.channel,
                        nav_until_us=nav)
            self._state = _TX_RTS
            self._send(rts)
        else:
            self._state = _TX_DATA
            self._send(ctx.frame)

    def _send(self, frame: Frame) -> None:
        airtime = self._airtime(frame)
        self.medium.transmit(self.node_id, frame, airtime)
        if frame.kind == DATA and self.on_tx_event is not None:
            self.on_tx_event(frame, self.engine.now)
        self.engine.schedule(airtime, self._on_tx_end,
                             target=self.node_id, kind="mac.tx_end")

    def _on_tx_end(self) -> None:
        ctx = self._ctx
        if self._state == _TX_DATA:
            if ctx.frame.dst == BROADCAST_ADDR:
                self._sample_delay(ctx)
                self._complete(SENT_NO_ACK_EXPECTED)
            else:
                self._state = _AWAIT_ACK
                self._timeout_h = self.engine.schedule(
                    self.ack_timeout_us, self._on_response_timeout,
                    target=self.node_id, kind="mac.ack_timeout")
        elif self._state == _TX_RTS:
            self._state = _AWAIT_CTS
            self._timeout_h = self.engine.schedule(
                self.cts_timeout_us, self._on_response_timeout,
                target=self.node_id, kind="mac.cts_timeout")

    def _on_response_timeout(self) -> None:
        ctx = self._ctx
        ctx.retries += 1
        if ctx.retries > self.params.retry_limit:
            self.cw = self.params.cw_min
            self._complete(GAVE_UP)
            return
        self.cw = min(2 * (self.cw + 1) - 1, self.params.cw_max)
        ctx.backoff_remaining = None
        ctx.rts_done = False
        self._start_access()

    def _sample_delay(self, ctx: _TxContext) -> None:
        if self.on_delay_sample is not None:
            self.on_delay_sample(ctx.frame, self.engine.now - ctx.hoq_time_us)

    def _complete(self, outcome: str) -> None:
        ctx = self._ctx
        self._ctx = None
        self._state = _IDLE
        if self.ledger is not None:
            self.ledger.frame_completed(ctx.frame, outcome)
        if ctx.on_complete is not None:
            ctx.on_complete(outcome)
        if self._ctx is None and self._queue:
            self._promote()

    # -- reception ---------------------------------------------------------

    def on_phy_receive(self, frame: Frame, rec, verdict: str) -> None:
        if verdict == COLLIDED:
            if self.ledger is not None and (frame.dst == self.node_id
                                            or frame.dst == BROADCAST_ADDR):
                self.ledger.note_collided(frame)
            return
        if verdict != DELIVERED:
            return
        now = self.engine.now
        if frame.kind in (RTS, CTS) and frame.dst != self.node_id:
            # virtual carrier sense: defer for the advertised exchange
            self.nav_until_us = max(self.nav_until_us, frame.nav_until_us)
        result = accept_frame(self.mode_bssid, self.node_id, frame)
        if self.ledger is not None and (frame.dst == self.node_id
                                        or frame.dst == BROADCAST_ADDR):
            if result == ACCEPT:
                self.ledger.note_accepted(frame)
            else:
                self.ledger.note_filtered(frame)
        if result != ACCEPT:
            return
        if frame.kind == DATA:
            self._handle_data(frame, now)
        elif frame.kind == WAVE_BEACON:
            self._handle_beacon(frame, now)
        elif frame.kind == ACK:
            self._handle_ack(frame)
        elif frame.kind == RTS:
            self._respond(CTS, frame.src, nav_until_us=frame.nav_until_us)
        elif frame.kind == CTS:
            self._handle_cts(frame)

    def _handle_data(self, frame: Frame, now: int) -> None:
        if frame.dst == self.node_id:
            self._respond(ACK, frame.src)
            if self._last_accepted.get(frame.src) == frame.frame_id:
                return  # retransmitted duplicate: re-acked, not re-delivered
            self._last_accepted[frame.src] = frame.frame_id
        if self.on_rx_event is not None:
            self.on_rx_event(frame, now)
        if self.on_data is not None:
            self.on_data(frame.payload, frame, now)

    def _handle_beacon(self, frame: Frame, now: int) -> None:
        ad = frame.payload
        if not isinstance(ad, WbssAdvertisement):
            return
        if self._joined_once or self.join_filter is None:
            return
        if ad.service == self.join_filter:
            # joining needs nothing beyond the advertisement itself
            self.mode_bssid = ad.bssid
            self._joined_once = True

    def _handle_ack(self, frame: Frame) -> None:
        ctx = self._ctx
        if (self._state == _AWAIT_ACK and ctx is not None
                and frame.src == ctx.frame.dst):
            self._timeout_h.cancel()
            self.cw = self.params.cw_min
            self._sample_delay(ctx)
            self._complete(ACKED)

    def _handle_cts(self, frame: Frame) -> None:
        ctx = self._ctx
        if (self._state == _AWAIT_CTS and ctx is not None
                and frame.src == ctx.frame.dst):
            self._timeout_h.cancel()
            ctx.rts_done = True
            self._state = _SIFS_DATA
            self.engine.schedule(self.phy.sifs_us, self._send_data_after_cts,
                                 target=self.node_id, kind="mac.sifs_data")

    def _send_data_after_cts(self) -> None:
        self._state = _TX_DATA
        self._send(self._ctx.frame)

    def _respond(self, kind: str, dst: str, nav_until_us: int = 0) -> None:
        """SIFS-spaced control response, bypassing the access queue."""
        frame = Frame(src=self.node_id, dst=dst, kind=kind,
                      bssid=WILDCARD_BSSID, channel=self.channel,
                      nav_until_us=nav_until_us)
        self.engine.schedule(
            self.phy.sifs_us,
            lambda: self.medium.transmit(self.node_id, frame, self._airtime(frame)),
            target=self.node_id, kind=f"mac.{kind}")
