"""Simplified 10 MHz OFDM PHY and shared-medium channel model.

Propagation is a deterministic unit disc: a frame is heard iff the receiver
sits within comm_range of the sender, and any temporal overlap between two
in-range same-channel transmissions destroys both. No fading, no capture.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

from .engine import Engine

if TYPE_CHECKING:
    from .mac import Frame

# DSRC channel plan: 75 MHz at 5.9 GHz, seven 10 MHz channels
LEGAL_CHANNELS = (172, 174, 176, 178, 180, 182, 184)

# regulatory EIRP ceiling (30 W) and the emergency-vehicle class
MAX_TX_POWER_DBM = 44.8
EMERGENCY_TX_POWER_DBM = 33.0


class PhyConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhyParams:
    """Timing and power constants of the 10 MHz WAVE PHY.

    Defaults come from doubling the 20 MHz 802.11a OFDM timing: slot 13 us,
    SIFS 32 us, preamble+SIGNAL 40 us. DIFS is pinned to SIFS + 2*slot.
    """

    center_frequency_ghz: float = 5.9
    channel_bandwidth_mhz: float = 10.0
    data_rate_bps: int = 6_000_000
    slot_time_us: int = 13
    sifs_us: int = 32
    difs_us: int = 58
    phy_overhead_us: int = 40
    tx_power_dbm: float = 30.0
    comm_range_m: float = 1000.0
    modulation: str = "BPSK1/2"  # descriptive only; data_rate_bps governs airtime

    def __post_init__(self):
        if self.difs_us != self.sifs_us + 2 * self.slot_time_us:
            raise PhyConfigError(
                f"difs_us must equal sifs_us + 2*slot_time_us "
                f"({self.sifs_us} + 2*{self.slot_time_us} != {self.difs_us})")
        if self.tx_power_dbm > MAX_TX_POWER_DBM:
            raise PhyConfigError(
                f"tx_power_dbm {self.tx_power_dbm} exceeds the {MAX_TX_POWER_DBM} dBm "
                f"(30 W EIRP) ceiling")
        if self.data_rate_bps <= 0:
            raise PhyConfigError("data_rate_bps must be positive")
        if self.comm_range_m <= 0:
            raise PhyConfigError("comm_range_m must be positive")


def validate_channel(channel: int) -> int:
    if channel not in LEGAL_CHANNELS:
        raise PhyConfigError(f"channel {channel} not in DSRC plan {LEGAL_CHANNELS}")
    return channel


def frame_airtime_us(payload_octets: int, params: PhyParams) -> int:
    """Airtime of a frame: fixed PHY overhead plus payload bits at data_rate.

    The payload remainder rounds up to the next microsecond.
    """
    if payload_octets < 0:
        raise ValueError("payload_octets must be >= 0")
    bits = 8 * payload_octets
    payload_us = -(-bits * 1_000_000 // params.data_rate_bps)  # ceil division
    return params.phy_overhead_us + payload_us


def in_range(pos_a, pos_b, params: PhyParams) -> bool:
    """Unit-disc propagation; the comm_range boundary is inclusive."""
    return abs(pos_a - pos_b) <= params.comm_range_m


DELIVERED = "delivered"
COLLIDED = "collided"
OUT_OF_RANGE = "out_of_range"


@dataclass
class TransmissionRecord:
    sender: str
    channel: int
    start_us: int
    end_us: int
    frame: "Frame"
    sender_pos: float = 0.0  # evaluated at start_us

    def overlaps(self, other: "TransmissionRecord") -> bool:
        # half-open intervals [start, end): touching endpoints do not overlap
        return self.start_us < other.end_us and other.start_us < self.end_us


def reception_outcome(rec: TransmissionRecord, receiver_id: str, receiver_pos,
                      overlapping: list[TransmissionRecord],
                      params: PhyParams) -> str:
    """Per-frame verdict at one receiver.

    Delivered iff the sender is in range and no other in-range same-channel
    transmission overlaps any part of the airtime; out-of-range interferers
    cause no interference; the receiver's own transmissions always do.
    """
    if abs(rec.sender_pos - receiver_pos) > params.comm_range_m:
        return OUT_OF_RANGE
    for other in overlapping:
        if other is rec or other.channel != rec.channel:
            continue
        if not rec.overlaps(other):
            continue
        interferer_pos = (receiver_pos if other.sender == receiver_id
                          else other.sender_pos)
        if abs(interferer_pos - receiver_pos) <= params.comm_range_m:
            return COLLIDED
    return DELIVERED


class Medium:
    """Shared broadcast medium connecting every station on every channel.

    Stations register with a position callback; the medium computes per-frame
    reception verdicts at end of airtime and raises busy-transition
    notifications whenever any transmission starts or ends.
    """

    def __init__(self, engine: Engine, params: PhyParams):
        self.engine = engine
        self.params = params
        self._records: list[TransmissionRecord] = []
        # station id -> (position fn, receive fn, activity fn)
        self._stations: list[tuple[str, Callable[[int], float],
                                   Callable[["Frame", TransmissionRecord, str], None],
                                   Callable[[], None]]] = []

    def attach(self, station_id: str, position_fn, receive_fn, activity_fn) -> None:
        self._stations.append((station_id, position_fn, receive_fn, activity_fn))

    def position_of(self, station_id: str, t_us: int) -> float:
        for sid, pos_fn, _, _ in self._stations:
            if sid == station_id:
                return pos_fn(t_us)
        raise KeyError(station_id)

    def busy(self, station_id: str, channel: int, at_us: int) -> bool:
        """True iff any in-range transmission on `channel` spans `at_us`."""
        pos = self.position_of(station_id, at_us)
        for rec in self._records:
            if rec.channel != channel:
                continue
            if rec.start_us <= at_us < rec.end_us:
                if abs(rec.sender_pos - pos) <= self.params.comm_range_m:
                    return True
        return False

    def transmit(self, sender: str, frame: "Frame", airtime_us: int) -> TransmissionRecord:
        start = self.engine.now
        rec = TransmissionRecord(
            sender=sender, channel=frame.channel, start_us=start,
            end_us=start + airtime_us, frame=frame,
            sender_pos=self.position_of(sender, start))
        self._records.append(rec)
        self._notify_activity()
        self.engine.schedule(airtime_us, lambda: self._end_transmission(rec),
                             target=sender, kind="phy.tx_end")
        return rec

    def _end_transmission(self, rec: TransmissionRecord) -> None:
        now = self.engine.now
        for sid, pos_fn, receive_fn, _ in self._stations:
            if sid == rec.sender:
                continue
            verdict = reception_outcome(rec, sid, pos_fn(rec.start_us),
                                        self._records, self.params)
            receive_fn(rec.frame, rec, verdict)
        self._prune(now)
        self._notify_activity()

    def _prune(self, now: int) -> None:
        active_starts = [r.start_us for r in self._records if r.end_us > now]
        cutoff = min(active_starts) if active_starts else now
        self._records = [r for r in self._records if r.end_us > cutoff]

    def _notify_activity(self) -> None:
        for _, _, _, activity_fn in self._stations:
            activity_fn()
