"""Metric collection and CSV export for every quantity the scenarios plot.

Two series shapes: per-packet samples (delays, setup and response times) and
discrete events aggregated into fixed-window rates (packet and bit rates).
Exports are plain CSV so determinism checks can diff bytes.

wlan_delay is MAC head-of-queue time to ACK received (airtime end for
broadcast), the usual OPNET meaning.
"""

import os
from dataclasses import dataclass, field

from .engine import US_PER_SECOND
from .mac import Frame, BROADCAST_ADDR, GAVE_UP

SAMPLE = "sample"
EVENT = "event"

# series -> (shape, unit)
SERIES_CATALOG = {
    "wlan_throughput_bps": (EVENT, "bit/s"),
    "wlan_delay_s": (SAMPLE, "s"),
    "aodv_discovery_time_s": (SAMPLE, "s"),
    "h323_setup_time_s": (SAMPLE, "s"),
    "aodv_sent_pps": (EVENT, "pkt/s"),
    "aodv_received_pps": (EVENT, "pkt/s"),
    "voice_e2e_delay_s": (SAMPLE, "s"),
    "pkts_tx_pps": (EVENT, "pkt/s"),
    "pkts_rx_pps": (EVENT, "pkt/s"),
    "ftp_response_s": (SAMPLE, "s"),
}


class MetricsError(ValueError):
    pass


class MetricsRecorder:
    def __init__(self):
        self.samples: dict[str, list[tuple[int, float]]] = {
            name: [] for name, (shape, _) in SERIES_CATALOG.items()
            if shape == SAMPLE}
        self.events: dict[str, list[tuple[int, float]]] = {
            name: [] for name, (shape, _) in SERIES_CATALOG.items()
            if shape == EVENT}

    def record(self, series: str, t_us: int, value: float) -> None:
        if series not in self.samples:
            raise MetricsError(f"unknown sample series {series!r}")
        rows = self.samples[series]
        if rows and t_us < rows[-1][0]:
            raise MetricsError(
                f"out-of-order sample for {series!r}: t={t_us} after {rows[-1][0]}")
        rows.append((t_us, float(value)))

    def record_event(self, series: str, t_us: int, weight: float = 1.0) -> None:
        if series not in self.events:
            raise MetricsError(f"unknown event series {series!r}")
        rows = self.events[series]
        if rows and t_us < rows[-1][0]:
            raise MetricsError(
                f"out-of-order event for {series!r}: t={t_us} after {rows[-1][0]}")
        rows.append((t_us, float(weight)))

    def mean(self, series: str) -> float | None:
        rows = self.samples.get(series)
        if not rows:
            return None
        return sum(v for _, v in rows) / len(rows)


def windowed_rate(events: list[tuple[int, float]], window_us: int,
                  duration_us: int) -> list[tuple[int, float]]:
    """Per-window rates (weight per second) over consecutive windows of [0, duration)."""
    if window_us <= 0:
        raise MetricsError("window must be positive")
    n_windows = max(1, -(-duration_us // window_us))
    totals = [0.0] * n_windows
    for t_us, weight in events:
        idx = min(t_us // window_us, n_windows - 1)
        totals[idx] += weight
    scale = US_PER_SECOND / window_us
    return [(i * window_us, totals[i] * scale) for i in range(n_windows)]


# ---------------------------------------------------------------------------
# Per-frame conservation accounting (MAC layer).

_DELIVERED = "delivered"
_FILTERED = "filtered"
_COLLIDED = "collided"
_RETRY_EXHAUSTED = "retry_exhausted"
_IN_FLIGHT = "in_flight"


class _FrameState:
    __slots__ = ("broadcast", "accepted", "filtered", "collided", "fate")

    def __init__(self, broadcast: bool):
        self.broadcast = broadcast
        self.accepted = False
        self.filtered = False
        self.collided = False
        self.fate = None


@dataclass
class ConservationCounts:
    generated: int = 0
    delivered: int = 0
    collided: int = 0
    filtered: int = 0
    retry_exhausted: int = 0
    in_flight: int = 0

    def balanced(self) -> bool:
        return self.generated == (self.delivered + self.collided + self.filtered
                                  + self.retry_exhausted + self.in_flight)


class PacketLedger:
    """Tracks the fate of every frame enqueued to any MAC queue.

    ACK/CTS immediate responses are not queued packets and stay outside the
    identity. Fate precedence: delivered > filtered > collided >
    retry_exhausted; anything unresolved at run end is in_flight. A broadcast
    nobody was in range to hear counts as (vacuously) delivered.
    """

    def __init__(self):
        self._frames: dict[int, _FrameState] = {}
        self.counts = ConservationCounts()

    def frame_generated(self, frame: Frame) -> None:
        self._frames[frame.frame_id] = _FrameState(frame.dst == BROADCAST_ADDR)
        self.counts.generated += 1

    def note_accepted(self, frame: Frame) -> None:
        state = self._frames.get(frame.frame_id)
        if state is not None:
            state.accepted = True

    def note_filtered(self, frame: Frame) -> None:
        state = self._frames.get(frame.frame_id)
        if state is not None:
            state.filtered = True

    def note_collided(self, frame: Frame) -> None:
        state = self._frames.get(frame.frame_id)
        if state is not None:
            state.collided = True

    def frame_completed(self, frame: Frame, outcome: str) -> None:
        state = self._frames.get(frame.frame_id)
        if state is None or state.fate is not None:
            return
        if state.accepted:
            state.fate = _DELIVERED
        elif state.filtered:
            state.fate = _FILTERED
        elif state.collided:
            state.fate = _COLLIDED
        elif outcome == GAVE_UP:
            state.fate = _RETRY_EXHAUSTED
        else:
            state.fate = _DELIVERED  # clean broadcast with no receiver in range
        self._bump(state.fate)

    def finalize(self) -> ConservationCounts:
        for state in self._frames.values():
            if state.fate is None:
                state.fate = _IN_FLIGHT
                self._bump(_IN_FLIGHT)
        return self.counts

    def _bump(self, fate: str) -> None:
        setattr(self.counts, fate, getattr(self.counts, fate) + 1)


# ---------------------------------------------------------------------------
# Export.

WINDOW_US = US_PER_SECOND  # 1 s aggregation window for rate series


def _fmt(value: float) -> str:
    return repr(float(value))


def export_csv(recorder: MetricsRecorder, out_dir: str, duration_us: int,
               counters: dict[str, int] | None = None) -> list[str]:
    """One CSV per catalog series plus summary.csv (and counters.csv).

    Byte-identical across runs of the same (config, seed).
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise MetricsError(f"cannot create output dir {out_dir!r}: {exc}") from exc
    written = []
    summary_rows = []
    for series, (shape, unit) in SERIES_CATALOG.items():
        if shape == SAMPLE:
            rows = [(t, v) for t, v in recorder.samples[series]]
        else:
            rows = windowed_rate(recorder.events[series], WINDOW_US, duration_us)
        path = os.path.join(out_dir, f"{series}.csv")
        with open(path, "w", newline="") as fh:
            fh.write("t_us,value,unit\n")
            for t_us, value in rows:
                fh.write(f"{t_us},{_fmt(value)},{unit}\n")
        written.append(path)
        if rows:
            values = [v for _, v in rows]
            summary_rows.append((series, unit, len(values),
                                 sum(values) / len(values), min(values), max(values)))
        else:
            summary_rows.append((series, unit, 0, "", "", ""))
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        fh.write("series,unit,count,mean,min,max\n")
        for series, unit, count, mean, mn, mx in summary_rows:
            mean_s = _fmt(mean) if count else ""
            mn_s = _fmt(mn) if count else ""
            mx_s = _fmt(mx) if count else ""
            fh.write(f"{series},{unit},{count},{mean_s},{mn_s},{mx_s}\n")
    written.append(summary_path)
    if counters is not None:
        counters_path = os.path.join(out_dir, "counters.csv")
        with open(counters_path, "w", newline="") as fh:
            fh.write("name,value\n")
            for name, value in counters.items():
                fh.write(f"{name},{value}\n")
        written.append(counters_path)
    return written
