"""Application traffic: H.323-style signaling, CBR voice, stop-and-wait FTP.

H.323 is collapsed to three request/response exchanges (registration,
admission, call signaling) of fixed-size unicast frames; a completed Connect
switches the call to streaming. There is no transport layer: app frames map
1:1 onto MAC data frames and FTP reliability comes from the MAC ACK plus
app-level stop-and-wait.
"""

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import Engine, EventHandle, US_PER_SECOND
from .aodv import AodvRouter, DataPacket

_call_ids = itertools.count()
_session_ids = itertools.count()

# call states
REGISTERING = "registering"
ADMITTING = "admitting"
SETTING_UP = "setting_up"
STREAMING = "streaming"
ENDED = "ended"

H323_SEQUENCE = ("rrq", "rcf", "arq", "acf", "setup", "connect")
_RESPONSE_FOR = {"rrq": "rcf", "arq": "acf", "setup": "connect"}


@dataclass(frozen=True)
class VoiceParams:
    codec_rate_bps: int = 64_000
    frame_interval_us: int = 20_000
    encode_delay_us: int = 20_000   # codec processing before the network
    decode_delay_us: int = 20_000   # codec processing after the network

    @property
    def payload_octets(self) -> int:
        return self.codec_rate_bps * self.frame_interval_us // (8 * US_PER_SECOND)


@dataclass(frozen=True)
class H323Params:
    message_octets: int = 64
    response_timeout_us: int = 5_000_000
    retry_delay_us: int = 0  # an aborted setup retries immediately


@dataclass(frozen=True)
class FtpParams:
    file_size_octets: int = 500_000
    segment_octets: int = 1460
    request_octets: int = 64
    inactivity_timeout_us: int = 15_000_000


@dataclass
class H323Msg:
    call_id: int
    kind: str  # member of H323_SEQUENCE


@dataclass
class VoiceFrame:
    call_id: int
    seq: int
    created_us: int


@dataclass
class FtpRequest:
    session_id: int
    file_size_octets: int


@dataclass
class FtpSegment:
    session_id: int
    index: int
    octets: int
    final: bool


class VoiceCallApp:
    """Caller side: H.323 handshake then a constant-bit-rate voice stream."""

    def __init__(self, engine: Engine, router: AodvRouter, callee: str,
                 h323: H323Params, voice: VoiceParams,
                 on_setup_time: Optional[Callable[[int, int], None]] = None):
        self.engine = engine
        self.router = router
        self.caller = router.node_id
        self.callee = callee
        self.h323 = h323
        self.voice = voice
        self.on_setup_time = on_setup_time  # (t_us, setup_us)

        self.call_id = next(_call_ids)
        self.state = ENDED
        self.setup_attempts = 0
        self.calls_aborted = 0
        self.frames_generated = 0
        self._voice_seq = 0
        self._attempt_started_us = 0
        self._awaiting: Optional[str] = None
        self._timer: Optional[EventHandle] = None

    def start(self) -> None:
        self._begin_attempt()

    def _begin_attempt(self) -> None:
        self.setup_attempts += 1
        self._attempt_started_us = self.engine.now
        self.state = REGISTERING
        self._send_request("rrq")

    def _send_request(self, kind: str) -> None:
        pkt = DataPacket(src=self.caller, dst=self.callee,
                         payload=H323Msg(self.call_id, kind),
                         octets=self.h323.message_octets,
                         created_us=self.engine.now)
        self._awaiting = _RESPONSE_FOR[kind]
        self._timer = self.engine.schedule(
            self.h323.response_timeout_us, self._abort,
            target=self.caller, kind="h323.timeout")
        self.router.send_packet(pkt, self._on_send_result)

    def _on_send_result(self, result: str) -> None:
        if result == "failed" and self.state not in (STREAMING, ENDED):
            self._abort()

    def _abort(self) -> None:
        if self.state in (STREAMING, ENDED):
            return
        if self._timer is not None:
            self._timer.cancel()
        self.calls_aborted += 1
        self.state = ENDED
        self._awaiting = None
        self.engine.schedule(self.h323.retry_delay_us, self._begin_attempt,
                             target=self.caller, kind="h323.retry")

    def on_message(self, msg: H323Msg, now: int) -> None:
        if msg.call_id != self.call_id or msg.kind != self._awaiting:
            return
        self._timer.cancel()
        self._awaiting = None
        if msg.kind == "rcf":
            self.state = ADMITTING
            self._send_request("arq")
        elif msg.kind == "acf":
            self.state = SETTING_UP
            self._send_request("setup")
        elif msg.kind == "connect":
            setup_us = now - self._attempt_started_us
            if self.on_setup_time is not None:
                self.on_setup_time(now, setup_us)
            self.state = STREAMING
            self.engine.schedule(self.voice.frame_interval_us, self._voice_tick,
                                 target=self.caller, kind="voice.tick")

    def _voice_tick(self) -> None:
        if self.state != STREAMING:
            return
        now = self.engine.now
        frame = VoiceFrame(self.call_id, self._voice_seq, created_us=now)
        self._voice_seq += 1
        self.frames_generated += 1
        pkt = DataPacket(src=self.caller, dst=self.callee, payload=frame,
                         octets=self.voice.payload_octets, created_us=now)
        self.engine.schedule(self.voice.encode_delay_us,
                             lambda: self.router.send_packet(pkt),
                             target=self.caller, kind="voice.encode")
        self.engine.schedule(self.voice.frame_interval_us, self._voice_tick,
                             target=self.caller, kind="voice.tick")

    def end(self) -> None:
        self.state = ENDED


class H323Responder:
    """Callee side: answers each signaling request with its paired response."""

    def __init__(self, router: AodvRouter, h323: H323Params):
        self.router = router
        self.h323 = h323

    def on_message(self, msg: H323Msg, src: str, now: int) -> None:
        response = _RESPONSE_FOR.get(msg.kind)
        if response is None:
            return
        pkt = DataPacket(src=self.router.node_id, dst=src,
                         payload=H323Msg(msg.call_id, response),
                         octets=self.h323.message_octets, created_us=now)
        self.router.send_packet(pkt)


class VoiceSink:
    """Voice receiver: records one end-to-end delay sample per frame."""

    def __init__(self, voice: VoiceParams,
                 on_e2e_delay: Callable[[int, int], None]):
        self.voice = voice
        self.on_e2e_delay = on_e2e_delay  # (t_us, delay_us)
        self.frames_received = 0

    def on_frame(self, frame: VoiceFrame, now: int) -> None:
        self.frames_received += 1
        delay_us = now + self.voice.decode_delay_us - frame.created_us
        self.on_e2e_delay(now, delay_us)


@dataclass
class FtpSessionResult:
    session_id: int
    requested_octets: int
    received_octets: int
    completed: bool
    response_time_us: Optional[int]


class FtpClientApp:
    """Issues one download request per scheduled session and tracks completion."""

    def __init__(self, engine: Engine, router: AodvRouter, server: str,
                 params: FtpParams,
                 on_response_time: Optional[Callable[[int, int], None]] = None):
        self.engine = engine
        self.router = router
        self.server = server
        self.params = params
        self.on_response_time = on_response_time
        self.results: list[FtpSessionResult] = []
        self._active: dict[int, dict] = {}

    def start_session(self) -> int:
        session_id = next(_session_ids)
        now = self.engine.now
        state = {"requested": self.params.file_size_octets, "received": 0,
                 "sent_us": now, "timer": None, "done": False}
        self._active[session_id] = state
        self._arm_timeout(session_id)
        pkt = DataPacket(src=self.router.node_id, dst=self.server,
                         payload=FtpRequest(session_id, self.params.file_size_octets),
                         octets=self.params.request_octets, created_us=now)
        self.router.send_packet(pkt, lambda r: self._on_send_result(session_id, r))
        return session_id

    def _arm_timeout(self, session_id: int) -> None:
        state = self._active[session_id]
        if state["timer"] is not None:
            state["timer"].cancel()
        state["timer"] = self.engine.schedule(
            self.params.inactivity_timeout_us,
            lambda: self._fail(session_id),
            target=self.router.node_id, kind="ftp.timeout")

    def _on_send_result(self, session_id: int, result: str) -> None:
        if result == "failed":
            self._fail(session_id)

    def _fail(self, session_id: int) -> None:
        state = self._active.pop(session_id, None)
        if state is None or state["done"]:
            return
        state["timer"].cancel()
        self.results.append(FtpSessionResult(
            session_id, state["requested"], state["received"], False, None))

    def on_segment(self, seg: FtpSegment, now: int) -> None:
        state = self._active.get(seg.session_id)
        if state is None or state["done"]:
            return
        state["received"] += seg.octets
        self._arm_timeout(seg.session_id)
        if seg.final and state["received"] == state["requested"]:
            state["done"] = True
            state["timer"].cancel()
            del self._active[seg.session_id]
            response_us = now - state["sent_us"]
            self.results.append(FtpSessionResult(
                seg.session_id, state["requested"], state["received"], True,
                response_us))
            if self.on_response_time is not None:
                self.on_response_time(now, response_us)


class FtpServerApp:
    """Serves requests segment by segment, stop-and-wait on MAC delivery."""

    def __init__(self, router: AodvRouter, params: FtpParams):
        self.router = router
        self.params = params
        self.sessions_served = 0
        self.sessions_failed = 0

    def on_request(self, req: FtpRequest, client: str, now: int) -> None:
        self.sessions_served += 1
        self._send_segment(req, client, index=0, sent=0)

    def _send_segment(self, req: FtpRequest, client: str, index: int,
                      sent: int) -> None:
        remaining = req.file_size_octets - sent
        octets = min(self.params.segment_octets, remaining)
        final = remaining <= self.params.segment_octets
        seg = FtpSegment(req.session_id, index, octets, final)
        pkt = DataPacket(src=self.router.node_id, dst=client, payload=seg,
                         octets=octets, created_us=self.router.engine.now)

        def on_result(result: str):
            if result != "delivered":
                self.sessions_failed += 1
            elif not final:
                self._send_segment(req, client, index + 1, sent + octets)

        self.router.send_packet(pkt, on_result)
