"""Tick-driven mission kernel: the deterministic heart of the simulation.

Every 10 ms of logical time the kernel feeds the uplink receiver, delivers
due timers and scenario events, polls the sensor bus on schedule, steps
subroutines and drives the (single) downlink radio. Two runs of the same
scenario produce byte-identical logs, audio and images: there is no wall
clock and every random draw derives from the scenario seed.

The kernel is single-threaded by design; hosts that advance it from their
own execution context must serialize access (see the service module).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import afsk, camera, obc
from .audio import RATE, AudioBuffer, awgn_apply, wav_write
from .bus import (
    CMD_READ_ALL,
    CMD_SET_PWM,
    SENSOR_CHANNELS,
    ST_OK,
    BusLink,
    McuState,
    bus_encode_request,
)
from .dtmf import CommandAssembler, StreamingDtmfDecoder, command_encode, dtmf_encode
from .obc import (
    Ack,
    AckPayload,
    BDotController,
    Emit,
    GpsRegion,
    GroundCommand,
    HousekeepingPayload,
    ImageMetaPayload,
    SatelliteMode,
    SensorThreshold,
    Start,
    Stop,
    SubroutineDone,
    TimerFired,
    TransitionContext,
    compute_state,
    pack_event_log,
)
from .scenario import Scenario
from .sstv import HEIGHT, WIDTH, ppm_write, sstv_encode

PRIO_CONTROL = 0     # acks, housekeeping, event log, image meta
PRIO_IMAGE = 1       # SSTV payloads


@dataclass
class DownlinkSegment:
    index: int
    kind: str                 # "ack" | "housekeeping" | "event_log" | "image_meta" | "image"
    start_ms: int
    end_ms: int
    audio: AudioBuffer
    image_id: int | None = None


@dataclass
class UplinkRecord:
    index: int
    start_ms: int
    opcode: str
    args: str
    source: str               # "scenario" | "operator"


@dataclass
class _Transmission:
    seq: int
    priority: int
    kind: str
    audio: AudioBuffer
    image_id: int | None = None
    start_ms: int = 0
    end_ms: int = 0


@dataclass
class SatelliteState:
    """Mutable mission state; snapshots are published as plain dicts."""

    mode: SatelliteMode = SatelliteMode.BOOT
    clock_ms: int = 0
    hk_fresh: bool = False
    battery_mv: int = 0
    temp_c_x10: int = 0
    gyro_cds: tuple = (0, 0, 0)
    mag_tut: tuple = (0, 0, 0)
    pwm: tuple = (0, 0, 0, 0)
    images: list = field(default_factory=list)      # [(id, ImageRaster)]
    log: list = field(default_factory=list)
    ack_count: int = 0
    image_count: int = 0

    @property
    def omega_dps(self) -> float:
        return float(np.linalg.norm(np.asarray(self.gyro_cds) / 100.0))

    def image_ids(self) -> tuple:
        return tuple(i for i, _ in self.images)

    def housekeeping(self) -> HousekeepingPayload:
        return HousekeepingPayload(
            clock_ms=self.clock_ms, mode=self.mode, battery_mv=self.battery_mv,
            temp_c_x10=self.temp_c_x10, gyro_cds=self.gyro_cds,
            mag_tut=self.mag_tut, stale=not self.hk_fresh)


class MissionKernel:
    """One satellite, one radio, one scenario."""

    def __init__(self, scenario: Scenario, session_dir=None):
        self.scenario = scenario
        self.rate = RATE
        self.tick_ms = scenario.tick_ms
        self.tick_samples = int(round(self.rate * self.tick_ms / 1000.0))
        self.state = SatelliteState()

        mcu = McuState(profiles=dict(scenario.sensors), seed=scenario.seed,
                       faults=scenario.faults,
                       gyro_coupling=scenario.detumble.coupling)
        self.bus = BusLink(mcu)
        self.mcu = mcu

        self.decoder = StreamingDtmfDecoder(rate=self.rate)
        self.assembler = CommandAssembler()

        self.timers: dict[str, int] = {}
        self.subs: dict[str, dict] = {}
        self.controller: BDotController | None = None

        self.radio_queue: list[_Transmission] = []
        self.radio_current: _Transmission | None = None
        self._tx_seq = 0
        self._segment_index = 0
        self.downlink_segments: list[DownlinkSegment] = []

        self._uplink_feed: list[tuple[int, np.ndarray]] = []   # (start sample, samples)
        self._pending_injections: list[tuple[str, str, str]] = []
        self.uplink_records: list[UplinkRecord] = []
        self._scenario_uplinks = list(scenario.uplinks)
        self._scenario_gps = list(scenario.gps_events)

        self.session_dir = Path(session_dir) if session_dir else None
        if self.session_dir:
            for sub in ("images", "downlink", "uplink"):
                (self.session_dir / sub).mkdir(parents=True, exist_ok=True)
            (self.session_dir / "scenario.json").write_text(scenario.to_json() + "\n")

        self._log("boot", detail="power-on")
        self.timers[obc.TIMER_BOOT] = obc.BOOT_DURATION_MS

    # -- plumbing -------------------------------------------------------------

    def _log(self, kind: str, **detail):
        rec = {"t_ms": self.state.clock_ms, "kind": kind}
        rec.update(detail)
        self.state.log.append(rec)

    def _seed_for(self, stream: int, index: int) -> int:
        return int(np.random.SeedSequence(
            [self.scenario.seed & 0x7FFFFFFF, stream, index]).generate_state(1)[0])

    # -- uplink path ------------------------------------------------------------

    def inject_uplink(self, opcode: str, args: str = "", source: str = "operator") -> int:
        """Queue command audio to start at the next tick; returns command id."""
        command_encode(opcode, args)   # validate early
        self._pending_injections.append((opcode, args, source))
        return len(self.uplink_records) + len(self._pending_injections) - 1

    def _start_injection(self, opcode: str, args: str, source: str):
        index = len(self.uplink_records)
        symbols = command_encode(opcode, args)
        audio = dtmf_encode(symbols, rate=self.rate)
        if self.scenario.snr_db is not None:
            audio = awgn_apply(audio, self.scenario.snr_db, self._seed_for(1, index))
        start_sample = self.state.clock_ms * self.rate // 1000
        self._uplink_feed.append((start_sample, audio.samples))
        rec = UplinkRecord(index=index, start_ms=self.state.clock_ms,
                           opcode=opcode, args=args, source=source)
        self.uplink_records.append(rec)
        self._log("uplink", index=index, opcode=opcode, args=args, source=source)
        if self.session_dir:
            wav_write(audio, self.session_dir / "uplink" / f"{index:03d}.wav")

    def _feed_receiver(self):
        t0 = self.state.clock_ms * self.rate // 1000
        t1 = t0 + self.tick_samples
        chunk = np.zeros(self.tick_samples)
        keep = []
        for start, samples in self._uplink_feed:
            end = start + len(samples)
            if end <= t0:
                continue
            lo = max(start, t0)
            hi = min(end, t1)
            if hi > lo:
                chunk[lo - t0:hi - t0] += samples[lo - start:hi - start]
            if end > t1:
                keep.append((start, samples))
        self._uplink_feed = keep
        np.clip(chunk, -1.0, 1.0, out=chunk)
        for event in self.decoder.feed(chunk):
            result = self.assembler.push(event)
            if result is None:
                continue
            cmd, diag = result
            if cmd is not None:
                self._log("command", opcode=cmd.opcode, args=cmd.args, name=cmd.name)
                self._dispatch(GroundCommand(t_ms=self.state.clock_ms, command=cmd))
            else:
                self._log("diagnostic", source="uplink", reason=diag)

    # -- mode machine -----------------------------------------------------------

    def _dispatch(self, event):
        ctx = TransitionContext(image_ids=self.state.image_ids())
        new_mode, actions = compute_state(self.state.mode, event, ctx)
        if isinstance(event, GpsRegion):
            self._log("gps", region=event.region,
                      crossing="enter" if event.enter else "exit")
        if new_mode != self.state.mode:
            self._change_mode(new_mode, event)
        for action in actions:
            self._apply(action)

    def _change_mode(self, new_mode: SatelliteMode, event):
        old = self.state.mode
        self.state.mode = new_mode
        self._log("mode", frm=old.name, to=new_mode.name,
                  trigger=type(event).__name__)
        if new_mode == SatelliteMode.BOOT:
            # reboot: radio and subroutines die, timers restart
            if self.radio_current is not None:
                self._log("downlink", event="aborted", tx=self.radio_current.kind)
                self.radio_current = None
            self.radio_queue.clear()
            self.subs.clear()
            self.controller = None
            self.timers.clear()
            self.timers[obc.TIMER_BOOT] = self.state.clock_ms + obc.BOOT_DURATION_MS
        elif new_mode == SatelliteMode.SAFE and old == SatelliteMode.BOOT:
            self.timers[obc.TIMER_CHECKOUT] = self.state.clock_ms + obc.CHECKOUT_DURATION_MS
        if new_mode in obc.HK_MODES and obc.TIMER_HOUSEKEEPING not in self.timers:
            period = int(self.scenario.housekeeping_period_s * 1000)
            self.timers[obc.TIMER_HOUSEKEEPING] = self.state.clock_ms + period

    def _apply(self, action):
        if isinstance(action, Ack):
            seq = self.state.ack_count
            self.state.ack_count += 1
            payload = AckPayload(seq=seq, opcode=action.opcode, ok=action.ok,
                                 reason=action.reason)
            self._log("ack", seq=seq, opcode=action.opcode, ok=action.ok,
                      reason=action.reason)
            self._queue_tx("ack", PRIO_CONTROL,
                           afsk.frame_encode(afsk.FT_ACK, payload.pack()))
        elif isinstance(action, Emit):
            if action.kind == "housekeeping":
                payload = self.state.housekeeping().pack()
                self._queue_tx("housekeeping", PRIO_CONTROL,
                               afsk.frame_encode(afsk.FT_HOUSEKEEPING, payload))
            elif action.kind == "event_log":
                payload = pack_event_log(self.state.log)
                self._queue_tx("event_log", PRIO_CONTROL,
                               afsk.frame_encode(afsk.FT_EVENT_LOG, payload))
        elif isinstance(action, Start):
            self._start_subroutine(action)
        elif isinstance(action, Stop):
            self._stop_subroutine(action.subroutine)

    def _start_subroutine(self, action: Start):
        name = action.subroutine
        if name == obc.SUB_CAPTURE:
            self.subs[name] = {"end_ms": self.state.clock_ms + obc.CAPTURE_DURATION_MS}
            self._log("subroutine", name=name, event="start")
        elif name == obc.SUB_IMAGE_DOWNLINK:
            image_id = int(action.arg) if action.arg else self.state.images[-1][0]
            raster = dict(self.state.images)[image_id]
            meta = ImageMetaPayload(image_id=image_id, width=WIDTH, height=HEIGHT)
            self._queue_tx("image_meta", PRIO_IMAGE,
                           afsk.frame_encode(afsk.FT_IMAGE_META, meta.pack()))
            tx = self._queue_audio_tx("image", PRIO_IMAGE, sstv_encode(raster, self.rate),
                                      image_id=image_id)
            self.subs[name] = {"tx_seq": tx.seq, "image_id": image_id}
            self._log("subroutine", name=name, event="start", image_id=image_id)
        elif name == obc.SUB_DETUMBLE:
            self.controller = BDotController(
                k=self.scenario.detumble.k, m_max=self.scenario.detumble.m_max)
            self.subs[name] = {}
            self._log("subroutine", name=name, event="start")

    def _stop_subroutine(self, name: str):
        if name not in self.subs:
            return
        del self.subs[name]
        self._log("subroutine", name=name, event="stop")
        if name == obc.SUB_DETUMBLE:
            self.controller = None
            for axis in range(3):
                self.bus.transact(bus_encode_request(CMD_SET_PWM, axis, 0),
                                  self.state.clock_ms / 1000.0)

    # -- downlink radio -----------------------------------------------------------

    def _queue_tx(self, kind: str, priority: int, frame_bytes: bytes) -> _Transmission:
        audio = afsk.afsk_modulate(frame_bytes, rate=self.rate)
        return self._queue_audio_tx(kind, priority, audio)

    def _queue_audio_tx(self, kind: str, priority: int, audio: AudioBuffer,
                        image_id: int | None = None) -> _Transmission:
        tx = _Transmission(seq=self._tx_seq, priority=priority, kind=kind,
                           audio=audio, image_id=image_id)
        self._tx_seq += 1
        self.radio_queue.append(tx)
        return tx

    def _radio_step(self):
        t = self.state.clock_ms
        current = self.radio_current
        if current is not None and t >= current.end_ms:
            self.radio_current = None
            index = self._segment_index
            self._segment_index += 1
            seg = DownlinkSegment(index=index, kind=current.kind,
                                  start_ms=current.start_ms, end_ms=current.end_ms,
                                  audio=current.audio, image_id=current.image_id)
            self.downlink_segments.append(seg)
            self._log("downlink", event="sent", tx=current.kind, index=index,
                      duration_ms=current.end_ms - current.start_ms)
            if self.session_dir:
                wav_write(current.audio, self.session_dir / "downlink" / f"{index:03d}.wav")
            if current.kind == "image":
                sub = self.subs.get(obc.SUB_IMAGE_DOWNLINK)
                if sub and sub.get("tx_seq") == current.seq:
                    del self.subs[obc.SUB_IMAGE_DOWNLINK]
                    self._dispatch(SubroutineDone(
                        t_ms=t, name=obc.SUB_IMAGE_DOWNLINK, outcome="ok"))
        if self.radio_current is None and self.radio_queue:
            self.radio_queue.sort(key=lambda tx: (tx.priority, tx.seq))
            tx = self.radio_queue.pop(0)
            duration_ticks = -(-len(tx.audio) // self.tick_samples)
            tx.start_ms = t
            tx.end_ms = t + duration_ticks * self.tick_ms
            self.radio_current = tx

    # -- sensors and subroutine stepping ------------------------------------------

    def _poll_sensors(self):
        t = self.state.clock_ms / 1000.0
        resp = self.bus.transact(bus_encode_request(CMD_READ_ALL), t)
        if resp is None or resp.status != ST_OK:
            self._log("bus_error", op="read_all",
                      status=None if resp is None else resp.status)
            return
        raw = resp.payload
        vals = [int.from_bytes(raw[i:i + 2], "big", signed=True)
                for i in range(0, len(SENSOR_CHANNELS) * 2, 2)]
        battery = int.from_bytes(raw[20:22], "big", signed=False)
        self.state.gyro_cds = tuple(vals[0:3])
        self.state.mag_tut = tuple(vals[3:6])
        self.state.temp_c_x10 = vals[9]
        self.state.battery_mv = battery
        self.state.pwm = tuple(raw[len(SENSOR_CHANNELS) * 2:])
        self.state.hk_fresh = True

        omega = self.state.omega_dps
        if (self.state.mode == SatelliteMode.NOMINAL
                and omega >= self.scenario.omega_high_dps):
            self._log("threshold", name="gyro_high", omega_dps=round(omega, 3))
            self._dispatch(SensorThreshold(t_ms=self.state.clock_ms,
                                           name="gyro_high", value=omega))

        if obc.SUB_DETUMBLE in self.subs and self.controller is not None:
            gyro = tuple(v / 100.0 for v in self.state.gyro_cds)
            mag = tuple(v / 10.0 for v in self.state.mag_tut)
            for axis, cmd in enumerate(self.controller.step(
                    gyro, mag, self.scenario.sensor_poll_s)):
                self.bus.transact(
                    bus_encode_request(CMD_SET_PWM, axis, cmd.wire_value), t)
            if omega < self.scenario.omega_low_dps:
                self._stop_subroutine(obc.SUB_DETUMBLE)
                self._dispatch(SubroutineDone(t_ms=self.state.clock_ms,
                                              name=obc.SUB_DETUMBLE,
                                              outcome="converged"))

    def _step_capture(self):
        sub = self.subs.get(obc.SUB_CAPTURE)
        if not sub or self.state.clock_ms < sub["end_ms"]:
            return
        del self.subs[obc.SUB_CAPTURE]
        image_id = self.state.image_count
        self.state.image_count += 1
        outcome = "ok"
        try:
            raster = camera.render_scene(image_id, self.scenario.camera,
                                         seed=self.scenario.seed)
            self.state.images.append((image_id, raster))
            if self.session_dir:
                ppm_write(raster, self.session_dir / "images" / f"{image_id:03d}.ppm")
        except OSError as exc:
            outcome = "failed"
            self._log("capture", image_id=image_id, event="error", detail=str(exc))
        else:
            self._log("capture", image_id=image_id, event="stored")
        self._dispatch(SubroutineDone(t_ms=self.state.clock_ms,
                                      name=obc.SUB_CAPTURE, outcome=outcome))

    # -- the tick ----------------------------------------------------------------

    def tick(self):
        """Advance one tick of logical time."""
        t_ms = self.state.clock_ms
        t_s = t_ms / 1000.0

        self._radio_step()

        while self._pending_injections:
            opcode, args, source = self._pending_injections.pop(0)
            self._start_injection(opcode, args, source)
        while self._scenario_uplinks and self._scenario_uplinks[0].t_s <= t_s:
            ev = self._scenario_uplinks.pop(0)
            self._start_injection(ev.opcode, ev.args, "scenario")
        while self._scenario_gps and self._scenario_gps[0].t_s <= t_s:
            ev = self._scenario_gps.pop(0)
            self._dispatch(GpsRegion(t_ms=t_ms, region=ev.region, enter=ev.enter))

        self._feed_receiver()

        for name in sorted(self.timers):
            # a dispatch below may clear the table (e.g. REBOOT)
            if name not in self.timers or self.timers[name] > t_ms:
                continue
            if name == obc.TIMER_HOUSEKEEPING:
                self.timers[name] = t_ms + int(self.scenario.housekeeping_period_s * 1000)
            else:
                del self.timers[name]
            self._dispatch(TimerFired(t_ms=t_ms, name=name))

        poll_ms = int(self.scenario.sensor_poll_s * 1000)
        if t_ms % poll_ms == 0:
            self._poll_sensors()

        self._step_capture()
        self.state.clock_ms += self.tick_ms

    def run(self, duration_s: float | None = None):
        """Run the whole pass; returns self for artifact access."""
        duration_ms = int((duration_s or self.scenario.duration_s) * 1000)
        while self.state.clock_ms < duration_ms:
            self.tick()
        self.finalize()
        return self

    def finalize(self):
        if self.session_dir:
            with open(self.session_dir / "log.jsonl", "w") as f:
                for rec in self.state.log:
                    f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")

    # -- observation ---------------------------------------------------------------

    def snapshot(self) -> dict:
        hk = self.state.housekeeping()
        return {
            "clock_ms": self.state.clock_ms,
            "mode": int(self.state.mode),
            "mode_name": self.state.mode.name,
            "housekeeping": {
                "stale": hk.stale,
                "battery_mv": hk.battery_mv,
                "temp_c_x10": hk.temp_c_x10,
                "gyro_cds": list(hk.gyro_cds),
                "mag_tut": list(hk.mag_tut),
                "omega_dps": round(self.state.omega_dps, 3),
            },
            "images": list(self.state.image_ids()),
            "radio_busy": self.radio_current is not None,
            "radio_queue": len(self.radio_queue),
            "log_len": len(self.state.log),
        }


def run_mission(scenario: Scenario, duration_s: float | None = None,
                session_dir=None) -> MissionKernel:
    """Run a full mission deterministically; session artifacts on request."""
    return MissionKernel(scenario, session_dir=session_dir).run(duration_s)
