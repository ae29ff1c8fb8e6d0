"""Onboard computer core: mode machine, telemetry packing, attitude control.

The mode transition function is pure: (mode, event) -> (mode, actions). The
kernel owns all side effects; actions are directives it executes (start a
subroutine, queue an ack, emit telemetry). The normative table lives here,
frozen by the conformance tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .dtmf import UplinkCommand


class SatelliteMode(IntEnum):
    BOOT = 0
    SAFE = 1
    NOMINAL = 2
    ADCS = 3
    PAYLOAD = 4
    DOWNLINK = 5


# timers the kernel arms for the mode machine
TIMER_BOOT = "boot_init"            # BOOT -> SAFE after 5 s
TIMER_CHECKOUT = "safe_checkout"    # post-boot SAFE -> NOMINAL after 10 s
TIMER_HOUSEKEEPING = "housekeeping"

BOOT_DURATION_MS = 5000
CHECKOUT_DURATION_MS = 10000
CAPTURE_DURATION_MS = 2000          # camera subroutine occupies ~2 seconds

SUB_CAPTURE = "capture"
SUB_IMAGE_DOWNLINK = "image_downlink"
SUB_DETUMBLE = "detumble"

# modes that produce periodic housekeeping (SAFE and BOOT stay quiet)
HK_MODES = (SatelliteMode.NOMINAL, SatelliteMode.ADCS,
            SatelliteMode.PAYLOAD, SatelliteMode.DOWNLINK)

# SET_MODE argument digit -> target mode
SET_MODE_TARGETS = {
    "1": SatelliteMode.SAFE,
    "2": SatelliteMode.NOMINAL,
    "3": SatelliteMode.ADCS,
}

# ack reason codes (wire byte in the ack frame)
ACK_OK = 0
ACK_BUSY = 1
ACK_SAFE_MODE = 2
ACK_BAD_ARG = 3
ACK_NO_IMAGE = 4
ACK_BOOTING = 5


# ---------------------------------------------------------------------------
# events

@dataclass(frozen=True)
class GroundCommand:
    t_ms: int
    command: UplinkCommand


@dataclass(frozen=True)
class SensorThreshold:
    t_ms: int
    name: str       # "gyro_high"
    value: float


@dataclass(frozen=True)
class SubroutineDone:
    t_ms: int
    name: str
    outcome: str    # "ok" | "failed" | "converged"


@dataclass(frozen=True)
class TimerFired:
    t_ms: int
    name: str


@dataclass(frozen=True)
class GpsRegion:
    t_ms: int
    region: str
    enter: bool


EventTrigger = GroundCommand | SensorThreshold | SubroutineDone | TimerFired | GpsRegion


# ---------------------------------------------------------------------------
# actions

@dataclass(frozen=True)
class Ack:
    opcode: str
    ok: bool
    reason: int = ACK_OK


@dataclass(frozen=True)
class Start:
    subroutine: str
    arg: str = ""


@dataclass(frozen=True)
class Stop:
    subroutine: str


@dataclass(frozen=True)
class Emit:
    kind: str       # "housekeeping" | "event_log"


@dataclass(frozen=True)
class TransitionContext:
    """State facts the transition function may consult."""

    image_ids: tuple = ()


def _nack(cmd: UplinkCommand, reason: int) -> Ack:
    return Ack(opcode=cmd.opcode, ok=False, reason=reason)


def _ok(cmd: UplinkCommand) -> Ack:
    return Ack(opcode=cmd.opcode, ok=True)


def compute_state(mode: SatelliteMode, event: EventTrigger,
                  ctx: TransitionContext | None = None):
    """Normative transition table; returns (new mode, actions).

    Pure: never touches state, never starts anything itself.
    """
    ctx = ctx or TransitionContext()

    if isinstance(event, GpsRegion):
        return mode, []                       # logged by the kernel; no table row

    if isinstance(event, TimerFired):
        if event.name == TIMER_BOOT and mode == SatelliteMode.BOOT:
            return SatelliteMode.SAFE, []
        if event.name == TIMER_CHECKOUT and mode == SatelliteMode.SAFE:
            return SatelliteMode.NOMINAL, []
        if event.name == TIMER_HOUSEKEEPING and mode in HK_MODES:
            return mode, [Emit("housekeeping")]
        return mode, []

    if isinstance(event, SensorThreshold):
        if event.name == "gyro_high" and mode == SatelliteMode.NOMINAL:
            return SatelliteMode.ADCS, [Start(SUB_DETUMBLE)]
        return mode, []

    if isinstance(event, SubroutineDone):
        if mode == SatelliteMode.PAYLOAD and event.name == SUB_CAPTURE:
            return SatelliteMode.NOMINAL, []
        if mode == SatelliteMode.DOWNLINK and event.name == SUB_IMAGE_DOWNLINK:
            return SatelliteMode.NOMINAL, []
        if mode == SatelliteMode.ADCS and event.name == SUB_DETUMBLE:
            return SatelliteMode.NOMINAL, []
        return mode, []

    if isinstance(event, GroundCommand):
        return _command_row(mode, event.command, ctx)

    raise TypeError(f"unknown event {event!r}")


def _command_row(mode: SatelliteMode, cmd: UplinkCommand, ctx: TransitionContext):
    name = cmd.name

    if name == "REBOOT":
        stops = [Stop(SUB_CAPTURE), Stop(SUB_IMAGE_DOWNLINK), Stop(SUB_DETUMBLE)]
        return SatelliteMode.BOOT, [_ok(cmd)] + stops

    if mode == SatelliteMode.BOOT:
        return mode, [_nack(cmd, ACK_BOOTING)]

    if name == "PING":
        return mode, [_ok(cmd)]

    if name == "DOWNLINK_TELEMETRY":
        return mode, [_ok(cmd), Emit("housekeeping"), Emit("event_log")]

    if name == "SET_MODE":
        target = SET_MODE_TARGETS.get(cmd.args)
        if target is None:
            return mode, [_nack(cmd, ACK_BAD_ARG)]
        if mode in (SatelliteMode.PAYLOAD, SatelliteMode.DOWNLINK):
            return mode, [_nack(cmd, ACK_BUSY)]
        actions = [_ok(cmd)]
        if mode == SatelliteMode.ADCS and target != SatelliteMode.ADCS:
            actions.append(Stop(SUB_DETUMBLE))    # ground override
        if target == SatelliteMode.ADCS and mode != SatelliteMode.ADCS:
            actions.append(Start(SUB_DETUMBLE))
        return target, actions

    if name == "CAPTURE":
        if mode == SatelliteMode.SAFE:
            return mode, [_nack(cmd, ACK_SAFE_MODE)]   # payload ops forbidden in SAFE
        if mode != SatelliteMode.NOMINAL:
            return mode, [_nack(cmd, ACK_BUSY)]
        return SatelliteMode.PAYLOAD, [_ok(cmd), Start(SUB_CAPTURE)]

    if name == "DOWNLINK_IMAGE":
        if mode == SatelliteMode.SAFE:
            return mode, [_nack(cmd, ACK_SAFE_MODE)]
        if mode != SatelliteMode.NOMINAL:
            return mode, [_nack(cmd, ACK_BUSY)]
        if cmd.args:
            if int(cmd.args) not in ctx.image_ids:
                return mode, [_nack(cmd, ACK_NO_IMAGE)]
        elif not ctx.image_ids:
            return mode, [_nack(cmd, ACK_NO_IMAGE)]
        return SatelliteMode.DOWNLINK, [_ok(cmd), Start(SUB_IMAGE_DOWNLINK, arg=cmd.args)]

    return mode, [_nack(cmd, ACK_BAD_ARG)]


# ---------------------------------------------------------------------------
# housekeeping telemetry

HK_STRUCT = struct.Struct(">IBHhhhhhhh")   # 21 bytes
HK_STALE_FLAG = 0x80                       # top bit of the mode byte


@dataclass
class HousekeepingPayload:
    clock_ms: int
    mode: SatelliteMode
    battery_mv: int = 0
    temp_c_x10: int = 0
    gyro_cds: tuple = (0, 0, 0)    # centi-deg/s
    mag_tut: tuple = (0, 0, 0)     # tenth-uT
    stale: bool = True             # no bus READ_ALL completed yet

    def pack(self) -> bytes:
        mode_byte = int(self.mode) | (HK_STALE_FLAG if self.stale else 0)
        return HK_STRUCT.pack(self.clock_ms & 0xFFFFFFFF, mode_byte,
                              self.battery_mv & 0xFFFF, self.temp_c_x10,
                              *self.gyro_cds, *self.mag_tut)

    @classmethod
    def unpack(cls, payload: bytes) -> "HousekeepingPayload":
        if len(payload) != HK_STRUCT.size:
            raise ValueError(f"housekeeping payload must be {HK_STRUCT.size} bytes")
        clock_ms, mode_byte, battery, temp, gx, gy, gz, mx, my, mz = HK_STRUCT.unpack(payload)
        return cls(clock_ms=clock_ms, mode=SatelliteMode(mode_byte & 0x7F),
                   battery_mv=battery, temp_c_x10=temp,
                   gyro_cds=(gx, gy, gz), mag_tut=(mx, my, mz),
                   stale=bool(mode_byte & HK_STALE_FLAG))


ACK_STRUCT = struct.Struct(">HBBB")   # seq, opcode, ok, reason


@dataclass(frozen=True)
class AckPayload:
    seq: int
    opcode: str
    ok: bool
    reason: int = ACK_OK

    def pack(self) -> bytes:
        return ACK_STRUCT.pack(self.seq & 0xFFFF, int(self.opcode), int(self.ok),
                               self.reason)

    @classmethod
    def unpack(cls, payload: bytes) -> "AckPayload":
        seq, opcode, ok, reason = ACK_STRUCT.unpack(payload)
        return cls(seq=seq, opcode=f"{opcode:02d}", ok=bool(ok), reason=reason)


META_STRUCT = struct.Struct(">HHH")   # image id, width, height


@dataclass(frozen=True)
class ImageMetaPayload:
    image_id: int
    width: int
    height: int

    def pack(self) -> bytes:
        return META_STRUCT.pack(self.image_id, self.width, self.height)

    @classmethod
    def unpack(cls, payload: bytes) -> "ImageMetaPayload":
        return cls(*META_STRUCT.unpack(payload))


# ---------------------------------------------------------------------------
# reference attitude controller

@dataclass(frozen=True)
class DetumbleCommand:
    duty: int        # 0..100
    negative: bool   # dipole direction flag

    @property
    def wire_value(self) -> int:
        return (0x80 if self.negative else 0) | self.duty


def detumble_step(gyro_dps, mag_ut, mag_prev_ut, dt: float, k: float,
                  m_max: float) -> list[DetumbleCommand]:
    """B-dot law: m_i = -k * dB_i/dt, mapped to per-axis PWM duties.

    gyro is accepted for interface symmetry with richer controllers; the
    plain B-dot law itself only needs the field derivative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if k <= 0 or m_max <= 0:
        raise ValueError("k and m_max must be positive")
    _ = gyro_dps
    out = []
    for b, b_prev in zip(mag_ut, mag_prev_ut):
        m = -k * (b - b_prev) / dt
        duty = int(round(min(abs(m) / m_max, 1.0) * 100))
        out.append(DetumbleCommand(duty=duty, negative=m < 0))
    return out


# attitude-control plugin hook: anything with this shape can replace B-dot
class AttitudeController:
    """Interface for pluggable controllers driven by the kernel's sensor poll."""

    def step(self, gyro_dps, mag_ut, dt: float) -> list[DetumbleCommand]:
        raise NotImplementedError


class BDotController(AttitudeController):
    """Reference implementation backed by detumble_step."""

    def __init__(self, k: float, m_max: float):
        self.k = k
        self.m_max = m_max
        self._prev_mag = None

    def step(self, gyro_dps, mag_ut, dt: float) -> list[DetumbleCommand]:
        if self._prev_mag is None:
            self._prev_mag = tuple(mag_ut)
            return [DetumbleCommand(0, False)] * 3
        cmds = detumble_step(gyro_dps, mag_ut, self._prev_mag, dt, self.k, self.m_max)
        self._prev_mag = tuple(mag_ut)
        return cmds

    def reset(self):
        self._prev_mag = None


# log record kinds -> compact codes for the event-log telemetry frame
LOG_KIND_CODES = {
    "boot": 0x01,
    "mode": 0x02,
    "command": 0x03,
    "ack": 0x04,
    "capture": 0x05,
    "downlink": 0x06,
    "uplink": 0x07,
    "threshold": 0x08,
    "gps": 0x09,
    "bus_error": 0x0A,
    "subroutine": 0x0B,
    "diagnostic": 0x0C,
}


def pack_event_log(records: list[dict], limit: int = 48) -> bytes:
    """Latest records as (u32 clock_ms, u8 kind code) pairs."""
    recent = records[-limit:]
    out = bytearray()
    for rec in recent:
        out += struct.pack(">IB", rec["t_ms"] & 0xFFFFFFFF,
                           LOG_KIND_CODES.get(rec["kind"], 0xFF))
    return bytes(out)


def unpack_event_log(payload: bytes) -> list[tuple[int, int]]:
    if len(payload) % 5:
        raise ValueError("event-log payload length must be a multiple of 5")
    return [struct.unpack(">IB", payload[i:i + 5]) for i in range(0, len(payload), 5)]
