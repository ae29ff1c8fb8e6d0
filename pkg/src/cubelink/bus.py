"""Framed request/response link between the flight computer and an emulated
sensor/actuator microcontroller.

Requests are a fixed 5 bytes ([0xA5, cmd, arg0, arg1, crc8]); responses are
length-prefixed and carry big-endian fixed-point sensor words. The MCU never
crashes on garbage: bad sync bytes are skipped (resync scan), bad CRCs are
answered with a BAD_CRC status.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REQ_SYNC = 0xA5
RESP_SYNC = 0x5A
REQ_LEN = 5
MAX_RESP_PAYLOAD = 32

CMD_PING = 0x01
CMD_READ_SENSOR = 0x02
CMD_SET_PWM = 0x03
CMD_READ_ALL = 0x04
COMMANDS = (CMD_PING, CMD_READ_SENSOR, CMD_SET_PWM, CMD_READ_ALL)

ST_OK = 0x00
ST_BAD_CRC = 0x01
ST_UNKNOWN_CMD = 0x02
ST_BAD_ARG = 0x03

# sensor channel order and fixed-point scaling (value unit -> wire integer)
SENSOR_CHANNELS = (
    ("gyro_x", 100.0), ("gyro_y", 100.0), ("gyro_z", 100.0),     # centi-deg/s
    ("mag_x", 10.0), ("mag_y", 10.0), ("mag_z", 10.0),           # tenth-uT
    ("accel_x", 1000.0), ("accel_y", 1000.0), ("accel_z", 1000.0),  # milli-g
    ("temp", 10.0),                                              # tenth-degC
    ("battery", 1.0),                                            # mV, unsigned
)
SENSOR_IDS = {name: i for i, (name, _) in enumerate(SENSOR_CHANNELS)}
N_PWM = 4


class BusError(Exception):
    pass


def crc8(data: bytes) -> int:
    """CRC-8, poly 0x07, init 0x00, no reflection, no xor-out."""
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


@dataclass(frozen=True)
class BusRequest:
    cmd: int
    arg0: int = 0
    arg1: int = 0


@dataclass(frozen=True)
class BusResponse:
    status: int
    payload: bytes = b""


def bus_encode_request(cmd: int, arg0: int = 0, arg1: int = 0) -> bytes:
    if cmd not in COMMANDS:
        raise BusError(f"unknown bus command 0x{cmd:02X}")
    for v in (arg0, arg1):
        if not 0 <= v <= 0xFF:
            raise BusError(f"argument {v} out of byte range")
    body = bytes([cmd, arg0, arg1])
    return bytes([REQ_SYNC]) + body + bytes([crc8(body)])


def bus_parse_request(data: bytes) -> BusRequest:
    """Strict parse of one 5-byte request; raises on sync or CRC errors."""
    if len(data) != REQ_LEN:
        raise BusError(f"request must be {REQ_LEN} bytes, got {len(data)}")
    if data[0] != REQ_SYNC:
        raise BusError(f"bad sync byte 0x{data[0]:02X}")
    if crc8(data[1:4]) != data[4]:
        raise BusError("request CRC mismatch")
    return BusRequest(cmd=data[1], arg0=data[2], arg1=data[3])


def bus_encode_response(status: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_RESP_PAYLOAD:
        raise BusError(f"response payload of {len(payload)} exceeds {MAX_RESP_PAYLOAD}")
    body = bytes([status, len(payload)]) + bytes(payload)
    return bytes([RESP_SYNC]) + body + bytes([crc8(body)])


def bus_parse_response(data: bytes) -> BusResponse:
    if len(data) < 3:
        raise BusError("response too short")
    if data[0] != RESP_SYNC:
        raise BusError(f"bad response sync byte 0x{data[0]:02X}")
    length = data[2]
    if len(data) != 3 + length + 1:
        raise BusError(f"response length field {length} does not match {len(data)} bytes")
    if crc8(data[1:3 + length]) != data[-1]:
        raise BusError("response CRC mismatch")
    return BusResponse(status=data[1], payload=bytes(data[3:3 + length]))


@dataclass
class SensorProfile:
    """value(t) = bias + amplitude*sin(2*pi*freq*t + phase) + gaussian(sigma)."""

    bias: float = 0.0
    amplitude: float = 0.0
    freq_hz: float = 0.0
    phase: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise BusError("sigma must be nonnegative")


def sensor_value(profile: SensorProfile, t: float, seed: int = 0, channel: int = 0) -> float:
    """Deterministic sample of the generator at logical time t seconds.

    The noise draw is a pure function of (seed, channel, round(t*1000)), so
    re-reading the same instant reproduces the same value.
    """
    clean = profile.bias + profile.amplitude * np.sin(
        2.0 * np.pi * profile.freq_hz * t + profile.phase)
    if profile.sigma == 0.0:
        return float(clean)
    t_ms = int(round(t * 1000.0))
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed & 0x7FFFFFFF, channel, t_ms & 0x7FFFFFFFFFFF])))
    return float(clean + profile.sigma * rng.standard_normal())


@dataclass
class FaultConfig:
    bit_flip_prob: float = 0.0   # per response, flip one random bit
    drop_prob: float = 0.0       # per response, drop it entirely
    seed: int = 0


@dataclass
class McuState:
    profiles: dict = field(default_factory=dict)   # channel name -> SensorProfile
    seed: int = 0
    faults: FaultConfig = field(default_factory=FaultConfig)
    pwm: list = field(default_factory=lambda: [0] * N_PWM)  # raw bytes: bit7 dir, 0-100 duty
    gyro_coupling: float = 0.0   # plant model: active PWM decays gyro rates, 1/s per unit duty

    def __post_init__(self):
        for name, _ in SENSOR_CHANNELS:
            self.profiles.setdefault(name, SensorProfile())
        self._fault_rng = np.random.Generator(np.random.PCG64(self.faults.seed))
        self._collector = bytearray()
        self._gyro_gain = 1.0
        self._gain_t = 0.0

    # -- sensor sampling ----------------------------------------------------

    def _advance_gyro_gain(self, t: float):
        if t <= self._gain_t:
            return
        if self.gyro_coupling > 0:
            mean_duty = sum(p & 0x7F for p in self.pwm) / (N_PWM * 100.0)
            if mean_duty > 0:
                self._gyro_gain *= float(np.exp(
                    -self.gyro_coupling * mean_duty * (t - self._gain_t)))
        self._gain_t = t

    def channel_raw(self, channel_id: int, t: float) -> int:
        """Fixed-point wire integer for one channel at logical time t."""
        name, scale = SENSOR_CHANNELS[channel_id]
        value = sensor_value(self.profiles[name], t, seed=self.seed, channel=channel_id)
        if name.startswith("gyro"):
            self._advance_gyro_gain(t)
            value *= self._gyro_gain
        raw = int(round(value * scale))
        if name == "battery":
            return max(0, min(0xFFFF, raw))
        return max(-32768, min(32767, raw))

    # -- request handling ---------------------------------------------------

    def handle(self, req: bytes, t: float) -> bytes | None:
        """Respond to exactly one 5-byte request; None when dropped by faults."""
        if len(req) != REQ_LEN or req[0] != REQ_SYNC:
            return None                      # not addressable as a request
        if crc8(req[1:4]) != req[4]:
            return self._egress(bus_encode_response(ST_BAD_CRC))
        cmd, arg0, arg1 = req[1], req[2], req[3]
        if cmd == CMD_PING:
            return self._egress(bus_encode_response(ST_OK))
        if cmd == CMD_READ_SENSOR:
            if arg0 >= len(SENSOR_CHANNELS):
                return self._egress(bus_encode_response(ST_BAD_ARG))
            raw = self.channel_raw(arg0, t)
            return self._egress(bus_encode_response(
                ST_OK, int(raw & 0xFFFF).to_bytes(2, "big")))
        if cmd == CMD_SET_PWM:
            if arg0 >= N_PWM:
                return self._egress(bus_encode_response(ST_BAD_ARG))
            direction = arg1 & 0x80
            duty = min(arg1 & 0x7F, 100)
            self.pwm[arg0] = direction | duty
            return self._egress(bus_encode_response(ST_OK))
        if cmd == CMD_READ_ALL:
            payload = b"".join(
                int(self.channel_raw(i, t) & 0xFFFF).to_bytes(2, "big")
                for i in range(len(SENSOR_CHANNELS)))
            payload += bytes(self.pwm)
            return self._egress(bus_encode_response(ST_OK, payload))
        return self._egress(bus_encode_response(ST_UNKNOWN_CMD))

    def feed(self, byte: int, t: float) -> bytes | None:
        """Byte-stream entry point with resync: scan for sync, collect 5 bytes."""
        if not self._collector:
            if byte != REQ_SYNC:
                return None                  # resync scan
            self._collector.append(byte)
            return None
        self._collector.append(byte)
        if len(self._collector) < REQ_LEN:
            return None
        req = bytes(self._collector)
        self._collector.clear()
        return self.handle(req, t)

    def _egress(self, resp: bytes) -> bytes | None:
        """Apply fault injection to an outgoing response."""
        f = self.faults
        if f.drop_prob > 0 and self._fault_rng.random() < f.drop_prob:
            return None
        if f.bit_flip_prob > 0 and self._fault_rng.random() < f.bit_flip_prob:
            pos = int(self._fault_rng.integers(0, len(resp) * 8))
            corrupted = bytearray(resp)
            corrupted[pos // 8] ^= 1 << (pos % 8)
            return bytes(corrupted)
        return resp


def mcu_handle(state: McuState, req: bytes, t: float) -> bytes | None:
    """Feed arbitrary bytes through the MCU's stream collector.

    Returns the first response produced, or None (resynced away or
    dropped). Never raises, whatever the input.
    """
    result = None
    for byte in bytes(req):
        resp = state.feed(byte, t)
        if resp is not None and result is None:
            result = resp
    return result


class BusLink:
    """Ordered byte-stream transport owned by the simulation kernel.

    per_byte_ms models the serial line rate; after each transact() the
    modeled wire time is available as last_transaction_ms. The peers share
    nothing but this stream.
    """

    def __init__(self, mcu: McuState, per_byte_ms: float = 0.0):
        self.mcu = mcu
        self.per_byte_ms = per_byte_ms
        self.last_transaction_ms = 0.0

    def transact(self, req: bytes, t: float) -> BusResponse | None:
        """Send one request, collect the reply; None on drop or corruption
        so severe the response does not parse."""
        raw = mcu_handle(self.mcu, req, t)
        wire_bytes = len(req) + (len(raw) if raw is not None else 0)
        self.last_transaction_ms = wire_bytes * self.per_byte_ms
        if raw is None:
            return None
        try:
            return bus_parse_response(raw)
        except BusError:
            return None
