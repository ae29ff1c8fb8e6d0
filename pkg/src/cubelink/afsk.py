"""Bell-202 style AFSK modem and the telemetry frame format carried over it.

Serialization is 8N1 LSB-first at 1200 baud, mark 1200 Hz / space 2200 Hz,
compatible with the classic soundcard-modem convention. Frames are
length-prefixed and CRC-16 protected; the parser reports corruption as
diagnostics instead of raising, so a noisy stream still yields whatever
frames survived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import RATE, AudioBuffer, Oscillator, tone_power_track

# frame wire format
PREAMBLE = b"\x55" * 16
SYNC_BYTE = 0x7E
FRAME_VERSION = 1
MAX_PAYLOAD = 255

FT_HOUSEKEEPING = 0x01
FT_EVENT_LOG = 0x02
FT_ACK = 0x03
FT_IMAGE_META = 0x04

_CRC16_POLY = 0x1021


def _make_crc16_table():
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ _CRC16_POLY) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC16_TABLE = _make_crc16_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xor-out."""
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC16_TABLE[(crc >> 8) ^ byte]
    return crc


@dataclass(frozen=True)
class AfskConfig:
    baud: float = 1200.0
    mark_hz: float = 1200.0     # binary 1
    space_hz: float = 2200.0    # binary 0
    leader_bits: int = 48       # idle mark bit-times before data
    trailer_bits: int = 8

    def __post_init__(self):
        if self.baud <= 0:
            raise ValueError("baud must be positive")
        if self.mark_hz == self.space_hz:
            raise ValueError("mark and space must differ")


@dataclass(frozen=True)
class TelemetryFrame:
    ftype: int
    payload: bytes
    version: int = FRAME_VERSION

    @property
    def crc(self) -> int:
        return crc16(bytes([self.version, self.ftype, len(self.payload)]) + self.payload)


@dataclass
class FrameDiagnostic:
    kind: str       # "crc_error" | "bad_length" | "resync"
    offset: int     # byte offset of the sync byte involved
    detail: str = ""


def frame_encode(ftype: int, payload: bytes) -> bytes:
    """Preamble + sync + version + ftype + length + payload + CRC-16 (big-endian)."""
    if not 0 <= ftype <= 0xFF:
        raise ValueError(f"frame type {ftype} out of range")
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    body = bytes([FRAME_VERSION, ftype, len(payload)]) + bytes(payload)
    return PREAMBLE + bytes([SYNC_BYTE]) + body + crc16(body).to_bytes(2, "big")


def frame_parse(stream: bytes) -> tuple[list[TelemetryFrame], list[FrameDiagnostic]]:
    """Scan a byte stream for frames; corrupt regions become diagnostics.

    After a bad frame the scanner resumes just past the sync byte that
    failed, so a later valid frame is still recovered.
    """
    frames: list[TelemetryFrame] = []
    diags: list[FrameDiagnostic] = []
    i = 0
    n = len(stream)
    while i < n:
        if stream[i] != SYNC_BYTE:
            i += 1
            continue
        header = stream[i + 1:i + 4]
        if len(header) < 3:
            break
        version, ftype, length = header
        end = i + 4 + length + 2
        if version != FRAME_VERSION:
            diags.append(FrameDiagnostic("resync", i, f"unsupported version {version}"))
            i += 1
            continue
        if end > n:
            diags.append(FrameDiagnostic("bad_length", i, "frame truncated by end of stream"))
            break
        body = stream[i + 1:i + 4 + length]
        wire_crc = int.from_bytes(stream[i + 4 + length:end], "big")
        if crc16(body) != wire_crc:
            diags.append(FrameDiagnostic("crc_error", i, "frame CRC mismatch"))
            i += 1
            continue
        frames.append(TelemetryFrame(ftype=ftype, payload=bytes(stream[i + 4:i + 4 + length])))
        i = end
    return frames, diags


def _bits_for(data: bytes, cfg: AfskConfig) -> np.ndarray:
    bits = [1] * cfg.leader_bits
    for byte in data:
        bits.append(0)                              # start bit
        bits.extend((byte >> k) & 1 for k in range(8))  # LSB first
        bits.append(1)                              # stop bit
    bits.extend([1] * cfg.trailer_bits)
    return np.array(bits, dtype=np.uint8)


def afsk_modulate(data: bytes, cfg: AfskConfig = AfskConfig(), rate: int = RATE,
                  amplitude: float | None = None) -> AudioBuffer:
    """Modulate bytes as phase-continuous AFSK audio."""
    if not data:
        raise ValueError("nothing to modulate")
    bits = _bits_for(data, cfg)
    freqs = np.where(bits == 1, cfg.mark_hz, cfg.space_hz)
    # cumulative boundary rounding keeps long runs aligned to the baud clock
    bounds = np.round(np.arange(len(bits) + 1) * rate / cfg.baud).astype(int)
    per_sample = np.repeat(freqs, np.diff(bounds))
    osc = Oscillator(rate=rate)
    if amplitude is not None:
        osc.amplitude = amplitude
    return AudioBuffer(osc.sweep(per_sample), rate)


def afsk_demodulate(buf: AudioBuffer, cfg: AfskConfig = AfskConfig()) -> bytes:
    """Recover bytes from AFSK audio.

    Dual-tone sliding power comparison locates start-bit edges against the
    idle mark carrier; each of the ten bit cells of a byte is then sampled
    at its center. Timing is re-acquired at every start edge, which absorbs
    about +-1% baud-clock error. Leading/trailing silence is harmless; a
    buffer with no decodable bits yields b"".
    """
    spb = buf.rate / cfg.baud              # samples per bit
    win = int(round(spb))
    if len(buf) < 2 * win:
        return b""
    pm = tone_power_track(buf.samples, buf.rate, cfg.mark_hz, win)
    ps = tone_power_track(buf.samples, buf.rate, cfg.space_hz, win)
    is_mark = pm >= ps                     # silence ties resolve to mark (idle)
    n = len(is_mark)
    half = win // 2

    out = bytearray()
    edges = np.flatnonzero(~is_mark[1:] & is_mark[:-1]) + 1
    resume = 0
    for e in edges:
        if e < resume:
            continue
        run_start = max(0, e - half)
        if not np.all(is_mark[run_start:e]):   # demand idle mark before the start bit
            continue
        edge = e + half                        # window straddles the edge by half a bit
        byte = 0
        ok = True
        for k in range(10):
            center = int(round(edge + (k + 0.5) * spb)) - half
            if center < 0 or center >= n:
                ok = False
                break
            bit = 1 if pm[center] >= ps[center] else 0
            if k == 0:
                ok = bit == 0                  # start bit must be space
            elif k == 9:
                ok = bit == 1                  # stop bit must be mark
            elif bit:
                byte |= 1 << (k - 1)
            if not ok:
                break
        if not ok:
            continue
        out.append(byte)
        resume = int(round(edge + 9.5 * spb)) - half
    return bytes(out)
