import numpy as np
import pytest

from cubelink.afsk import (
    FT_ACK,
    PREAMBLE,
    AfskConfig,
    TelemetryFrame,
    afsk_demodulate,
    afsk_modulate,
    crc16,
    frame_encode,
    frame_parse,
)
from cubelink.audio import RATE, AudioBuffer, awgn_apply, goertzel_power


def crc16_bitwise(data: bytes) -> int:
    """Independent oracle: bit-at-a-time long division, poly 0x1021, init 0xFFFF."""
    crc = 0xFFFF
    for byte in data:
        for k in range(7, -1, -1):
            bit = (byte >> k) & 1
            top = (crc >> 15) & 1
            crc = (crc << 1) & 0xFFFF
            if top ^ bit:
                crc ^= 0x1021
    return crc


class TestCrc16:
    def test_standard_check_value(self):
        assert crc16(b"123456789") == 0x29B1
        assert crc16_bitwise(b"123456789") == 0x29B1

    def test_empty_is_init(self):
        assert crc16(b"") == 0xFFFF

    def test_agrees_with_bitwise_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            data = rng.integers(0, 256, rng.integers(0, 100)).astype(np.uint8).tobytes()
            assert crc16(data) == crc16_bitwise(data)

    def test_detects_every_single_bit_flip(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            data = bytearray(rng.integers(0, 256, 64).astype(np.uint8).tobytes())
            reference = crc16(bytes(data))
            for pos in range(len(data) * 8):
                data[pos // 8] ^= 1 << (pos % 8)
                assert crc16(bytes(data)) != reference
                data[pos // 8] ^= 1 << (pos % 8)


class TestFrameCodec:
    def test_ack_frame_wire_bytes(self):
        wire = frame_encode(FT_ACK, b"")
        body = bytes([0x01, 0x03, 0x00])
        assert wire == PREAMBLE + b"\x7e" + body + crc16_bitwise(body).to_bytes(2, "big")

    def test_round_trip_100_frames(self):
        rng = np.random.default_rng(12)
        originals = []
        stream = b""
        for _ in range(100):
            ftype = int(rng.integers(1, 5))
            payload = rng.integers(0, 256, rng.integers(0, 256)).astype(np.uint8).tobytes()
            originals.append(TelemetryFrame(ftype=ftype, payload=payload))
            stream += frame_encode(ftype, payload)
        frames, diags = frame_parse(stream)
        assert frames == originals
        assert diags == []

    def test_corrupt_frame_skipped_next_recovered(self):
        good = frame_encode(FT_ACK, bytes(range(1, 11)))
        corrupt = bytearray(frame_encode(FT_ACK, bytes(range(20, 30))))
        corrupt[len(PREAMBLE) + 5] ^= 0x01   # flip a payload bit (not a sync byte)
        frames, diags = frame_parse(bytes(corrupt) + good)
        assert len(frames) == 1
        assert frames[0].payload == bytes(range(1, 11))
        assert len(diags) == 1
        assert diags[0].kind == "crc_error"

    def test_oversized_payload_rejected(self):
        with pytest.raises(ValueError):
            frame_encode(FT_ACK, b"x" * 256)

    def test_concatenation_yields_exactly_n(self):
        # payloads full of sync-alike bytes must not confuse the scanner
        rng = np.random.default_rng(13)
        stream = b""
        n = 40
        for _ in range(n):
            payload = bytes([0x7E, 0x55] * int(rng.integers(1, 60)))
            stream += frame_encode(FT_ACK, payload)
        frames, diags = frame_parse(stream)
        assert len(frames) == n
        assert diags == []


class TestModulator:
    def test_sample_count_one_byte(self):
        buf = afsk_modulate(b"\x00")
        assert len(buf) == (48 + 10 + 8) * 40   # 2640 samples at 48 kHz

    def test_all_ones_byte_is_pure_mark(self):
        cfg = AfskConfig()
        buf = afsk_modulate(b"\xff", cfg)
        spb = int(RATE / cfg.baud)
        # data bits occupy bit cells 49..56 (after leader and start bit)
        for k in range(8):
            start = (cfg.leader_bits + 1 + k) * spb
            mark = goertzel_power(buf, cfg.mark_hz, start, spb)
            space = goertzel_power(buf, cfg.space_hz, start, spb)
            assert mark > 10 * space

    def test_all_zeros_byte(self):
        cfg = AfskConfig()
        buf = afsk_modulate(b"\x00", cfg)
        spb = int(RATE / cfg.baud)
        for k in range(9):                       # start bit + 8 zero data bits
            start = (cfg.leader_bits + k) * spb
            mark = goertzel_power(buf, cfg.mark_hz, start, spb)
            space = goertzel_power(buf, cfg.space_hz, start, spb)
            assert space > 10 * mark
        stop = goertzel_power(buf, cfg.mark_hz, (cfg.leader_bits + 9) * spb, spb)
        stop_space = goertzel_power(buf, cfg.space_hz, (cfg.leader_bits + 9) * spb, spb)
        assert stop > 10 * stop_space

    def test_spectrum_concentrated_in_band(self):
        rng = np.random.default_rng(14)
        payload = rng.integers(0, 256, 64).astype(np.uint8).tobytes()
        buf = afsk_modulate(payload)
        spec = np.abs(np.fft.rfft(buf.samples)) ** 2
        freqs = np.fft.rfftfreq(len(buf), 1 / RATE)
        in_band = spec[(freqs >= 900) & (freqs <= 2600)].sum()
        assert in_band / spec.sum() >= 0.90


class TestDemodulator:
    def test_round_trip_random_payloads(self):
        rng = np.random.default_rng(15)
        for _ in range(25):
            payload = rng.integers(0, 256, rng.integers(1, 257)).astype(np.uint8).tobytes()
            assert afsk_demodulate(afsk_modulate(payload)) == payload

    def test_round_trip_with_silence_padding(self):
        rng = np.random.default_rng(16)
        payload = rng.integers(0, 256, 40).astype(np.uint8).tobytes()
        buf = afsk_modulate(payload)
        padded = AudioBuffer(np.concatenate(
            [np.zeros(int(0.3 * RATE)), buf.samples, np.zeros(int(0.3 * RATE))]))
        assert afsk_demodulate(padded) == payload

    def test_length_sweep(self):
        rng = np.random.default_rng(17)
        for n in (1, 2, 3, 7, 32, 255, 256, 600, 1024):
            payload = rng.integers(0, 256, n).astype(np.uint8).tobytes()
            assert afsk_demodulate(afsk_modulate(payload)) == payload

    def test_amplitude_invariance(self):
        rng = np.random.default_rng(18)
        payload = rng.integers(0, 256, 32).astype(np.uint8).tobytes()
        buf = afsk_modulate(payload)
        for scale in (0.1, 0.35, 0.7, 1.0):
            scaled = AudioBuffer(buf.samples * scale / 0.8)
            assert afsk_demodulate(scaled) == payload

    def test_baud_clock_error_tolerated(self):
        rng = np.random.default_rng(19)
        payload = rng.integers(0, 256, 48).astype(np.uint8).tobytes()
        buf = afsk_modulate(payload)
        for factor in (0.99, 1.01):
            warped = np.interp(np.arange(0, len(buf) - 1, factor),
                               np.arange(len(buf)), buf.samples)
            assert afsk_demodulate(AudioBuffer(warped)) == payload

    def test_silence_yields_empty(self):
        assert afsk_demodulate(AudioBuffer(np.zeros(RATE))) == b""

    def test_noise_only_yields_no_valid_frames(self):
        rng = np.random.default_rng(20)
        buf = AudioBuffer(np.clip(rng.normal(0, 0.3, 3 * RATE), -1, 1))
        frames, _ = frame_parse(afsk_demodulate(buf))
        assert frames == []

    def test_framed_at_20db_awgn(self):
        rng = np.random.default_rng(21)
        passed = 0
        total = 0
        for seed in range(10):
            payload = rng.integers(0, 256, 64).astype(np.uint8).tobytes()
            buf = afsk_modulate(frame_encode(FT_ACK, payload))
            noisy = awgn_apply(buf, 20.0, seed=seed)
            frames, _ = frame_parse(afsk_demodulate(noisy))
            total += 1
            passed += sum(1 for f in frames if f.payload == payload)
        assert passed == total
