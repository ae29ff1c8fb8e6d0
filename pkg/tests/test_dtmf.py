import numpy as np
import pytest

from cubelink.audio import RATE, AudioBuffer, awgn_apply, goertzel_power
from cubelink.dtmf import (
    COL_FREQS,
    MT8870_CODES,
    OPCODES,
    ROW_FREQS,
    CommandAssembler,
    DtmfError,
    Mt8870Event,
    StreamingDtmfDecoder,
    UplinkCommand,
    command_encode,
    command_parse,
    dtmf_decode,
    dtmf_encode,
    mt8870_code,
)

ALL_SYMBOLS = "123A456B789C*0#D"


class TestEncode:
    def test_symbol_1_tones_dominate(self):
        buf = dtmf_encode("1")
        grid = ROW_FREQS + COL_FREQS
        n = int(0.080 * RATE)
        powers = {f: goertzel_power(buf, f, 0, n) for f in grid}
        for f in (697.0, 1209.0):
            others = [p for g, p in powers.items() if g not in (697.0, 1209.0)]
            assert all(powers[f] >= 50 * p for p in others)

    def test_empty_input(self):
        assert len(dtmf_encode("")) == 0

    def test_symbol_5_grid_lookup(self):
        buf = dtmf_encode("5")
        n = int(0.080 * RATE)
        assert goertzel_power(buf, 770.0, 0, n) > 50 * goertzel_power(buf, 697.0, 0, n)
        assert goertzel_power(buf, 1336.0, 0, n) > 50 * goertzel_power(buf, 1209.0, 0, n)

    def test_duration(self):
        buf = dtmf_encode("*011#", tone_ms=80, gap_ms=80)
        assert len(buf) == 5 * (int(0.08 * RATE) + int(0.08 * RATE))

    def test_unknown_symbol_rejected(self):
        with pytest.raises(DtmfError):
            dtmf_encode("E")

    def test_short_timing_rejected(self):
        with pytest.raises(DtmfError):
            dtmf_encode("1", tone_ms=30)


class TestTruthTable:
    @pytest.mark.parametrize("symbol,code", [("1", 0b0001), ("0", 0b1010), ("D", 0b0000)])
    def test_normative_entries(self, symbol, code):
        assert mt8870_code(symbol) == code

    def test_bijection(self):
        codes = {mt8870_code(s) for s in ALL_SYMBOLS}
        assert len(codes) == 16
        assert codes == set(range(16))


class TestDecode:
    def test_full_alphabet_round_trip(self):
        for sym in ALL_SYMBOLS:
            events = dtmf_decode(dtmf_encode(sym))
            assert len(events) == 1, f"symbol {sym!r} gave {events}"
            assert events[0].code == MT8870_CODES[sym]

    def test_sequence_with_timing(self):
        events = dtmf_decode(dtmf_encode("*022#"))
        assert [e.symbol for e in events] == ["*", "0", "2", "2", "#"]
        for a, b in zip(events, events[1:]):
            assert b.t_start >= a.t_end

    def test_amplitude_invariance(self):
        for amp in (0.1, 0.4, 0.9):
            events = dtmf_decode(dtmf_encode("7A", amplitude=amp))
            assert [e.symbol for e in events] == ["7", "A"]

    def test_single_tone_no_event(self):
        t = np.arange(int(0.3 * RATE))
        buf = AudioBuffer(0.7 * np.sin(2 * np.pi * 697.0 * t / RATE))
        assert dtmf_decode(buf) == []

    def test_same_group_pair_no_event(self):
        t = np.arange(int(0.3 * RATE))
        samples = 0.4 * np.sin(2 * np.pi * 697.0 * t / RATE) \
            + 0.4 * np.sin(2 * np.pi * 852.0 * t / RATE)
        assert dtmf_decode(AudioBuffer(samples)) == []

    def test_noise_only_no_event(self):
        rng = np.random.default_rng(30)
        for scale in (0.05, 0.3, 0.9):
            buf = AudioBuffer(np.clip(rng.normal(0, scale, 4 * RATE), -1, 1))
            assert dtmf_decode(buf) == []

    def test_silence_no_event(self):
        assert dtmf_decode(AudioBuffer(np.zeros(RATE))) == []

    def test_command_at_15db_awgn(self):
        buf = dtmf_encode("*022#")
        ok = 0
        for seed in range(10):
            noisy = awgn_apply(buf, 15.0, seed=seed)
            events = dtmf_decode(noisy)
            if [e.symbol for e in events] == ["*", "0", "2", "2", "#"]:
                ok += 1
        assert ok == 10

    def test_streaming_matches_batch(self):
        buf = dtmf_encode("*0527#")
        batch = dtmf_decode(buf)
        dec = StreamingDtmfDecoder()
        events = []
        for start in range(0, len(buf), 480):    # kernel-tick sized chunks
            events.extend(dec.feed(buf.samples[start:start + 480]))
        events.extend(dec.flush())
        assert [e.code for e in events] == [e.code for e in batch]


class TestCommandGrammar:
    def test_ping_symbols(self):
        assert command_encode("01") == "*011#"

    def test_capture_symbols(self):
        assert command_encode("02") == "*022#"

    def test_set_mode_checksum(self):
        assert command_encode("05", "2") == "*0527#"

    def test_bad_checksum_rejected(self):
        events = _events_for("*021#")
        cmd, diag = command_parse(events)
        assert cmd is None
        assert "checksum" in diag

    def test_unknown_opcode(self):
        cmd, diag = command_parse(_events_for("*0909#"))
        assert cmd is None
        assert "opcode" in diag

    def test_bad_arity(self):
        with pytest.raises(DtmfError):
            command_encode("05")            # SET_MODE needs one digit
        cmd, diag = command_parse(_events_for("*055#"))   # checksum ok, no arg
        assert cmd is None and "argument" in diag

    def test_round_trip_all_opcodes_exhaustive_short_args(self):
        for opcode, (_, lo, hi) in OPCODES.items():
            for n in range(lo, min(hi, 2) + 1):
                for variant in ("", "0", "9", "00", "42", "99"):
                    args = variant[:n].ljust(n, "5")
                    span = command_encode(opcode, args)
                    cmd, diag = command_parse(_events_for(span))
                    assert diag is None
                    assert cmd == UplinkCommand(opcode=opcode, args=args)

    def test_gap_aborts_span(self):
        events = _events_for("*02")
        late = _events_for("2#", t0=events[-1].t_end + 3.0)
        cmd, diag = command_parse(events + late)
        assert cmd is None
        assert "gap" in diag

    def test_assembler_incremental(self):
        asm = CommandAssembler()
        results = [asm.push(e) for e in _events_for("*011#")]
        assert results[:-1] == [None] * 4
        cmd, diag = results[-1]
        assert diag is None and cmd.name == "PING"

    def test_audio_round_trip_through_events(self):
        span = command_encode("03", "7")
        cmd, diag = command_parse(dtmf_decode(dtmf_encode(span)))
        assert diag is None
        assert cmd == UplinkCommand("03", "7")


def _events_for(symbols: str, t0: float = 0.0) -> list[Mt8870Event]:
    events = []
    t = t0
    for s in symbols:
        events.append(Mt8870Event(code=MT8870_CODES[s], t_start=t, t_end=t + 0.08))
        t += 0.16
    return events
