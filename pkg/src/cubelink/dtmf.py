"""DTMF uplink: tone grid, MT8870-equivalent decoder, command grammar.

The decoder mimics a hardware DTMF chip: it watches 20 ms hops of audio,
requires exactly one row tone and one column tone to dominate their groups,
and emits a 4-bit code per the MT8870 truth table once the pair has held
for 40 ms. Commands ride on top as '*' + opcode + args + checksum + '#'.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import RATE, AudioBuffer, Oscillator, tone_powers

ROW_FREQS = (697.0, 770.0, 852.0, 941.0)
COL_FREQS = (1209.0, 1336.0, 1477.0, 1633.0)
GRID = ("123A", "456B", "789C", "*0#D")

SYMBOLS = {GRID[r][c]: (r, c) for r in range(4) for c in range(4)}

# MT8870 binary output per detected symbol
MT8870_CODES = {
    "1": 0b0001, "2": 0b0010, "3": 0b0011, "4": 0b0100, "5": 0b0101,
    "6": 0b0110, "7": 0b0111, "8": 0b1000, "9": 0b1001, "0": 0b1010,
    "*": 0b1011, "#": 0b1100, "A": 0b1101, "B": 0b1110, "C": 0b1111,
    "D": 0b0000,
}
CODE_SYMBOLS = {v: k for k, v in MT8870_CODES.items()}

HOP_MS = 20                 # decoder hop/window
MIN_TONE_HOPS = 2           # 40 ms to register
MIN_GAP_HOPS = 2            # 40 ms drop to close an event
DOMINANCE = 4.0             # winning tone vs others in its group
GRID_POWER_FLOOR = 0.2      # fraction of window power that must sit on the grid

# uplink command vocabulary: opcode -> (name, min args, max args)
OPCODES = {
    "01": ("PING", 0, 0),
    "02": ("CAPTURE", 0, 0),
    "03": ("DOWNLINK_IMAGE", 0, 3),
    "04": ("DOWNLINK_TELEMETRY", 0, 0),
    "05": ("SET_MODE", 1, 1),
    "06": ("REBOOT", 0, 0),
}
MAX_ARG_DIGITS = 8
SPAN_GAP_LIMIT_S = 2.0      # inter-symbol gap that aborts a command span


class DtmfError(Exception):
    pass


@dataclass(frozen=True)
class Mt8870Event:
    code: int
    t_start: float
    t_end: float

    @property
    def symbol(self) -> str:
        return CODE_SYMBOLS[self.code]


@dataclass(frozen=True)
class UplinkCommand:
    opcode: str
    args: str

    @property
    def name(self) -> str:
        return OPCODES[self.opcode][0]

    @property
    def symbols(self) -> str:
        return command_encode(self.opcode, self.args)


def mt8870_code(symbol: str) -> int:
    """Truth-table lookup for one DTMF symbol."""
    try:
        return MT8870_CODES[symbol]
    except KeyError:
        raise DtmfError(f"unknown DTMF symbol {symbol!r}") from None


def symbol_freqs(symbol: str) -> tuple[float, float]:
    if symbol not in SYMBOLS:
        raise DtmfError(f"unknown DTMF symbol {symbol!r}")
    r, c = SYMBOLS[symbol]
    return ROW_FREQS[r], COL_FREQS[c]


def dtmf_encode(symbols: str, tone_ms: float = 80.0, gap_ms: float = 80.0,
                rate: int = RATE, amplitude: float = 0.8) -> AudioBuffer:
    """Each symbol: row + column sinusoids at half amplitude, then a gap."""
    if tone_ms < 40 or gap_ms < 40:
        raise DtmfError("tone and gap must be at least 40 ms")
    chunks = []
    n_tone = int(round(tone_ms / 1000.0 * rate))
    n_gap = int(round(gap_ms / 1000.0 * rate))
    for sym in symbols:
        f_row, f_col = symbol_freqs(sym)
        row = Oscillator(rate=rate, amplitude=amplitude / 2.0)
        col = Oscillator(rate=rate, amplitude=amplitude / 2.0)
        chunks.append(row.tone(f_row, n_tone) + col.tone(f_col, n_tone))
        chunks.append(np.zeros(n_gap))
    if not chunks:
        return AudioBuffer(np.zeros(0), rate)
    return AudioBuffer(np.concatenate(chunks), rate)


def _classify_window(samples: np.ndarray, rate: int, start: int, length: int) -> str | None:
    """One hop decision: the dominant symbol, or None."""
    powers = tone_powers(samples, rate, ROW_FREQS + COL_FREQS, start, length)
    rows, cols = powers[:4], powers[4:]
    mean_sq = float(np.mean(samples[start:start + length] ** 2))
    if mean_sq <= 0.0:
        return None
    # a real DTMF burst concentrates its energy on one row and one col bin
    if (rows.max() + cols.max()) < GRID_POWER_FLOOR * mean_sq:
        return None
    r = int(np.argmax(rows))
    c = int(np.argmax(cols))
    others_r = np.delete(rows, r)
    others_c = np.delete(cols, c)
    if np.any(rows[r] < DOMINANCE * others_r) or np.any(cols[c] < DOMINANCE * others_c):
        return None
    return GRID[r][c]


class StreamingDtmfDecoder:
    """Incremental MT8870 emulation; feed() audio chunks, collect events.

    One instance per receiver. Events close after the tone has been gone
    for MIN_GAP_HOPS hops, so they trail real time by ~40 ms.
    """

    def __init__(self, rate: int = RATE):
        self.rate = rate
        self.hop = int(round(HOP_MS / 1000.0 * rate))
        self._buf = np.zeros(0)
        self._hops_consumed = 0
        self._candidate: str | None = None
        self._cand_count = 0
        self._active: str | None = None
        self._active_start = 0
        self._gap_count = 0

    def feed(self, samples: np.ndarray) -> list[Mt8870Event]:
        """Consume samples; return any events that closed."""
        self._buf = np.concatenate([self._buf, np.asarray(samples, dtype=np.float64)])
        events = []
        while len(self._buf) >= self.hop:
            sym = _classify_window(self._buf, self.rate, 0, self.hop)
            self._buf = self._buf[self.hop:]
            events.extend(self._step(sym))
            self._hops_consumed += 1
        return events

    def flush(self) -> list[Mt8870Event]:
        """Close out any event still open at end of input."""
        events = []
        if self._active is not None:
            events.append(self._close(self._hops_consumed - self._gap_count))
        self._candidate = None
        self._cand_count = 0
        return events

    def _step(self, sym: str | None) -> list[Mt8870Event]:
        events = []
        hop_idx = self._hops_consumed
        if sym is not None and sym == self._candidate:
            self._cand_count += 1
        elif sym is not None:
            self._candidate = sym
            self._cand_count = 1
        else:
            self._candidate = None
            self._cand_count = 0

        if self._active is None:
            if self._cand_count >= MIN_TONE_HOPS:
                self._active = self._candidate
                self._active_start = hop_idx - (MIN_TONE_HOPS - 1)
                self._gap_count = 0
        else:
            if sym == self._active:
                self._gap_count = 0
            else:
                self._gap_count += 1
                if self._gap_count >= MIN_GAP_HOPS:
                    events.append(self._close(hop_idx - self._gap_count + 1))
                    # a different tone may already be building up
                    if self._cand_count >= MIN_TONE_HOPS:
                        self._active = self._candidate
                        self._active_start = hop_idx - (MIN_TONE_HOPS - 1)
                        self._gap_count = 0
        return events

    def _close(self, end_hop: int) -> Mt8870Event:
        hop_s = self.hop / self.rate
        ev = Mt8870Event(code=mt8870_code(self._active),
                         t_start=self._active_start * hop_s,
                         t_end=end_hop * hop_s)
        self._active = None
        self._gap_count = 0
        return ev


def dtmf_decode(buf: AudioBuffer) -> list[Mt8870Event]:
    """Batch decode: all MT8870 events in the buffer."""
    dec = StreamingDtmfDecoder(rate=buf.rate)
    events = dec.feed(buf.samples)
    events.extend(dec.flush())
    return events


def checksum_digit(digits: str) -> str:
    return str(sum(int(d) for d in digits) % 10)


def command_encode(opcode: str, args: str = "") -> str:
    """Build the '*'...'#' symbol string with its checksum digit."""
    if opcode not in OPCODES:
        raise DtmfError(f"unknown opcode {opcode!r}")
    name, lo, hi = OPCODES[opcode]
    if not args.isdigit() and args != "":
        raise DtmfError(f"arguments must be digits, got {args!r}")
    if not lo <= len(args) <= min(hi, MAX_ARG_DIGITS):
        raise DtmfError(f"{name} takes {lo}..{hi} argument digits, got {len(args)}")
    return "*" + opcode + args + checksum_digit(opcode + args) + "#"


def command_parse(events: list[Mt8870Event]) -> tuple[UplinkCommand | None, str | None]:
    """Extract one command from an event sequence.

    Returns (command, None) on success or (None, reason). Spans abort on
    inter-symbol gaps above SPAN_GAP_LIMIT_S.
    """
    symbols = []
    last_end = None
    started = False
    for ev in events:
        sym = ev.symbol
        if started and last_end is not None and ev.t_start - last_end > SPAN_GAP_LIMIT_S:
            return None, "inter-symbol gap exceeded, span aborted"
        last_end = ev.t_end
        if sym == "*":
            symbols = ["*"]
            started = True
            continue
        if not started:
            continue
        symbols.append(sym)
        if sym == "#":
            return _validate_span("".join(symbols))
    return None, "no complete '*'..'#' span found"


def _validate_span(span: str) -> tuple[UplinkCommand | None, str | None]:
    inner = span[1:-1]
    if len(inner) < 3:
        return None, f"span {span!r} too short for opcode and checksum"
    if not inner.isdigit():
        return None, f"span {span!r} contains non-digit symbols"
    opcode, middle, check = inner[:2], inner[2:-1], inner[-1]
    if opcode not in OPCODES:
        return None, f"unknown opcode {opcode!r}"
    if checksum_digit(opcode + middle) != check:
        return None, f"checksum mismatch in {span!r}"
    name, lo, hi = OPCODES[opcode]
    if not lo <= len(middle) <= hi:
        return None, f"{name} takes {lo}..{hi} argument digits, got {len(middle)}"
    return UplinkCommand(opcode=opcode, args=middle), None


class CommandAssembler:
    """Feed MT8870 events as they arrive; yields parsed commands/diagnostics."""

    def __init__(self):
        self._span: list[Mt8870Event] = []

    def push(self, event: Mt8870Event) -> tuple[UplinkCommand | None, str | None] | None:
        """Returns a parse result when a span completes or aborts, else None."""
        sym = event.symbol
        if self._span and event.t_start - self._span[-1].t_end > SPAN_GAP_LIMIT_S:
            self._span = []
            result = (None, "inter-symbol gap exceeded, span aborted")
            if sym == "*":
                self._span = [event]
            return result
        if sym == "*":
            self._span = [event]
            return None
        if not self._span:
            return None
        self._span.append(event)
        if sym == "#":
            span = self._span
            self._span = []
            return command_parse(span)
        return None
