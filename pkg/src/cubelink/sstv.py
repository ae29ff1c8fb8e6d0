"""Robot36 SSTV codec: 320x240 color rasters to audio and back.

Mode layout per line (150 ms): 9 ms sync at 1200 Hz, 3 ms porch at 1500 Hz,
88 ms luminance scan, 4.5 ms separator (1500 Hz on even lines, 2300 Hz on
odd), 1.5 ms porch at 1900 Hz, 44 ms chroma scan. Even lines carry R-Y and
odd lines B-Y, each averaged over the line pair. Pixel values map to
frequency as f(v) = 1500 + 800*v/255.

The decoder mixes the signal to complex baseband at 1900 Hz, low-passes,
and reads instantaneous frequency from the phase difference; pixels are the
median over their sample window. Sync pulses are found by counting
below-1350 Hz samples near each line's expected position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve, firwin

from .audio import RATE, AudioBuffer, Oscillator, tone_powers

WIDTH = 320
HEIGHT = 240

F_BLACK = 1500.0
F_WHITE = 2300.0
F_SYNC = 1200.0
F_PORCH = 1500.0
F_SEP_EVEN = 1500.0   # R-Y chroma follows
F_SEP_ODD = 2300.0    # B-Y chroma follows
F_PORCH2 = 1900.0
F_LEADER = 1900.0
F_VIS_BIT1 = 1100.0
F_VIS_BIT0 = 1300.0

LEADER_MS = 300.0
BREAK_MS = 10.0
VIS_BIT_MS = 30.0
VIS_CODE = 8

SYNC_MS = 9.0
PORCH_MS = 3.0
Y_SCAN_MS = 88.0
SEP_MS = 4.5
PORCH2_MS = 1.5
C_SCAN_MS = 44.0
LINE_MS = SYNC_MS + PORCH_MS + Y_SCAN_MS + SEP_MS + PORCH2_MS + C_SCAN_MS  # 150.0

HEADER_MS = LEADER_MS + BREAK_MS + LEADER_MS + 10 * VIS_BIT_MS  # 910.0

# decoder tuning (see tests for the measured accuracy these give)
_MIX_HZ = 1900.0
_LP_TAPS = 61
_LP_CUTOFF = 800.0
_SCAN_GUARD = 20          # samples held back from scan edges when sampling pixels
_SYNC_SEARCH_MS = 3.0     # sync search half-window around the expected position
_SYNC_THRESH_HZ = 1350.0


class SstvDecodeError(Exception):
    """No usable Robot36 transmission in the buffer."""


@dataclass
class ImageRaster:
    """320x240 RGB image, 8 bits per channel, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (HEIGHT, WIDTH, 3):
            raise ValueError(f"raster must be {HEIGHT}x{WIDTH}x3, got {self.pixels.shape}")

    def __eq__(self, other):
        return isinstance(other, ImageRaster) and np.array_equal(self.pixels, other.pixels)


def ppm_write(raster: ImageRaster, path) -> None:
    """Binary portable pixmap, P6 maxval 255."""
    with open(path, "wb") as f:
        f.write(f"P6\n{WIDTH} {HEIGHT}\n255\n".encode())
        f.write(raster.pixels.tobytes())


def ppm_read(path) -> ImageRaster:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a P6 pixmap")
        fields = []
        while len(fields) < 3:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: truncated PPM header")
            if line.startswith(b"#"):
                continue
            fields.extend(line.split())
        w, h, maxval = (int(v) for v in fields[:3])
        if (w, h, maxval) != (WIDTH, HEIGHT, 255):
            raise ValueError(f"{path}: expected {WIDTH}x{HEIGHT} maxval 255, got {w}x{h}/{maxval}")
        data = f.read(w * h * 3)
    return ImageRaster(np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy())


def rgb_to_ycrcb(rgb: np.ndarray) -> np.ndarray:
    """BT.601 full-range RGB -> YCrCb, channels clamped to [0, 255]."""
    arr = np.asarray(rgb, dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cr = (r - y) * 0.713 + 128.0
    cb = (b - y) * 0.564 + 128.0
    return np.clip(np.stack([y, cr, cb], axis=-1), 0.0, 255.0)


def ycrcb_to_rgb(ycrcb: np.ndarray) -> np.ndarray:
    """Inverse of rgb_to_ycrcb, clamped to [0, 255]."""
    arr = np.asarray(ycrcb, dtype=np.float64)
    y, cr, cb = arr[..., 0], arr[..., 1], arr[..., 2]
    r = y + (cr - 128.0) / 0.713
    b = y + (cb - 128.0) / 0.564
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 255.0)


def value_to_freq(v) -> np.ndarray:
    return F_BLACK + (F_WHITE - F_BLACK) * np.asarray(v, dtype=np.float64) / 255.0


def freq_to_value(f) -> np.ndarray:
    v = (np.asarray(f, dtype=np.float64) - F_BLACK) * 255.0 / (F_WHITE - F_BLACK)
    return np.clip(v, 0.0, 255.0)


def _vis_bits(code: int) -> list[int]:
    bits = [(code >> k) & 1 for k in range(7)]   # LSB first
    bits.append(sum(bits) % 2)                    # even parity
    return bits


class _Schedule:
    """Frequency schedule with cumulative-rounded segment boundaries."""

    def __init__(self, rate: int):
        self.rate = rate
        self.t_ms = 0.0
        self.emitted = 0
        self.chunks: list[np.ndarray] = []

    def tone(self, freq: float, dur_ms: float) -> None:
        self.t_ms += dur_ms
        target = int(round(self.t_ms * self.rate / 1000.0))
        self.chunks.append(np.full(target - self.emitted, freq))
        self.emitted = target

    def scan(self, values: np.ndarray, dur_ms: float) -> None:
        """Pixel values spread across dur_ms, one tone per pixel."""
        self.t_ms += dur_ms
        target = int(round(self.t_ms * self.rate / 1000.0))
        n = target - self.emitted
        bounds = np.round(np.arange(len(values) + 1) * n / len(values)).astype(int)
        self.chunks.append(np.repeat(value_to_freq(values), np.diff(bounds)))
        self.emitted = target

    def frequencies(self) -> np.ndarray:
        return np.concatenate(self.chunks)


def sstv_encode(raster: ImageRaster, rate: int = RATE) -> AudioBuffer:
    """Header + VIS + 240 scan lines, phase-continuous."""
    ycrcb = rgb_to_ycrcb(raster.pixels)
    y = ycrcb[..., 0]
    cr = ycrcb[..., 1]
    cb = ycrcb[..., 2]

    sched = _Schedule(rate)
    sched.tone(F_LEADER, LEADER_MS)
    sched.tone(F_SYNC, BREAK_MS)
    sched.tone(F_LEADER, LEADER_MS)
    sched.tone(F_SYNC, VIS_BIT_MS)                      # VIS start
    for bit in _vis_bits(VIS_CODE):
        sched.tone(F_VIS_BIT1 if bit else F_VIS_BIT0, VIS_BIT_MS)
    sched.tone(F_SYNC, VIS_BIT_MS)                      # VIS stop

    for k in range(HEIGHT):
        even = k % 2 == 0
        pair = slice(k - (k % 2), k - (k % 2) + 2)
        chroma = (cr if even else cb)[pair].mean(axis=0)  # 4:2:0 vertical averaging
        sched.tone(F_SYNC, SYNC_MS)
        sched.tone(F_PORCH, PORCH_MS)
        sched.scan(y[k], Y_SCAN_MS)
        sched.tone(F_SEP_EVEN if even else F_SEP_ODD, SEP_MS)
        sched.tone(F_PORCH2, PORCH2_MS)
        sched.scan(chroma, C_SCAN_MS)

    osc = Oscillator(rate=rate)
    return AudioBuffer(osc.sweep(sched.frequencies()), rate)


@dataclass
class DecodeReport:
    vis_ok: bool = False
    lines_total: int = HEIGHT
    lines_synced: int = 0
    lines_filled: int = 0
    mean_sync_error_ms: float = 0.0
    sync_errors_ms: list = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# VIS header search

_HOP_MS = 5.0
_WIN_MS = 10.0
_CLASS_FREQS = (F_VIS_BIT1, F_SYNC, F_VIS_BIT0, F_BLACK, F_LEADER, F_WHITE)


def _classify_hops(samples: np.ndarray, rate: int):
    """Argmax tone class per hop, or -1 where no tone dominates."""
    hop = int(round(_HOP_MS / 1000.0 * rate))
    win = int(round(_WIN_MS / 1000.0 * rate))
    n_hops = (len(samples) - win) // hop + 1
    if n_hops <= 0:
        return np.zeros(0, dtype=int), hop, win
    kern = np.exp(-2j * np.pi * np.outer(_CLASS_FREQS, np.arange(win)) / rate)
    starts = np.arange(n_hops) * hop
    windows = samples[starts[:, None] + np.arange(win)[None, :]]
    spec = windows @ kern.T
    powers = (spec.real ** 2 + spec.imag ** 2) / (win * win)
    mean_sq = np.mean(windows ** 2, axis=1)
    cls = np.argmax(powers, axis=1)
    best = powers[np.arange(n_hops), cls]
    cls[best < 0.15 * np.maximum(mean_sq, 1e-12)] = -1   # silence / noise
    return cls, hop, win


def _find_vis(samples: np.ndarray, rate: int) -> tuple[int, bool]:
    """Locate the VIS start bit; returns (sample index of scan start, vis_ok).

    Raises SstvDecodeError when no leader + VIS structure is present.
    """
    cls, hop, win = _classify_hops(samples, rate)
    leader_cls = _CLASS_FREQS.index(F_LEADER)
    sync_cls = _CLASS_FREQS.index(F_SYNC)
    min_leader = int(200.0 / _HOP_MS)     # 200 ms of the 300 ms leader

    run = 0       # leader hops seen, surviving short glitches
    glitch = 0    # consecutive non-leader hops absorbed into the run
    i = 0
    while i < len(cls):
        c = cls[i]
        if c == leader_cls:
            run += 1
            glitch = 0
            i += 1
            continue
        if run >= min_leader and c == sync_cls:
            # the VIS start bit is 30 ms of 1200 Hz (about 6 hops); the
            # 10 ms break between leaders is too short to qualify
            ahead = cls[i:i + 7]
            if np.count_nonzero(ahead == sync_cls) >= 4:
                scan_start, ok = _check_vis(samples, rate, i * hop)
                if ok:
                    return scan_start, True
                run = 0
                glitch = 0
                i += 1
                continue
        # window straddles and noisy hops must not reset a real leader run
        glitch += 1
        if glitch > 3:
            run = 0
            glitch = 0
        i += 1
    raise SstvDecodeError("no Robot36 VIS header found")


def _check_vis(samples: np.ndarray, rate: int, vis_start: int) -> tuple[int, bool]:
    """Read VIS bits at their centers; verify parity and mode code."""
    bit = VIS_BIT_MS / 1000.0 * rate
    win = int(round(_WIN_MS / 1000.0 * rate))
    bits = []
    for k in range(8):                    # 7 data bits + parity
        center = vis_start + (1 + k + 0.5) * bit
        start = int(round(center - win / 2))
        if start < 0 or start + win > len(samples):
            return 0, False
        p1, p0 = tone_powers(samples, rate, (F_VIS_BIT1, F_VIS_BIT0), start, win)
        bits.append(1 if p1 >= p0 else 0)
    data, parity = bits[:7], bits[7]
    if sum(data) % 2 != parity:
        return 0, False
    code = sum(b << k for k, b in enumerate(data))
    if code != VIS_CODE:
        return 0, False
    scan_start = int(round(vis_start + 10 * bit))
    return scan_start, True


# ---------------------------------------------------------------------------
# scan decoding

def _instantaneous_freq(samples: np.ndarray, rate: int) -> np.ndarray:
    """Per-sample frequency via complex mix, low-pass, phase difference."""
    n = np.arange(len(samples))
    z = samples * np.exp(-2j * np.pi * _MIX_HZ * n / rate)
    lp = firwin(_LP_TAPS, _LP_CUTOFF, fs=rate, window="blackman")
    z = fftconvolve(z, lp, mode="same")
    dphi = np.angle(z[1:] * np.conj(z[:-1]))
    f = _MIX_HZ + dphi * rate / (2.0 * np.pi)
    return np.concatenate([f, f[-1:]])


def _scan_values(instf: np.ndarray, start: float, dur_ms: float, n_px: int,
                 rate: int, guard: int) -> np.ndarray:
    """Median instantaneous frequency per pixel window, mapped to values.

    Windows near the scan edges slide inward by up to `guard` samples to
    escape filter ringing from the neighboring segment transitions.
    """
    n = dur_ms / 1000.0 * rate
    bounds = start + np.round(np.arange(n_px + 1) * n / n_px).astype(int)
    lo = bounds[0] + guard
    hi = bounds[-1] - guard
    widths = np.diff(bounds)
    w = int(widths.min())
    starts = np.clip(bounds[:-1], lo, max(lo, hi - w))
    idx = np.clip(starts[:, None] + np.arange(w)[None, :], 0, len(instf) - 1)
    return freq_to_value(np.median(instf[idx], axis=1))


def _locate_sync(instf: np.ndarray, expected: int, rate: int,
                 search_ms: float = _SYNC_SEARCH_MS) -> tuple[int, bool]:
    """Best sync-pulse start near `expected`; (position, found).

    Scores the trailing edge (9 ms below 1350 Hz, then 2 ms above, i.e. the
    porch), which stays unambiguous even when the VIS stop bit runs
    straight into line 0's sync pulse.
    """
    sync_len = int(round(SYNC_MS / 1000.0 * rate))
    guard = int(round(0.002 * rate))
    search = int(round(search_ms / 1000.0 * rate))
    lo = max(0, expected - search)
    hi = min(len(instf) - sync_len - guard, expected + search)
    if hi <= lo:
        return expected, False
    low = np.concatenate([[0.0], np.cumsum(instf < _SYNC_THRESH_HZ)])
    starts = np.arange(lo, hi)
    low_counts = low[starts + sync_len] - low[starts]
    high_counts = (guard
                   - (low[starts + sync_len + guard] - low[starts + sync_len]))
    best = int(np.argmax(low_counts + high_counts))
    if low_counts[best] < 0.6 * sync_len or high_counts[best] < 0.6 * guard:
        return expected, False
    return lo + best, True


def sstv_decode(buf: AudioBuffer, on_line=None) -> tuple[ImageRaster, DecodeReport]:
    """Decode one Robot36 transmission.

    on_line, when given, is called as on_line(row_index, rgb_row_uint8) for
    every finalized image row, in order; rows of a pair finalize together
    once the odd line's chroma is in.

    Raises SstvDecodeError when no VIS header with mode code 8 is found.
    """
    samples = buf.samples
    rate = buf.rate
    scan_start, vis_ok = _find_vis(samples, rate)
    report = DecodeReport(vis_ok=vis_ok)

    instf = _instantaneous_freq(samples, rate)
    line_len = LINE_MS / 1000.0 * rate
    sync_off = int(round((SYNC_MS + PORCH_MS) / 1000.0 * rate))
    sep_off = int(round((SYNC_MS + PORCH_MS + Y_SCAN_MS + SEP_MS + PORCH2_MS) / 1000.0 * rate))

    # the VIS search works on a 5 ms hop grid; re-anchor the line grid on
    # the first sync pulse so the narrow per-line search stays centered
    pos0, found0 = _locate_sync(instf, scan_start, rate, search_ms=12.0)
    if found0:
        scan_start = pos0

    y_rows = np.zeros((HEIGHT, WIDTH))
    c_rows = np.zeros((HEIGHT, WIDTH))
    last_good = None
    for k in range(HEIGHT):
        expected = scan_start + int(round(k * line_len))
        pos, found = _locate_sync(instf, expected, rate)
        if found:
            report.lines_synced += 1
            report.sync_errors_ms.append(abs(pos - expected) / rate * 1000.0)
        else:
            pos = expected
        usable = found and pos + int(round(line_len)) <= len(instf)
        if usable or last_good is None:
            # best-effort decode at the expected position until the first
            # synced line establishes a fill source
            y_rows[k] = _scan_values(instf, pos + sync_off, Y_SCAN_MS, WIDTH, rate, _SCAN_GUARD)
            c_rows[k] = _scan_values(instf, pos + sep_off, C_SCAN_MS, WIDTH, rate, _SCAN_GUARD)
            if usable:
                last_good = k
        else:
            y_rows[k] = y_rows[last_good]
            c_rows[k] = c_rows[last_good]
            report.lines_filled += 1

    if report.sync_errors_ms:
        report.mean_sync_error_ms = float(np.mean(report.sync_errors_ms))

    pixels = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
    for k in range(0, HEIGHT, 2):
        cr, cb = c_rows[k], c_rows[k + 1]
        for row in (k, k + 1):
            ycrcb = np.stack([y_rows[row], cr, cb], axis=-1)
            pixels[row] = np.round(ycrcb_to_rgb(ycrcb)).astype(np.uint8)
        if on_line is not None:
            on_line(k, pixels[k])
            on_line(k + 1, pixels[k + 1])
    return ImageRaster(pixels), report


# ---------------------------------------------------------------------------
# reference test patterns

def grayscale_gradient() -> ImageRaster:
    """Horizontal black-to-white ramp."""
    ramp = np.tile(np.round(np.linspace(0, 255, WIDTH)).astype(np.uint8), (HEIGHT, 1))
    return ImageRaster(np.stack([ramp] * 3, axis=-1))


BARS_75 = ((191, 191, 191), (191, 191, 0), (0, 191, 191), (0, 191, 0),
           (191, 0, 191), (191, 0, 0), (0, 0, 191))
BARS_100 = ((255, 255, 255), (255, 255, 0), (0, 255, 255), (0, 255, 0),
            (255, 0, 255), (255, 0, 0), (0, 0, 255), (16, 16, 16))


def color_bars(colors=BARS_75) -> ImageRaster:
    """Vertical bars; defaults to the standard 75%-amplitude set."""
    img = np.zeros((HEIGHT, WIDTH, 3), dtype=np.uint8)
    edges = np.linspace(0, WIDTH, len(colors) + 1).astype(int)
    for i, color in enumerate(colors):
        img[:, edges[i]:edges[i + 1]] = color
    return ImageRaster(img)


def psnr(a: ImageRaster, b: ImageRaster) -> float:
    """Peak signal-to-noise ratio in dB between two rasters."""
    mse = np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0 ** 2 / mse))
