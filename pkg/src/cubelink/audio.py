"""Shared audio primitives: tone synthesis, tone detection, WAV I/O, channel noise.

Everything downstream (AFSK, SSTV, DTMF) works on mono float buffers at the
canonical 48 kHz rate. Samples are normalized reals in [-1, 1]; 16-bit PCM
exists only at the WAV file boundary. Noise is generated with numpy's PCG64
so runs are reproducible across platforms for a given seed.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

RATE = 48000            # canonical sample rate, Hz
DEFAULT_AMPLITUDE = 0.8  # synthesis level, leaves headroom against clipping

TWO_PI = 2.0 * np.pi


class AudioError(Exception):
    """Raised for unusable audio input (bad file format, bad parameters)."""


@dataclass
class AudioBuffer:
    """Mono sample sequence plus its sample rate."""

    samples: np.ndarray
    rate: int = RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.rate <= 0:
            raise AudioError(f"sample rate must be positive, got {self.rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.samples) / self.rate

    def clipped(self) -> "AudioBuffer":
        return AudioBuffer(np.clip(self.samples, -1.0, 1.0), self.rate)


def silence(duration: float, rate: int = RATE) -> AudioBuffer:
    return AudioBuffer(np.zeros(int(round(duration * rate))), rate)


def concat(buffers) -> AudioBuffer:
    bufs = list(buffers)
    if not bufs:
        return AudioBuffer(np.zeros(0), RATE)
    rate = bufs[0].rate
    if any(b.rate != rate for b in bufs):
        raise AudioError("cannot concatenate buffers with different rates")
    return AudioBuffer(np.concatenate([b.samples for b in bufs]), rate)


@dataclass
class Oscillator:
    """Phase-continuous sine source.

    The phase carries across append calls, so back-to-back segments at
    different frequencies never produce a step in the waveform.
    """

    rate: int = RATE
    amplitude: float = DEFAULT_AMPLITUDE
    phase: float = field(default=0.0)

    def _advance(self, freqs: np.ndarray) -> np.ndarray:
        if len(freqs) == 0:
            return np.zeros(0)
        # sample n is sin(phase before n); phase advances by 2*pi*f/rate per sample
        incr = TWO_PI * freqs / self.rate
        phases = self.phase + np.concatenate([[0.0], np.cumsum(incr)[:-1]])
        self.phase = float((self.phase + incr.sum()) % TWO_PI)
        return self.amplitude * np.sin(phases)

    def tone(self, freq: float, n_samples: int) -> np.ndarray:
        """n_samples of a sine at freq, starting at the current phase."""
        if not 0 < freq < self.rate / 2:
            raise AudioError(f"frequency {freq} Hz outside (0, Nyquist) at rate {self.rate}")
        if n_samples < 0:
            raise AudioError("sample count must be nonnegative")
        return self._advance(np.full(n_samples, float(freq)))

    def sweep(self, freqs: np.ndarray) -> np.ndarray:
        """One sample per entry of freqs, phase-continuous throughout."""
        freqs = np.asarray(freqs, dtype=np.float64)
        if len(freqs) and (freqs.min() <= 0 or freqs.max() >= self.rate / 2):
            raise AudioError("sweep frequencies must lie in (0, Nyquist)")
        return self._advance(freqs)

    def append(self, buf: AudioBuffer, freq: float, duration: float) -> AudioBuffer:
        """Append round(duration*rate) samples of a sine at freq to buf."""
        if duration < 0:
            raise AudioError("duration must be nonnegative")
        if buf.rate != self.rate:
            raise AudioError("oscillator and buffer rates differ")
        seg = self.tone(freq, int(round(duration * self.rate)))
        return AudioBuffer(np.concatenate([buf.samples, seg]), buf.rate)


def goertzel_power(buf: AudioBuffer, freq: float, start: int = 0,
                   length: int | None = None) -> float:
    """Relative power at freq over the window [start, start+length).

    Classic Goertzel recurrence; equals the squared magnitude of the naive
    single-bin Fourier sum divided by length**2. A unit-amplitude tone at
    freq measures ~0.25.
    """
    n = len(buf.samples)
    if length is None:
        length = n - start
    if length < 8:
        raise AudioError("goertzel window must be at least 8 samples")
    if start < 0 or start + length > n:
        raise AudioError(f"window [{start}, {start + length}) outside buffer of {n}")
    omega = TWO_PI * freq / buf.rate
    coeff = 2.0 * np.cos(omega)
    s1 = s2 = 0.0
    for x in buf.samples[start:start + length]:
        s0 = x + coeff * s1 - s2
        s2 = s1
        s1 = s0
    power = s1 * s1 + s2 * s2 - coeff * s1 * s2
    return float(power) / (length * length)


def tone_powers(samples: np.ndarray, rate: int, freqs, start: int, length: int) -> np.ndarray:
    """Vectorized single-bin DFT powers for several freqs over one window.

    Same quantity as goertzel_power (normalized by length**2), computed by
    matrix product instead of the recurrence.
    """
    seg = samples[start:start + length]
    n = np.arange(length)
    kern = np.exp(-2j * np.pi * np.outer(np.asarray(freqs, float), n) / rate)
    spec = kern @ seg
    return (spec.real ** 2 + spec.imag ** 2) / (length * length)


def tone_power_track(samples: np.ndarray, rate: int, freq: float, win: int) -> np.ndarray:
    """Sliding-window power at freq for every window start 0..len-win.

    Computes the same single-bin DFT magnitude as goertzel_power via a
    cumulative sum, so a full stream costs O(n) instead of O(n*win).
    """
    n = np.arange(len(samples))
    z = samples * np.exp(-2j * np.pi * freq * n / rate)
    c = np.concatenate([[0.0 + 0.0j], np.cumsum(z)])
    d = c[win:] - c[:-win]
    return (d.real ** 2 + d.imag ** 2) / (win * win)


def awgn_apply(buf: AudioBuffer, snr_db: float, seed: int) -> AudioBuffer:
    """Add white Gaussian noise at the requested SNR, then re-clip.

    The noise vector is scaled to its own measured power, so the realized
    SNR equals snr_db exactly (before clipping). Pure function of
    (buf, snr_db, seed); the generator is PCG64.
    """
    if len(buf) == 0:
        raise AudioError("cannot add noise to an empty buffer")
    signal_power = float(np.mean(buf.samples ** 2))
    if signal_power == 0.0:
        raise AudioError("zero-power input: SNR undefined")
    noise_power = signal_power / 10.0 ** (snr_db / 10.0)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal(len(buf))
    noise *= np.sqrt(noise_power / np.mean(noise ** 2))
    return AudioBuffer(np.clip(buf.samples + noise, -1.0, 1.0), buf.rate)


def wav_write(buf: AudioBuffer, path) -> None:
    """Write canonical RIFF/WAVE: PCM, mono, 16-bit signed little-endian."""
    pcm = np.round(np.clip(buf.samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.rate)
        w.writeframes(pcm.tobytes())


def wav_read(path) -> AudioBuffer:
    """Read a PCM mono 16-bit WAV file; anything else is rejected."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise AudioError(f"{path}: compressed WAV ({w.getcomptype()}) not supported")
            channels = w.getnchannels()
            if channels != 1:
                raise AudioError(f"{path}: expected mono, got {channels} channels")
            width = w.getsampwidth()
            if width != 2:
                raise AudioError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
            rate = w.getframerate()
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise AudioError(f"{path}: not a readable PCM WAV file ({exc})") from exc
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / 32767.0, rate)


def resample_linear(buf: AudioBuffer, new_rate: int) -> AudioBuffer:
    """Linear-interpolation resampling to new_rate."""
    if new_rate <= 0:
        raise AudioError("target rate must be positive")
    if new_rate == buf.rate:
        return AudioBuffer(buf.samples.copy(), buf.rate)
    n_new = int(round(len(buf) * new_rate / buf.rate))
    positions = np.arange(n_new) * (buf.rate / new_rate)
    out = np.interp(positions, np.arange(len(buf)), buf.samples)
    return AudioBuffer(out, new_rate)
