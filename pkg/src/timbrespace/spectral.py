"""STFT front-end and mel filterbank shared by the reference encoder and the EQ."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer

__all__ = [
    "Spectrogram",
    "MelFilterbank",
    "ColaViolationError",
    "DEFAULT_N_FFT",
    "DEFAULT_HOP",
    "DEFAULT_N_MELS",
    "DEFAULT_F_MIN",
    "DEFAULT_F_MAX",
    "hz_to_mel",
    "mel_to_hz",
    "stft",
    "istft",
    "mel_filterbank",
]

# Front-end constants at 16 kHz; conventional values.
DEFAULT_N_FFT = 1024
DEFAULT_HOP = 256
DEFAULT_N_MELS = 64
DEFAULT_F_MIN = 0.0
DEFAULT_F_MAX = 8000.0

_NOLA_EPS = 1e-10


class ColaViolationError(ValueError):
    """The hop/window combination cannot be inverted by overlap-add."""


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude/phase STFT frames: both arrays are [frames, bins]."""

    magnitudes: np.ndarray
    phases: np.ndarray
    n_fft: int
    hop: int
    sample_rate: int

    def __post_init__(self):
        mag = np.asarray(self.magnitudes, dtype=np.float64)
        ph = np.asarray(self.phases, dtype=np.float64)
        bins = self.n_fft // 2 + 1
        if mag.ndim != 2 or mag.shape[1] != bins:
            raise ValueError(f"magnitudes must be [frames, {bins}], got {mag.shape}")
        if ph.shape != mag.shape:
            raise ValueError("phases must match magnitudes in shape")
        if mag.size and mag.min() < 0:
            raise ValueError("magnitudes must be nonnegative")
        if not (0 < self.hop <= self.n_fft):
            raise ValueError("hop must satisfy 0 < hop <= n_fft")
        object.__setattr__(self, "magnitudes", mag)
        object.__setattr__(self, "phases", ph)

    @property
    def frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def bins(self) -> int:
        return self.magnitudes.shape[1]


def _hann(n_fft: int) -> np.ndarray:
    # Periodic Hann; pairs with hop = n_fft / 2**k for overlap-add.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)


def _check_nola(window: np.ndarray, hop: int) -> None:
    n_fft = len(window)
    if not (0 < hop <= n_fft):
        raise ColaViolationError("hop must satisfy 0 < hop <= n_fft")
    wsq = window * window
    for offset in range(hop):
        if wsq[offset::hop].sum() < _NOLA_EPS:
            raise ColaViolationError(
                f"hop {hop} violates overlap-add invertibility for a {n_fft}-point Hann window"
            )


def stft(buf: AudioBuffer, n_fft: int = DEFAULT_N_FFT, hop: int = DEFAULT_HOP) -> Spectrogram:
    """Short-time Fourier transform with a periodic Hann analysis window."""
    if n_fft < 2 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError("n_fft must be a power of two")
    if buf.channels != 1:
        raise ValueError("stft expects a mono buffer; downmix first")
    if buf.num_samples == 0:
        raise ValueError("stft input is empty")
    window = _hann(n_fft)
    _check_nola(window, hop)
    n = buf.num_samples
    n_frames = 1 + max(0, -(-(n - n_fft) // hop))
    padded = np.zeros((n_frames - 1) * hop + n_fft)
    padded[:n] = buf.samples
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop]
    spectrum = np.fft.rfft(frames * window, axis=-1)
    return Spectrogram(np.abs(spectrum), np.angle(spectrum), n_fft, hop, buf.sample_rate)


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add inverse of stft.

    Exact (up to FFT round-off) wherever the window-power sum is nonzero;
    the first and last n_fft samples taper and should be treated as edges.
    """
    window = _hann(spec.n_fft)
    _check_nola(window, spec.hop)
    frames_time = np.fft.irfft(spec.magnitudes * np.exp(1j * spec.phases), n=spec.n_fft, axis=-1)
    length = (spec.frames - 1) * spec.hop + spec.n_fft
    acc = np.zeros(length)
    wsum = np.zeros(length)
    wsq = window * window
    for t in range(spec.frames):
        start = t * spec.hop
        acc[start : start + spec.n_fft] += window * frames_time[t]
        wsum[start : start + spec.n_fft] += wsq
    out = np.where(wsum > _NOLA_EPS, acc / np.maximum(wsum, _NOLA_EPS), 0.0)
    return AudioBuffer(out, spec.sample_rate)


def hz_to_mel(freq_hz) -> np.ndarray:
    """HTK mel scale: 2595 * log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mels) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mels, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters sampled at the FFT bin frequencies."""

    weights: np.ndarray  # [n_mels, bins]
    center_frequencies_hz: np.ndarray
    n_fft: int
    sample_rate: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        c = np.asarray(self.center_frequencies_hz, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != c.shape[0]:
            raise ValueError("weights must be [n_mels, bins] with one center per row")
        if w.size and w.min() < 0:
            raise ValueError("filter weights must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "center_frequencies_hz", c)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


def mel_filterbank(
    n_mels: int = DEFAULT_N_MELS,
    n_fft: int = DEFAULT_N_FFT,
    sample_rate: int = 16000,
    f_min: float = DEFAULT_F_MIN,
    f_max: float | None = DEFAULT_F_MAX,
) -> MelFilterbank:
    """Peak-normalized triangular filters with centers equally spaced in mel."""
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    nyquist = sample_rate / 2.0
    if f_max is None:
        f_max = nyquist
    if not (0.0 <= f_min < f_max <= nyquist):
        raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
    bins = n_fft // 2 + 1
    bin_freqs = np.linspace(0.0, nyquist, bins)
    corner_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    weights = np.zeros((n_mels, bins))
    for i in range(n_mels):
        lo, center, hi = corner_hz[i], corner_hz[i + 1], corner_hz[i + 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            rising = (bin_freqs - lo) / (center - lo)
            falling = (hi - bin_freqs) / (hi - center)
        tri = np.clip(np.nan_to_num(np.minimum(rising, falling), nan=0.0), 0.0, None)
        peak = tri.max()
        if peak == 0.0:
            raise ValueError(
                f"mel filter {i} has no support at n_fft={n_fft}; reduce n_mels or widen the band"
            )
        weights[i] = tri / peak
    return MelFilterbank(weights, corner_hz[1:-1], n_fft, sample_rate)
