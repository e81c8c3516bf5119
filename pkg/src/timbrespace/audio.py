"""Audio buffers, WAV I/O, resampling, and the note-preparation transforms.

The preparation chain mirrors how isolated instrument notes are conditioned
before embedding: resample to a common rate, randomly downmix stereo to mono,
pitch-shift extra training copies, and peak-normalize everything.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import upfirdn

__all__ = [
    "AudioBuffer",
    "WavFormatError",
    "MalformedWavError",
    "UnsupportedWavError",
    "load_wav",
    "save_wav",
    "resample",
    "downmix_mono",
    "pitch_shift",
    "peak_normalize",
    "AUGMENT_RULES",
    "augmentation_offsets",
]


class WavFormatError(ValueError):
    """Base class for WAV parsing/encoding failures."""


class MalformedWavError(WavFormatError):
    """The file is not a structurally valid RIFF/WAVE container."""


class UnsupportedWavError(WavFormatError):
    """Valid container, but an encoding outside the supported subset."""


@dataclass(frozen=True)
class AudioBuffer:
    """Float PCM audio: shape (n,) for mono or (2, n) for stereo."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim not in (1, 2) or (arr.ndim == 2 and arr.shape[0] != 2):
            raise ValueError(f"samples must have shape (n,) or (2, n), got {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("samples contain non-finite values")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else 2

    @property
    def num_samples(self) -> int:
        return self.samples.shape[-1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


# ---------------------------------------------------------------------------
# WAV files (RIFF, PCM 16-bit int or IEEE 32-bit float, 1-2 channels)
# ---------------------------------------------------------------------------

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


def load_wav(path) -> AudioBuffer:
    """Read a PCM WAV file into an AudioBuffer."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if body_start + chunk_size > len(data):
            raise MalformedWavError(f"{path}: chunk {chunk_id!r} exceeds file size")
        body = data[body_start : body_start + chunk_size]
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedWavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos = body_start + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise MalformedWavError(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: {channels} channels not supported")
    if audio_format == _FMT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)], dtype="<i2")
        samples = raw.astype(np.float64) / 32767.0
    elif audio_format == _FMT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedWavError(
            f"{path}: format {audio_format} / {bits}-bit not supported (need PCM16 or float32)"
        )
    if channels == 2:
        samples = samples.reshape(-1, 2).T
    return AudioBuffer(samples, sample_rate)


def save_wav(path, buf: AudioBuffer, encoding: str = "float32") -> None:
    """Write an AudioBuffer as 16-bit PCM or 32-bit float WAV."""
    if encoding not in ("int16", "float32"):
        raise ValueError(f"unsupported encoding {encoding!r}")
    channels = buf.channels
    interleaved = buf.samples if channels == 1 else buf.samples.T.reshape(-1)
    if encoding == "int16":
        fmt_code, bits = _FMT_PCM, 16
        quantized = np.clip(np.round(interleaved * 32767.0), -32768, 32767)
        body = quantized.astype("<i2").tobytes()
    else:
        fmt_code, bits = _FMT_IEEE_FLOAT, 32
        body = interleaved.astype("<f4").tobytes()
    block_align = channels * bits // 8
    chunks = b"WAVE"
    chunks += b"fmt " + struct.pack(
        "<IHHIIHH", 16, fmt_code, channels, buf.sample_rate,
        buf.sample_rate * block_align, block_align, bits,
    )
    chunks += b"data" + struct.pack("<I", len(body)) + body
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(chunks)) + chunks)


# ---------------------------------------------------------------------------
# Resampling (polyphase windowed-sinc)
# ---------------------------------------------------------------------------

# Zero crossings per side of the sinc prototype; 320 keeps the transition
# band inside [0.9, 1.0] x band edge so stopband rejection holds at the edge.
_SINC_ZEROS = 320
_KAISER_BETA = 12.0
_FILTER_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _design_lowpass(up: int, down: int) -> np.ndarray:
    key = (up, down)
    cached = _FILTER_CACHE.get(key)
    if cached is not None:
        return cached
    max_rate = max(up, down)
    # half must be a multiple of down so the group delay lands on an output sample
    half = int(math.ceil(_SINC_ZEROS * max_rate / down)) * down
    n = np.arange(-half, half + 1)
    cutoff = 0.95 / max_rate  # fraction of the upsampled Nyquist
    taps = up * cutoff * np.sinc(cutoff * n) * np.kaiser(2 * half + 1, _KAISER_BETA)
    _FILTER_CACHE[key] = taps
    return taps


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited resampling to target_rate; duration preserved within one sample."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    source_rate = buf.sample_rate
    if target_rate == source_rate:
        return AudioBuffer(buf.samples.copy(), source_rate)
    n = buf.num_samples
    if n == 0:
        empty = np.zeros(buf.samples.shape[:-1] + (0,))
        return AudioBuffer(empty, target_rate)
    g = math.gcd(source_rate, int(target_rate))
    up, down = int(target_rate) // g, source_rate // g
    taps = _design_lowpass(up, down)
    half = (len(taps) - 1) // 2
    out_len = -(-n * up // down)  # ceil
    filtered = upfirdn(taps, buf.samples, up=up, down=down, axis=-1)
    skip = half // down
    out = filtered[..., skip : skip + out_len]
    if out.shape[-1] < out_len:
        pad = [(0, 0)] * (out.ndim - 1) + [(0, out_len - out.shape[-1])]
        out = np.pad(out, pad)
    return AudioBuffer(out, target_rate)


def downmix_mono(buf: AudioBuffer, weight_left: float | None = None, rng: np.random.Generator | None = None) -> AudioBuffer:
    """Mix stereo to mono as w*L + (1-w)*R; mono input passes through unchanged.

    When weight_left is None, w is drawn uniform[0, 1] from rng (seed 0 default).
    """
    if buf.channels == 1:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    if weight_left is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        w = float(rng.uniform(0.0, 1.0))
    else:
        w = float(weight_left)
        if not 0.0 <= w <= 1.0:
            raise ValueError("weight_left must lie in [0, 1]")
    mono = w * buf.samples[0] + (1.0 - w) * buf.samples[1]
    return AudioBuffer(mono, buf.sample_rate)


def pitch_shift(buf: AudioBuffer, semitones: float) -> AudioBuffer:
    """Shift pitch by resampling and replaying at the original rate.

    Duration scales by 2**(-semitones/12); acceptable for isolated notes and
    free of phase-vocoder artifacts.
    """
    if abs(semitones) > 24:
        raise ValueError("pitch shift limited to +/-24 semitones")
    if semitones == 0:
        return AudioBuffer(buf.samples.copy(), buf.sample_rate)
    ratio = 2.0 ** (semitones / 12.0)
    inner_rate = int(round(buf.sample_rate / ratio))
    shifted = resample(buf, inner_rate)
    return AudioBuffer(shifted.samples, buf.sample_rate)


def peak_normalize(buf: AudioBuffer) -> AudioBuffer:
    """Scale so the largest absolute sample is exactly 1."""
    if buf.num_samples == 0:
        raise ValueError("cannot peak-normalize an empty buffer")
    peak = float(np.max(np.abs(buf.samples)))
    if peak == 0.0:
        raise ValueError("cannot peak-normalize an all-zero buffer")
    return AudioBuffer(buf.samples / peak, buf.sample_rate)


# Extra pitch-shifted copies per note style: (count, max |offset| in semitones).
AUGMENT_RULES = {"nsynth": (1, 0.5), "alv": (2, 3.0)}


def augmentation_offsets(style: str, rng: np.random.Generator) -> list[float]:
    """Draw the pitch offsets (in semitones) for one note's augmented copies."""
    if style not in AUGMENT_RULES:
        raise ValueError(f"unknown augmentation style {style!r}; expected one of {sorted(AUGMENT_RULES)}")
    count, span = AUGMENT_RULES[style]
    return [float(rng.uniform(-span, span)) for _ in range(count)]
