"""Minimal WAV reading for the audio export path (PCM16 / float32, 1-2 ch)."""

from __future__ import annotations

import struct

import numpy as np


class WavReadError(ValueError):
    pass


def read_wav_mono(path) -> tuple[np.ndarray, int]:
    """Return (mono float32 samples, sample_rate); stereo is mean-downmixed."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavReadError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavReadError(f"{path}: truncated chunk {chunk_id!r}")
        if chunk_id == b"fmt " and size >= 16:
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise WavReadError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if channels not in (1, 2):
        raise WavReadError(f"{path}: {channels} channels not supported")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)], dtype="<i2")
        samples = samples.astype(np.float32) / 32767.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)], dtype="<f4")
        samples = samples.astype(np.float32)
    else:
        raise WavReadError(f"{path}: format {audio_format}/{bits}-bit not supported")
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return samples, sample_rate
