"""Reference encoders and the precomputed-embedding store.

Two encoder towers project audio and text into one shared latent space. The
implementations here are deterministic, seed-parameterized stand-ins so the
whole pipeline (training, retrieval, EQ) runs hermetically; embeddings from
real pretrained models travel through the TCLP file format instead.

TCLP layout (little-endian):
    bytes 0-3   magic  b"TCLP"
    bytes 4-7   version u32 = 1
    bytes 8-11  dimension d u32
    bytes 12-15 record count n u32
    records     id_len u16, id (UTF-8, no NUL), d x f32 values
An optional sidecar JSON (same stem, ".json") carries informational metadata.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, Iterator, Protocol

import numpy as np

from ._binio import FormatError, Reader, encode_id, read_id
from .embedding import DEFAULT_DIM, Embedding, as_vector
from .spectral import MelFilterbank, Spectrogram, stft, DEFAULT_HOP

__all__ = [
    "StoreFormatError",
    "DifferentiableSpectrogramEncoder",
    "MelStatEncoder",
    "mel_stat_encode",
    "hashed_text_encode",
    "EmbeddingStore",
    "store_save",
    "store_load",
]

TCLP_MAGIC = b"TCLP"
TCLP_VERSION = 1


class StoreFormatError(FormatError):
    """A TCLP file violates the format contract."""


class DifferentiableSpectrogramEncoder(Protocol):
    d: int

    def encode(self, spec: Spectrogram) -> Embedding: ...

    def vjp(self, spec: Spectrogram, upstream: np.ndarray) -> np.ndarray: ...


class MelStatEncoder:
    """Deterministic differentiable audio encoder over magnitude spectrograms.

    Pipeline: mel power -> log(1 + .) -> per-band temporal mean and std ->
    fixed seeded random projection -> L2 normalize. Every stage is smooth in
    the input magnitudes, and vjp() implements the exact chain rule, which is
    what lets the EQ loop run gradient descent through it.
    """

    # Keeps the std differentiable when a band is constant over time.
    _VAR_EPS = 1e-12

    def __init__(self, filterbank: MelFilterbank, d: int = DEFAULT_DIM, projection_seed: int = 0):
        if d < 1:
            raise ValueError("embedding dimension must be positive")
        feature_dim = 2 * filterbank.n_mels
        rng = np.random.default_rng(projection_seed)
        self.projection = rng.standard_normal((d, feature_dim)) / math.sqrt(feature_dim)
        self.filterbank = filterbank
        self.d = d
        self.projection_seed = projection_seed

    def _check(self, spec: Spectrogram) -> None:
        fb = self.filterbank
        if spec.n_fft != fb.n_fft or spec.sample_rate != fb.sample_rate:
            raise ValueError(
                f"spectrogram (n_fft={spec.n_fft}, sr={spec.sample_rate}) does not match "
                f"filterbank (n_fft={fb.n_fft}, sr={fb.sample_rate})"
            )
        if spec.frames == 0:
            raise ValueError("cannot encode an empty spectrogram")

    def _forward(self, spec: Spectrogram):
        mag = spec.magnitudes
        mel_power = (mag * mag) @ self.filterbank.weights.T  # [frames, n_mels]
        log_mel = np.log1p(mel_power)
        mean = log_mel.mean(axis=0)
        centered = log_mel - mean
        std = np.sqrt((centered * centered).mean(axis=0) + self._VAR_EPS)
        features = np.concatenate([mean, std])
        projected = self.projection @ features
        norm = float(np.linalg.norm(projected))
        if norm < 1e-30:
            raise ValueError("projected feature vector has zero norm")
        return mel_power, log_mel, centered, std, projected, norm

    def encode(self, spec: Spectrogram) -> Embedding:
        self._check(spec)
        *_, projected, norm = self._forward(spec)
        return Embedding(projected / norm, normalized=True)

    def encode_audio(self, buf, hop: int = DEFAULT_HOP) -> Embedding:
        """Convenience: stft at the filterbank's n_fft, then encode."""
        return self.encode(stft(buf, self.filterbank.n_fft, hop))

    def vjp(self, spec: Spectrogram, upstream: np.ndarray) -> np.ndarray:
        """Gradient of upstream . encode(spec) w.r.t. spec.magnitudes."""
        self._check(spec)
        mel_power, _, centered, std, projected, norm = self._forward(spec)
        u = np.asarray(upstream, dtype=np.float64)
        if u.shape != (self.d,):
            raise ValueError(f"upstream gradient must have shape ({self.d},)")
        z = projected / norm
        d_projected = (u - z * float(z @ u)) / norm
        d_features = self.projection.T @ d_projected
        n_mels = self.filterbank.n_mels
        d_mean, d_std = d_features[:n_mels], d_features[n_mels:]
        frames = spec.frames
        # mean_j: 1/frames per cell; std_j: centered/(frames*std) per cell
        d_log_mel = d_mean / frames + centered * (d_std / (frames * std))
        d_mel_power = d_log_mel / (1.0 + mel_power)
        d_power = d_mel_power @ self.filterbank.weights
        return 2.0 * spec.magnitudes * d_power


def mel_stat_encode(
    spec: Spectrogram,
    filterbank: MelFilterbank,
    projection_seed: int = 0,
    d: int = DEFAULT_DIM,
) -> Embedding:
    """One-shot form of MelStatEncoder.encode."""
    return MelStatEncoder(filterbank, d=d, projection_seed=projection_seed).encode(spec)


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def hashed_text_encode(text: str, d: int = DEFAULT_DIM, seed: int = 0) -> Embedding:
    """Deterministic text embedding: signed character-trigram hashing.

    Stand-in for a real text tower in tests; shares no weights with anything,
    but gives related strings correlated vectors through shared trigrams.
    """
    if not text:
        raise ValueError("cannot encode an empty string")
    if d < 8:
        raise ValueError("hashed text embeddings need d >= 8")
    prefix = (seed & _MASK64).to_bytes(8, "little")
    grams = [text[i : i + 3] for i in range(len(text) - 2)] or [text]
    acc = np.zeros(d)
    for gram in grams:
        h = _fnv1a64(prefix + gram.encode("utf-8"))
        sign = -1.0 if (h >> 63) & 1 else 1.0
        acc[h % d] += sign
    norm = float(np.linalg.norm(acc))
    if norm < 1e-12:
        raise ValueError(f"text {text!r} hashed to the zero vector")
    return Embedding(acc / norm, normalized=True)


class EmbeddingStore:
    """Ordered id -> float32 embedding map with a single shared dimension."""

    def __init__(self, d: int):
        if d <= 0:
            raise ValueError("store dimension must be positive")
        self.d = int(d)
        self._entries: dict[str, np.ndarray] = {}

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, np.ndarray]], d: int | None = None) -> "EmbeddingStore":
        items = list(items)
        if d is None:
            if not items:
                raise ValueError("cannot infer dimension from an empty store")
            d = as_vector(items[0][1]).shape[0]
        store = cls(d)
        for record_id, values in items:
            store.add(record_id, values)
        return store

    def add(self, record_id: str, values) -> None:
        if record_id in self._entries:
            raise StoreFormatError(f"duplicate id {record_id!r}")
        vec = as_vector(values)
        if vec.shape[0] != self.d:
            raise ValueError(f"embedding for {record_id!r} has dimension {vec.shape[0]}, store wants {self.d}")
        self._entries[record_id] = vec.astype(np.float32)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, record_id: str) -> np.ndarray:
        return self._entries[record_id]

    def ids(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._entries.items())


def store_save(path, store: EmbeddingStore, metadata: dict | None = None) -> None:
    """Write a TCLP file; optional metadata goes to the sidecar JSON."""
    path = Path(path)
    blob = bytearray()
    blob += TCLP_MAGIC
    blob += struct.pack("<III", TCLP_VERSION, store.d, len(store))
    for record_id, values in store.items():
        blob += encode_id(record_id, str(path), StoreFormatError)
        blob += values.astype("<f4").tobytes()
    path.write_bytes(bytes(blob))
    if metadata is not None:
        path.with_suffix(".json").write_text(json.dumps(metadata, sort_keys=True, indent=2) + "\n")


def store_load(path) -> EmbeddingStore:
    """Read a TCLP file, validating magic, version, dimension, and records."""
    path = Path(path)
    reader = Reader(path.read_bytes(), str(path), StoreFormatError)
    magic = reader.take(4, "magic")
    if magic != TCLP_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {magic!r}")
    version = reader.u32("version")
    if version != TCLP_VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    d = reader.u32("dimension")
    if d == 0:
        raise StoreFormatError(f"{path}: dimension must be nonzero")
    count = reader.u32("record count")
    store = EmbeddingStore(d)
    for _ in range(count):
        record_id = read_id(reader)
        raw = reader.take(4 * d, f"values of {record_id!r}")
        if record_id in store:
            raise StoreFormatError(f"{path}: duplicate id {record_id!r}")
        store.add(record_id, np.frombuffer(raw, dtype="<f4"))
    reader.expect_end()
    return store
