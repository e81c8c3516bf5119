"""Audio-driven weighting of prompt-embedding matrices for an image generator.

A bank pairs keywords with two payloads: a latent-space keyword embedding
(used to weight against an audio embedding) and an opaque token-level prompt
matrix produced by an external text encoder. The conditioning output is the
weighted sum of those matrices; weights come either from raw cosine distances
(the literal formula) or from a temperature softmax over similarities.

TCPM layout (little-endian):
    magic b"TCPM", version u32 = 1, M u32, d_tau u32, count u32,
    then records: id_len u16, id (UTF-8, no NUL), M*d_tau f32 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._binio import FormatError, Reader, encode_id, read_id
from .audio import AudioBuffer
from .embedding import cosine_distance, effect_embedding, softmax_weights
from .encoders import EmbeddingStore
from .errors import UnresolvedReferenceError

__all__ = [
    "KEYWORD_PLACEHOLDER",
    "WEIGHT_MODES",
    "PromptBank",
    "ConditioningResult",
    "EffectItem",
    "PromptMatrixFormatError",
    "build_prompts",
    "keyword_weights",
    "condition",
    "effect_series",
    "prompt_matrices_save",
    "prompt_matrices_load",
    "load_prompt_bank",
]

KEYWORD_PLACEHOLDER = "<keyword>"
WEIGHT_MODES = ("literal_distance", "softmax_similarity")
TCPM_MAGIC = b"TCPM"
TCPM_VERSION = 1


class PromptMatrixFormatError(FormatError):
    """A TCPM file violates the format contract."""


@dataclass(frozen=True)
class PromptBank:
    """Keywords with their latent embeddings and prompt matrices."""

    template: str
    keywords: tuple[str, ...]
    keyword_embeddings: np.ndarray  # [count, d]
    prompt_embeddings: np.ndarray  # [count, M, d_tau]

    def __post_init__(self):
        kw = tuple(self.keywords)
        z = np.asarray(self.keyword_embeddings, dtype=np.float64)
        t = np.asarray(self.prompt_embeddings, dtype=np.float64)
        if not kw:
            raise ValueError("a prompt bank needs at least one keyword")
        if z.ndim != 2 or z.shape[0] != len(kw):
            raise ValueError("keyword_embeddings must be [count, d]")
        if t.ndim != 3 or t.shape[0] != len(kw):
            raise ValueError("prompt_embeddings must be [count, M, d_tau]")
        object.__setattr__(self, "keywords", kw)
        object.__setattr__(self, "keyword_embeddings", z)
        object.__setattr__(self, "prompt_embeddings", t)

    def __len__(self) -> int:
        return len(self.keywords)


@dataclass(frozen=True)
class ConditioningResult:
    weights: np.ndarray  # [count]
    conditioning: np.ndarray  # [M, d_tau]


@dataclass(frozen=True)
class EffectItem:
    """Per-input outcome of effect_series; exactly one of result/error is set."""

    index: int
    result: ConditioningResult | None
    error: str | None


def build_prompts(template: str, keywords: Sequence[str]) -> list[str]:
    """Substitute each keyword into the template's single placeholder."""
    occurrences = template.count(KEYWORD_PLACEHOLDER)
    if occurrences == 0:
        raise ValueError(f"template is missing the {KEYWORD_PLACEHOLDER!r} placeholder")
    if occurrences > 1:
        raise ValueError(f"template contains {KEYWORD_PLACEHOLDER!r} more than once")
    if not keywords:
        raise ValueError("keywords must be non-empty")
    return [template.replace(KEYWORD_PLACEHOLDER, k) for k in keywords]


def keyword_weights(z, bank: PromptBank, mode: str = "softmax_similarity", temperature: float = 0.1) -> np.ndarray:
    """Per-keyword weights for an audio embedding.

    literal_distance returns the raw cosine distances (the formula as
    printed); softmax_similarity, the default, softmaxes cosine similarity
    over temperature so the closest keyword dominates.
    """
    if mode not in WEIGHT_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {WEIGHT_MODES}")
    distances = np.array([cosine_distance(z, zi) for zi in bank.keyword_embeddings])
    if mode == "literal_distance":
        return distances
    return softmax_weights(1.0 - distances, temperature)


def condition(z, bank: PromptBank, mode: str = "softmax_similarity", temperature: float = 0.1) -> ConditioningResult:
    """Weighted sum of the bank's prompt matrices."""
    weights = keyword_weights(z, bank, mode, temperature)
    conditioning = np.tensordot(weights, bank.prompt_embeddings, axes=1)
    return ConditioningResult(weights, conditioning)


def effect_series(
    dry: AudioBuffer,
    wet_variants: Sequence[AudioBuffer],
    encode: Callable[[AudioBuffer], object],
    bank: PromptBank,
    mode: str = "softmax_similarity",
    temperature: float = 0.1,
) -> list[EffectItem]:
    """Condition on effect-difference embeddings, one per wet variant.

    Failures (e.g. a wet variant identical to the dry signal) are reported
    per item; the remaining variants are still processed.
    """
    z_dry = encode(dry)
    items: list[EffectItem] = []
    for index, wet in enumerate(wet_variants):
        try:
            z = effect_embedding(encode(wet), z_dry, renormalize=True)
            items.append(EffectItem(index, condition(z, bank, mode, temperature), None))
        except ValueError as exc:
            items.append(EffectItem(index, None, str(exc)))
    return items


def prompt_matrices_save(path, matrices: dict[str, np.ndarray]) -> None:
    """Write keyword -> [M, d_tau] matrices as a TCPM file."""
    path = Path(path)
    if not matrices:
        raise PromptMatrixFormatError(f"{path}: cannot save an empty matrix set")
    shapes = {np.asarray(m).shape for m in matrices.values()}
    if len(shapes) != 1 or any(len(s) != 2 for s in shapes):
        raise PromptMatrixFormatError(f"{path}: all matrices must share one [M, d_tau] shape, got {shapes}")
    (m_rows, d_tau) = shapes.pop()
    if m_rows == 0 or d_tau == 0:
        raise PromptMatrixFormatError(f"{path}: matrix dimensions must be nonzero")
    blob = bytearray()
    blob += TCPM_MAGIC
    blob += struct.pack("<IIII", TCPM_VERSION, m_rows, d_tau, len(matrices))
    for record_id, matrix in matrices.items():
        blob += encode_id(record_id, str(path), PromptMatrixFormatError)
        blob += np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    path.write_bytes(bytes(blob))


def prompt_matrices_load(path) -> dict[str, np.ndarray]:
    """Read a TCPM file into an ordered keyword -> float32 matrix map."""
    path = Path(path)
    reader = Reader(path.read_bytes(), str(path), PromptMatrixFormatError)
    magic = reader.take(4, "magic")
    if magic != TCPM_MAGIC:
        raise PromptMatrixFormatError(f"{path}: bad magic {magic!r}")
    version = reader.u32("version")
    if version != TCPM_VERSION:
        raise PromptMatrixFormatError(f"{path}: unsupported version {version}")
    m_rows = reader.u32("M")
    d_tau = reader.u32("d_tau")
    if m_rows == 0 or d_tau == 0:
        raise PromptMatrixFormatError(f"{path}: matrix dimensions must be nonzero")
    count = reader.u32("record count")
    matrices: dict[str, np.ndarray] = {}
    for _ in range(count):
        record_id = read_id(reader)
        if record_id in matrices:
            raise PromptMatrixFormatError(f"{path}: duplicate id {record_id!r}")
        raw = reader.take(4 * m_rows * d_tau, f"matrix of {record_id!r}")
        matrices[record_id] = np.frombuffer(raw, dtype="<f4").reshape(m_rows, d_tau).astype(np.float32)
    reader.expect_end()
    return matrices


def load_prompt_bank(keyword_store: EmbeddingStore, matrices: dict[str, np.ndarray], template: str = "") -> PromptBank:
    """Pair a keyword embedding store with its prompt matrices by id."""
    keywords = keyword_store.ids()
    missing = sorted(set(keywords) ^ set(matrices))
    if missing:
        raise UnresolvedReferenceError(
            f"keyword store and prompt matrices disagree on ids: {missing}", missing
        )
    z = np.stack([keyword_store[k] for k in keywords]).astype(np.float64)
    t = np.stack([matrices[k] for k in keywords]).astype(np.float64)
    return PromptBank(template, tuple(keywords), z, t)
