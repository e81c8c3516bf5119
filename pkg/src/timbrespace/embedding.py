"""Unit-norm embedding vectors and the latent-space arithmetic shared by every module."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_DIM",
    "Embedding",
    "MixWeights",
    "cosine_distance",
    "mix_embeddings",
    "softmax_weights",
    "effect_embedding",
]

DEFAULT_DIM = 512

# An embedding flagged as normalized may drift this far from unit norm.
NORM_TOL = 1e-5
_MIN_NORM = 1e-12


def as_vector(x) -> np.ndarray:
    """Coerce an Embedding or array-like into a finite 1-d float64 vector."""
    values = x.values if isinstance(x, Embedding) else x
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains non-finite entries")
    return arr


@dataclass(frozen=True)
class Embedding:
    """A point in the shared latent space.

    ``normalized`` records whether the vector is unit length; constructors
    that guarantee it set the flag, and the flag is verified on creation.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = as_vector(self.values)
        object.__setattr__(self, "values", arr)
        if self.normalized and abs(np.linalg.norm(arr) - 1.0) > NORM_TOL:
            raise ValueError("embedding flagged normalized but its L2 norm is not 1")

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @classmethod
    def unit(cls, values) -> "Embedding":
        """Build a unit-norm embedding, erroring on (near-)zero input."""
        arr = as_vector(values)
        norm = float(np.linalg.norm(arr))
        if norm < _MIN_NORM:
            raise ValueError("cannot normalize a (near-)zero vector")
        return cls(arr / norm, normalized=True)


@dataclass(frozen=True)
class MixWeights:
    """Mixing coefficients for a weighted sum of embeddings (source first)."""

    alphas: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.alphas, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("mix weights must be a non-empty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("mix weights must be finite")
        object.__setattr__(self, "alphas", arr)

    def __len__(self) -> int:
        return self.alphas.shape[0]


def _check_same_dim(*vectors: np.ndarray) -> int:
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


def cosine_distance(a, b) -> float:
    """1 minus cosine similarity; 0 for aligned vectors, 2 for antipodal ones."""
    va, vb = as_vector(a), as_vector(b)
    _check_same_dim(va, vb)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < _MIN_NORM or nb < _MIN_NORM:
        raise ValueError("cosine distance is undefined for zero-norm vectors")
    dist = 1.0 - float(np.dot(va, vb)) / (na * nb)
    # Clamp float round-off; the exact value lies in [0, 2].
    return min(max(dist, 0.0), 2.0)


def mix_embeddings(parts, weights, renormalize: bool = False) -> Embedding:
    """Weighted sum of embeddings, optionally renormalized to unit length."""
    vectors = [as_vector(p) for p in parts]
    alphas = weights.alphas if isinstance(weights, MixWeights) else np.asarray(weights, dtype=np.float64)
    if len(vectors) == 0:
        raise ValueError("mix_embeddings needs at least one part")
    if alphas.ndim != 1 or alphas.shape[0] != len(vectors):
        raise ValueError(f"{len(vectors)} parts but {alphas.shape[0] if alphas.ndim == 1 else '?'} weights")
    if not np.all(np.isfinite(alphas)):
        raise ValueError("mix weights must be finite")
    _check_same_dim(*vectors)
    mixed = np.einsum("i,ij->j", alphas, np.stack(vectors))
    if not renormalize:
        return Embedding(mixed)
    norm = float(np.linalg.norm(mixed))
    if norm < _MIN_NORM:
        raise ValueError("mixture has (near-)zero norm; cannot renormalize")
    return Embedding(mixed / norm, normalized=True)


def softmax_weights(scores, temperature: float) -> np.ndarray:
    """Numerically stable softmax of scores / temperature."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    arr = np.asarray(scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("scores must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    scaled = arr / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def effect_embedding(z_wet, z_dry, renormalize: bool = False) -> Embedding:
    """Difference vector isolating what a processing step changed."""
    vw, vd = as_vector(z_wet), as_vector(z_dry)
    _check_same_dim(vw, vd)
    diff = vw - vd
    if not renormalize:
        return Embedding(diff)
    norm = float(np.linalg.norm(diff))
    if norm < _MIN_NORM:
        raise ValueError("effect difference has (near-)zero norm; cannot renormalize")
    return Embedding(diff / norm, normalized=True)
