"""Symmetric contrastive training of a linear projection head.

Batches pool the text attributes of all their items; the loss is the CLIP
symmetric cross-entropy over a scaled similarity matrix, generalized to a
uniform target over each row's (and column's) multiple positives. A single
trainable linear projection over fixed audio features stands in for full
encoder finetuning: same loss, same optimizer, same early stopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .embedding import DEFAULT_DIM
from .encoders import hashed_text_encode

__all__ = [
    "Batch",
    "build_batch",
    "contrastive_loss",
    "AdamState",
    "adam_step",
    "EarlyStopper",
    "ProjectionHead",
    "TrainConfig",
    "train_projection",
    "save_history_csv",
]


@dataclass(frozen=True)
class Batch:
    """A training batch with batch-union text targets.

    positives[i, j] is True iff unioned_texts[j] is one of item i's attributes;
    every row has at least one positive by construction.
    """

    audio_features: np.ndarray  # [B, f]
    texts: tuple[tuple[str, ...], ...]
    unioned_texts: tuple[str, ...]
    positives: np.ndarray  # [B, U] bool


def build_batch(records: Sequence[tuple[np.ndarray, Sequence[str]]]) -> Batch:
    """Assemble features plus the deduplicated text union (first occurrence wins)."""
    if len(records) < 2:
        raise ValueError("a batch needs at least two records")
    texts: list[tuple[str, ...]] = []
    for _, attrs in records:
        attrs = tuple(attrs)
        if not attrs:
            raise ValueError("every record needs at least one text attribute")
        texts.append(attrs)
    index: dict[str, int] = {}
    unioned: list[str] = []
    for attrs in texts:
        for attr in attrs:
            if attr not in index:
                index[attr] = len(unioned)
                unioned.append(attr)
    features = np.stack([np.asarray(f, dtype=np.float64) for f, _ in records])
    positives = np.zeros((len(records), len(unioned)), dtype=bool)
    for i, attrs in enumerate(texts):
        for attr in attrs:
            positives[i, index[attr]] = True
    return Batch(features, tuple(texts), tuple(unioned), positives)


def contrastive_loss(
    audio_emb: np.ndarray,
    text_emb: np.ndarray,
    positives: np.ndarray,
    inv_temperature: float,
) -> tuple[float, dict[str, np.ndarray | float]]:
    """Symmetric cross-entropy over scaled similarities, with analytic gradients.

    Audio-to-text averages over rows; text-to-audio averages over the columns
    that have at least one positive (others are skipped, not an error). The
    temperature gradient is reported w.r.t. log(inv_temperature).

    Returns (loss, {"audio", "text", "temperature_logit"}).
    """
    A = np.asarray(audio_emb, dtype=np.float64)
    T = np.asarray(text_emb, dtype=np.float64)
    P = np.asarray(positives, dtype=bool)
    if A.ndim != 2 or T.ndim != 2 or A.shape[1] != T.shape[1]:
        raise ValueError("embedding matrices must be [B, d] and [U, d]")
    if P.shape != (A.shape[0], T.shape[0]):
        raise ValueError("positives must be [B, U]")
    if inv_temperature <= 0:
        raise ValueError("inv_temperature must be positive")
    row_counts = P.sum(axis=1)
    if np.any(row_counts == 0):
        raise ValueError("every audio row needs at least one positive text")

    B, U = P.shape
    sims = A @ T.T
    logits = inv_temperature * sims

    # audio -> text, over rows
    row_lse = logsumexp(logits, axis=1)
    row_pos_mean = (logits * P).sum(axis=1) / row_counts
    loss_rows = float(np.mean(row_lse - row_pos_mean))
    row_soft = np.exp(logits - row_lse[:, None])
    grad_logits = (row_soft - P / row_counts[:, None]) / B

    # text -> audio, over columns that have positives
    col_mask = P.any(axis=0)
    n_cols = int(col_mask.sum())
    colL = logits[:, col_mask]
    colP = P[:, col_mask]
    col_counts = colP.sum(axis=0)
    col_lse = logsumexp(colL, axis=0)
    loss_cols = float(np.mean(col_lse - (colL * colP).sum(axis=0) / col_counts))
    col_soft = np.exp(colL - col_lse[None, :])
    col_grad = (col_soft - colP / col_counts[None, :]) / n_cols
    grad_logits[:, col_mask] += col_grad

    loss = 0.5 * (loss_rows + loss_cols)
    grad_logits *= 0.5
    d_audio = inv_temperature * grad_logits @ T
    d_text = inv_temperature * grad_logits.T @ A
    d_inv_temperature = float((grad_logits * sims).sum())
    return loss, {
        "audio": d_audio,
        "text": d_text,
        "temperature_logit": d_inv_temperature * inv_temperature,
    }


@dataclass
class AdamState:
    """Adam accumulators over a dict of named parameters."""

    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter values."""
    if state.lr <= 0:
        raise ValueError("learning rate must be positive")
    prepared = {}
    for key, param in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {key!r}; aborting step")
        prepared[key] = (np.asarray(param, dtype=np.float64), g)
    state.t += 1
    correct1 = 1.0 - state.beta1 ** state.t
    correct2 = 1.0 - state.beta2 ** state.t
    updated = {}
    for key, (param, g) in prepared.items():
        m = state.m.get(key)
        v = state.v.get(key)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * g * g if v is None else state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[key], state.v[key] = m, v
        updated[key] = param - state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)
    return updated


@dataclass
class EarlyStopper:
    """Stop after more than `patience` consecutive epochs without improvement."""

    patience: int
    best_loss: float = math.inf
    epochs_since_best: int = 0

    def update(self, loss: float) -> bool:
        """Record an epoch's validation loss; True means keep training."""
        if loss < self.best_loss:
            self.best_loss = loss
            self.epochs_since_best = 0
            return True
        self.epochs_since_best += 1
        return self.epochs_since_best <= self.patience


@dataclass
class ProjectionHead:
    """Linear map from audio features to the shared space, plus temperature."""

    W: np.ndarray  # [d, f]
    temperature_logit: float

    @property
    def inv_temperature(self) -> float:
        return math.exp(self.temperature_logit)

    def project(self, features: np.ndarray) -> np.ndarray:
        """Project and L2-normalize feature rows."""
        raw = np.asarray(features, dtype=np.float64) @ self.W.T
        norms = np.linalg.norm(raw, axis=-1, keepdims=True)
        if np.any(norms < 1e-30):
            raise ValueError("a projected feature row has zero norm")
        return raw / norms


_MAX_INV_TEMPERATURE = 100.0


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 2e-5
    patience: int = 10
    seed: int = 0
    max_epochs: int = 100
    d: int = DEFAULT_DIM
    init_inv_temperature: float = 14.3
    learn_temperature: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {k: data[k] for k in data if k in cls.__dataclass_fields__}
        return cls(**known)


def _batch_loss_and_grads(
    W: np.ndarray,
    temperature_logit: float,
    features: np.ndarray,
    text_matrix: np.ndarray,
    positives: np.ndarray,
):
    raw = features @ W.T
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms < 1e-30):
        raise ValueError("a projected row collapsed to zero norm")
    audio = raw / norms
    inv_t = math.exp(temperature_logit)
    loss, grads = contrastive_loss(audio, text_matrix, positives, inv_t)
    g_audio = grads["audio"]
    # back through row normalization: remove the radial component, scale by 1/norm
    g_raw = (g_audio - audio * np.sum(audio * g_audio, axis=1, keepdims=True)) / norms
    g_W = g_raw.T @ features
    return loss, g_W, float(grads["temperature_logit"])


def train_projection(
    train_features: np.ndarray,
    train_attributes: Sequence[Sequence[str]],
    val_features: np.ndarray,
    val_attributes: Sequence[Sequence[str]],
    config: TrainConfig,
    text_encoder: Callable[[str], np.ndarray] | None = None,
) -> tuple[ProjectionHead, list[tuple[int, float, float]]]:
    """Train the projection head; returns the best-validation parameters.

    Each epoch shuffles the training set (seeded), forms batches whose text
    side is the union of the batch's attributes, and Adam-updates W and the
    temperature. Stops once validation loss has not improved for more than
    `patience` epochs. History rows are (epoch, train_loss, val_loss).
    """
    train_features = np.asarray(train_features, dtype=np.float64)
    val_features = np.asarray(val_features, dtype=np.float64)
    if config.batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    if len(train_features) < 2 or len(val_features) < 2:
        raise ValueError("train and validation splits each need at least two records")
    if len(train_features) != len(train_attributes) or len(val_features) != len(val_attributes):
        raise ValueError("features and attributes must align")

    if text_encoder is None:
        text_encoder = lambda text: hashed_text_encode(text, d=config.d, seed=config.seed).values
    text_cache: dict[str, np.ndarray] = {}

    def text_matrix(unioned: Sequence[str]) -> np.ndarray:
        for t in unioned:
            if t not in text_cache:
                text_cache[t] = np.asarray(text_encoder(t), dtype=np.float64)
        return np.stack([text_cache[t] for t in unioned])

    rng = np.random.default_rng(config.seed)
    n_features = train_features.shape[1]
    W = rng.standard_normal((config.d, n_features)) / math.sqrt(n_features)
    temperature_logit = math.log(config.init_inv_temperature)
    max_logit = math.log(_MAX_INV_TEMPERATURE)

    adam = AdamState(lr=config.lr)
    stopper = EarlyStopper(config.patience)
    val_batch = build_batch(list(zip(val_features, val_attributes)))
    val_texts = text_matrix(val_batch.unioned_texts)

    history: list[tuple[int, float, float]] = []
    best: tuple[float, np.ndarray, float] | None = None
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(train_features))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # a trailing singleton cannot form a contrastive batch
            batch = build_batch([(train_features[i], train_attributes[i]) for i in idx])
            loss, g_W, g_tl = _batch_loss_and_grads(
                W, temperature_logit, batch.audio_features, text_matrix(batch.unioned_texts), batch.positives
            )
            if not config.learn_temperature:
                g_tl = 0.0
            params = adam_step(
                adam,
                {"W": W, "temperature_logit": np.float64(temperature_logit)},
                {"W": g_W, "temperature_logit": np.float64(g_tl)},
            )
            W = params["W"]
            temperature_logit = min(float(params["temperature_logit"]), max_logit)
            epoch_losses.append(loss)
        train_loss = float(np.mean(epoch_losses))
        val_loss, _, _ = _batch_loss_and_grads(
            W, temperature_logit, val_batch.audio_features, val_texts, val_batch.positives
        )
        history.append((epoch, train_loss, val_loss))
        if best is None or val_loss < best[0]:
            best = (val_loss, W.copy(), temperature_logit)
        if not stopper.update(val_loss):
            break
    assert best is not None
    return ProjectionHead(best[1], best[2]), history


def save_history_csv(path, history: Sequence[tuple[int, float, float]]) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, train_loss, val_loss in history:
        lines.append(f"{epoch},{train_loss!r},{val_loss!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
