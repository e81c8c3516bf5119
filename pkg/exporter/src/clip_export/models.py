"""Model wrappers: a CLIP text tower and a CLAP audio tower.

Models resolve through transformers' from_pretrained, so both hub ids and
local directories work. All inference is eval-mode, no_grad, CPU-friendly.
"""

from __future__ import annotations

import numpy as np
import torch


class ModelLoadError(RuntimeError):
    """The requested model could not be loaded."""


class ClipTextTower:
    """Frozen CLIP text encoder: pooled projected embeddings + token matrices."""

    def __init__(self, model_name: str):
        try:
            from transformers import AutoTokenizer, CLIPTextModelWithProjection

            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = CLIPTextModelWithProjection.from_pretrained(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load CLIP text encoder {model_name!r}: {exc}") from exc
        self.model.eval()
        self.model_name = model_name
        self.max_tokens = int(
            min(self.tokenizer.model_max_length, self.model.config.max_position_embeddings)
        )

    def _tokenize(self, texts: list[str]):
        return self.tokenizer(
            texts,
            padding="max_length",
            truncation=True,
            max_length=self.max_tokens,
            return_tensors="pt",
        )

    @torch.no_grad()
    def pooled_embeddings(self, texts: list[str], batch_size: int = 16) -> np.ndarray:
        """Unit-normalized projected embeddings, one row per text."""
        chunks = []
        for start in range(0, len(texts), batch_size):
            out = self.model(**self._tokenize(texts[start : start + batch_size]))
            chunks.append(out.text_embeds.double().cpu().numpy())
        vectors = np.concatenate(chunks, axis=0)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ModelLoadError(f"{self.model_name}: a text embedding collapsed to zero norm")
        return vectors / norms

    @torch.no_grad()
    def token_matrices(self, prompts: list[str], batch_size: int = 16) -> np.ndarray:
        """Token-level hidden states, [n, max_tokens, hidden] — the image
        generator conditioning payload."""
        chunks = []
        for start in range(0, len(prompts), batch_size):
            out = self.model(**self._tokenize(prompts[start : start + batch_size]))
            chunks.append(out.last_hidden_state.double().cpu().numpy())
        return np.concatenate(chunks, axis=0)


class ClapAudioTower:
    """CLAP audio encoder producing unit-normalized projected embeddings."""

    def __init__(self, model_name: str):
        try:
            from transformers import ClapAudioModelWithProjection, ClapFeatureExtractor

            self.extractor = ClapFeatureExtractor.from_pretrained(model_name)
            self.model = ClapAudioModelWithProjection.from_pretrained(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load CLAP audio encoder {model_name!r}: {exc}") from exc
        self.model.eval()
        self.model_name = model_name
        self.sampling_rate = int(self.extractor.sampling_rate)
        # fused checkpoints take 4-channel features; unfused take 1-channel
        self.truncation = "fusion" if self.model.config.enable_fusion else "rand_trunc"

    @torch.no_grad()
    def embedding(self, samples: np.ndarray, sample_rate: int) -> np.ndarray:
        if sample_rate != self.sampling_rate:
            raise ValueError(
                f"{self.model_name} expects {self.sampling_rate} Hz audio, got {sample_rate} Hz; "
                "resample first"
            )
        features = self.extractor(
            samples,
            sampling_rate=self.sampling_rate,
            return_tensors="pt",
            truncation=self.truncation,
            padding="repeatpad",
        )
        kwargs = {"input_features": features["input_features"]}
        if self.model.config.enable_fusion and "is_longer" in features:
            kwargs["is_longer"] = features["is_longer"]
        vector = self.model(**kwargs).audio_embeds[0].double().cpu().numpy()
        norm = float(np.linalg.norm(vector))
        if norm < 1e-12:
            raise ModelLoadError(f"{self.model_name}: audio embedding collapsed to zero norm")
        return vector / norm
