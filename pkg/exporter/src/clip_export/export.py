"""Export jobs: text embeddings, prompt matrices, audio embeddings."""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Sequence

import numpy as np

from .formats import write_sidecar, write_tclp, write_tcpm
from .models import ClapAudioTower, ClipTextTower
from .wavio import read_wav_mono

KEYWORD_PLACEHOLDER = "<keyword>"


def _require_unique(items: Sequence[str], what: str) -> None:
    duplicated = sorted(item for item, count in Counter(items).items() if count > 1)
    if duplicated:
        raise ValueError(f"duplicate {what}: {duplicated}")


def export_text_embeddings(texts: Sequence[str], model: str, out_path, batch_size: int = 16) -> dict:
    """One unit-normalized TCLP record per text, id = the text itself."""
    texts = list(texts)
    if not texts:
        raise ValueError("no texts to export")
    _require_unique(texts, "texts")
    tower = ClipTextTower(model)
    vectors = tower.pooled_embeddings(texts, batch_size=batch_size)
    write_tclp(out_path, texts, vectors)
    write_sidecar(out_path, model, f"text embeddings: {len(texts)} records, d={vectors.shape[1]}")
    return {"records": len(texts), "dimension": int(vectors.shape[1])}


def export_prompt_matrices(
    template: str, keywords: Sequence[str], model: str, out_path, batch_size: int = 16
) -> dict:
    """One token-level [M, d_tau] TCPM record per keyword, id = the keyword."""
    keywords = list(keywords)
    if not keywords:
        raise ValueError("no keywords to export")
    _require_unique(keywords, "keywords")
    occurrences = template.count(KEYWORD_PLACEHOLDER)
    if occurrences != 1:
        raise ValueError(
            f"template must contain {KEYWORD_PLACEHOLDER!r} exactly once, found {occurrences}"
        )
    prompts = [template.replace(KEYWORD_PLACEHOLDER, keyword) for keyword in keywords]
    tower = ClipTextTower(model)
    matrices = tower.token_matrices(prompts, batch_size=batch_size)
    write_tcpm(out_path, keywords, matrices)
    write_sidecar(
        out_path, model,
        f"prompt matrices: {len(keywords)} records, M={matrices.shape[1]}, d_tau={matrices.shape[2]}, "
        f"template={template!r}",
    )
    return {"records": len(keywords), "rows": int(matrices.shape[1]), "width": int(matrices.shape[2])}


def export_audio_embeddings(wav_paths: Sequence, model: str, out_path) -> dict:
    """One unit-normalized TCLP record per WAV file, id = the file stem."""
    wav_paths = [Path(p) for p in wav_paths]
    if not wav_paths:
        raise ValueError("no audio files to export")
    _require_unique([p.stem for p in wav_paths], "file stems")
    tower = ClapAudioTower(model)
    ids, vectors = [], []
    for path in wav_paths:
        samples, rate = read_wav_mono(path)
        ids.append(path.stem)
        vectors.append(tower.embedding(samples, rate))
    matrix = np.stack(vectors)
    write_tclp(out_path, ids, matrix)
    write_sidecar(out_path, model, f"audio embeddings: {len(ids)} records, d={matrix.shape[1]}")
    return {"records": len(ids), "dimension": int(matrix.shape[1])}
