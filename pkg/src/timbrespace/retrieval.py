"""Cross-modal retrieval evaluation with exact perfect/random baselines.

Queries are simulated from patch metadata (title, category, or both); a
text-to-patch distance is the minimum over the patch's per-note distances.
R@k is normalized recall, 100 * E[|relevant in top-k| / min(k, |relevant|)],
and RANK is the mean 1-based position of the first relevant document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .embedding import cosine_distance
from .encoders import EmbeddingStore
from .errors import UnresolvedReferenceError

__all__ = [
    "DEFAULT_KS",
    "QUERY_MODES",
    "PatchRecord",
    "Query",
    "QuerySet",
    "RetrievalReport",
    "normalize_title",
    "build_queries",
    "build_audio_queries",
    "patch_distance",
    "evaluate",
    "perfect_baseline",
    "random_baseline",
    "load_patch_manifest",
    "validate_patches",
]

DEFAULT_KS = (1, 5, 10, 50)
QUERY_MODES = ("title", "category", "title_category")


@dataclass(frozen=True)
class PatchRecord:
    """A synth patch: metadata plus one embedding per recorded MIDI pitch."""

    patch_id: str
    title: str
    category: str
    note_embeddings: tuple[tuple[int, np.ndarray], ...]

    def __post_init__(self):
        if not self.note_embeddings:
            raise ValueError(f"patch {self.patch_id!r} has no note embeddings")
        notes = tuple(
            (int(pitch), np.asarray(emb, dtype=np.float64)) for pitch, emb in self.note_embeddings
        )
        dims = {emb.shape for _, emb in notes}
        if len(dims) != 1:
            raise ValueError(f"patch {self.patch_id!r} mixes embedding dimensions {dims}")
        object.__setattr__(self, "note_embeddings", notes)


@dataclass(frozen=True)
class Query:
    text: str
    relevant: frozenset[str]

    def __post_init__(self):
        if not self.relevant:
            raise ValueError(f"query {self.text!r} has an empty relevant set")


@dataclass(frozen=True)
class QuerySet:
    mode: str
    queries: tuple[Query, ...]


@dataclass(frozen=True)
class RetrievalReport:
    r_at: dict[int, float]  # percentages
    rank: float


def normalize_title(raw: str) -> str:
    """Strip whitespace and drop one trailing all-digit index token."""
    text = raw.strip()
    idx = len(text)
    while idx > 0 and not text[idx - 1].isspace():
        idx -= 1
    token = text[idx:]
    if token and all(c in "0123456789" for c in token):
        text = text[:idx].strip()
    return text


def _query_text(patch: PatchRecord, mode: str) -> str:
    if mode == "title":
        return normalize_title(patch.title)
    if mode == "category":
        return patch.category
    if mode == "title_category":
        return normalize_title(patch.title) + " " + patch.category
    raise ValueError(f"unknown query mode {mode!r}; expected one of {QUERY_MODES}")


def build_queries(patches: Sequence[PatchRecord], mode: str) -> QuerySet:
    """One deduplicated query per distinct text; relevant = patches sharing it."""
    if not patches:
        raise ValueError("need at least one patch")
    relevant: dict[str, set[str]] = {}
    for patch in patches:
        relevant.setdefault(_query_text(patch, mode), set()).add(patch.patch_id)
    queries = tuple(Query(text, frozenset(ids)) for text, ids in relevant.items())
    return QuerySet(mode, queries)


def build_audio_queries(patches: Sequence[PatchRecord], mode: str) -> list[tuple[str, np.ndarray, frozenset[str]]]:
    """Audio-to-text queries: one per note, relevant to its own patch's text.

    Returns (query key, note embedding, relevant text set) triples.
    """
    out = []
    for patch in patches:
        text = _query_text(patch, mode)
        for pitch, emb in patch.note_embeddings:
            out.append((f"{patch.patch_id}#{pitch}", emb, frozenset({text})))
    return out


def patch_distance(query_emb, patch: PatchRecord) -> float:
    """Minimum cosine distance between the query and any of the patch's notes."""
    return min(cosine_distance(query_emb, emb) for _, emb in patch.note_embeddings)


def _aggregate(
    orderings: Sequence[Sequence[str]],
    relevants: Sequence[frozenset[str] | set[str]],
    ks: Sequence[int],
) -> RetrievalReport:
    """Metrics from per-query document orderings (best first)."""
    ks = tuple(ks)
    r_sums = {k: 0.0 for k in ks}
    rank_sum = 0.0
    for order, relevant in zip(orderings, relevants):
        m = len(relevant)
        first = None
        hits = 0
        hits_at = {}
        for pos, doc_id in enumerate(order, start=1):
            if doc_id in relevant:
                hits += 1
                if first is None:
                    first = pos
            if pos in r_sums:
                hits_at[pos] = hits
        for k in ks:
            hits_k = hits_at.get(k, hits)  # k beyond N sees the whole list
            r_sums[k] += hits_k / min(k, m)
        if first is None:
            raise ValueError("a query's relevant documents are missing from the ranking")
        rank_sum += first
    n = len(orderings)
    return RetrievalReport({k: 100.0 * r_sums[k] / n for k in ks}, rank_sum / n)


def _normalize_documents(documents) -> list[tuple[str, Any]]:
    if isinstance(documents, Mapping):
        return list(documents.items())
    return [(doc_id, payload) for doc_id, payload in documents]


def _check_relevant_exist(queries, doc_ids: set[str]) -> None:
    missing = sorted({doc for _, relevant in queries for doc in relevant if doc not in doc_ids})
    if missing:
        raise UnresolvedReferenceError(f"relevant ids missing from documents: {missing}", missing)


def evaluate(
    queries: Sequence[tuple[Any, frozenset[str] | set[str]]],
    documents,
    distance_fn: Callable[[Any, Any], float],
    ks: Sequence[int] = DEFAULT_KS,
) -> RetrievalReport:
    """Rank documents per query by ascending distance (ties by ascending id).

    queries: (payload, relevant id set) pairs; the payload is whatever the
    distance function consumes. documents: mapping or (id, payload) pairs.
    """
    docs = _normalize_documents(documents)
    _check_relevant_exist(queries, {doc_id for doc_id, _ in docs})
    orderings = []
    relevants = []
    for payload, relevant in queries:
        scored = sorted(((distance_fn(payload, doc), doc_id) for doc_id, doc in docs))
        orderings.append([doc_id for _, doc_id in scored])
        relevants.append(relevant)
    return _aggregate(orderings, relevants, ks)


def perfect_baseline(queries, documents, ks: Sequence[int] = DEFAULT_KS) -> RetrievalReport:
    """Theoretical optimum: every query's relevant documents ranked first."""
    docs = _normalize_documents(documents)
    doc_ids = sorted(doc_id for doc_id, _ in docs)
    _check_relevant_exist(queries, set(doc_ids))
    orderings = []
    relevants = []
    for _, relevant in queries:
        first = [d for d in doc_ids if d in relevant]
        rest = [d for d in doc_ids if d not in relevant]
        orderings.append(first + rest)
        relevants.append(relevant)
    return _aggregate(orderings, relevants, ks)


def random_baseline(
    queries,
    documents,
    ks: Sequence[int] = DEFAULT_KS,
    runs: int = 100,
    seed: int = 0,
) -> RetrievalReport:
    """Mean report over `runs` uniformly random rankings per query."""
    docs = _normalize_documents(documents)
    doc_ids = [doc_id for doc_id, _ in docs]
    _check_relevant_exist(queries, set(doc_ids))
    if runs < 1:
        raise ValueError("runs must be >= 1")
    relevants = [relevant for _, relevant in queries]
    ks = tuple(ks)
    r_acc = {k: 0.0 for k in ks}
    rank_acc = 0.0
    for run in range(runs):
        rng = np.random.default_rng([seed, run])  # per-run derived stream
        orderings = [[doc_ids[i] for i in rng.permutation(len(doc_ids))] for _ in queries]
        report = _aggregate(orderings, relevants, ks)
        for k in ks:
            r_acc[k] += report.r_at[k]
        rank_acc += report.rank
    return RetrievalReport({k: r_acc[k] / runs for k in ks}, rank_acc / runs)


def load_patch_manifest(path, store: EmbeddingStore) -> list[PatchRecord]:
    """Load the JSON patch manifest, resolving embedding ids against a store."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: patch manifest must be a JSON array")
    missing = []
    patches = []
    for entry in raw:
        notes = []
        for note in entry["notes"]:
            emb_id = note["embedding_id"]
            if emb_id not in store:
                missing.append(emb_id)
                continue
            notes.append((int(note["midi_pitch"]), store[emb_id]))
        if not missing:
            patches.append(
                PatchRecord(str(entry["patch_id"]), str(entry["title"]), str(entry["category"]), tuple(notes))
            )
    if missing:
        raise UnresolvedReferenceError(
            f"{path}: {len(missing)} embedding ids not found in store: {sorted(set(missing))}",
            sorted(set(missing)),
        )
    return patches


def validate_patches(patches: Sequence[PatchRecord]) -> list[str]:
    """Non-fatal manifest issues, e.g. titles that normalize to nothing."""
    warnings = []
    seen_ids: set[str] = set()
    for patch in patches:
        if patch.patch_id in seen_ids:
            warnings.append(f"duplicate patch_id {patch.patch_id!r}")
        seen_ids.add(patch.patch_id)
        if not normalize_title(patch.title):
            warnings.append(f"patch {patch.patch_id!r}: title {patch.title!r} normalizes to an empty string")
    return warnings
