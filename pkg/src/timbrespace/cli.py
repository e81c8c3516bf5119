"""Batch command-line surface.

Subcommands: preprocess, embed, eval, eq, t2i. All cross-model data flows
through files (WAV, TCLP, TCPM, JSON, CSV); report-producing commands render
a PNG figure next to each delimited output. Exit codes: 0 success, 2 empty
or degenerate input, 3 unresolved reference, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import plots
from .audio import (
    WavFormatError,
    augmentation_offsets,
    downmix_mono,
    load_wav,
    peak_normalize,
    pitch_shift,
    resample,
    save_wav,
)
from .conditioning import (
    condition,
    effect_series,
    load_prompt_bank,
    prompt_matrices_load,
    prompt_matrices_save,
)
from .embedding import cosine_distance
from .encoders import EmbeddingStore, MelStatEncoder, hashed_text_encode, store_load, store_save
from .eq import EqRunConfig, band_centers_hz, optimize_eq, build_target, apply_eq
from .errors import EmptyInputError, UnresolvedReferenceError
from .retrieval import (
    DEFAULT_KS,
    build_audio_queries,
    build_queries,
    evaluate,
    load_patch_manifest,
    patch_distance,
    perfect_baseline,
    random_baseline,
    validate_patches,
)
from .spectral import DEFAULT_HOP, DEFAULT_N_FFT, DEFAULT_N_MELS, mel_filterbank, stft

_log_verbose = False


def _info(message: str) -> None:
    if _log_verbose:
        print(message, file=sys.stderr)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _front_end(sample_rate: int):
    f_max = min(8000.0, sample_rate / 2.0)
    return mel_filterbank(DEFAULT_N_MELS, DEFAULT_N_FFT, sample_rate, 0.0, f_max)


def _build_encoder(sample_rate: int, d: int, seed: int) -> MelStatEncoder:
    return MelStatEncoder(_front_end(sample_rate), d=d, projection_seed=seed)


def _list_wavs(target: Path) -> list[Path]:
    if target.is_dir():
        return sorted(p for p in target.iterdir() if p.suffix.lower() == ".wav" and p.is_file())
    return [target]


def _parse_pitch(stem: str) -> int:
    match = re.search(r"(\d+)(?!.*\d)", stem)
    if match:
        value = int(match.group(1))
        if 0 <= value <= 127:
            return value
    return -1


def _prepare_mono(path: Path, rate: int):
    buf = load_wav(path)
    buf = downmix_mono(buf, weight_left=0.5)
    return resample(buf, rate)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    in_dir = Path(args.in_path)
    files = _list_wavs(in_dir) if in_dir.is_dir() else []
    if not files:
        print("no input files", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    failures = 0
    for index, path in enumerate(files):
        rng = np.random.default_rng([args.seed, index])
        try:
            buf = load_wav(path)
            buf = resample(buf, args.rate)
            buf = downmix_mono(buf, rng=rng)
            pitch_midi = _parse_pitch(path.stem)
            written = [(f"{path.stem}.wav", peak_normalize(buf))]
            for n, offset in enumerate(augmentation_offsets(args.style, rng), start=1):
                written.append((f"{path.stem}_aug{n}.wav", peak_normalize(pitch_shift(buf, offset))))
            for name, out_buf in written:
                save_wav(out_dir / name, out_buf, encoding="float32")
                manifest.append({"path": name, "style": args.style, "pitch_midi": pitch_midi})
            _info(f"preprocessed {path.name} -> {len(written)} files")
        except (WavFormatError, ValueError, OSError) as exc:
            _warn(f"skipping {path}: {exc}")
            failures += 1
    if failures == len(files):
        print("no input files could be processed", file=sys.stderr)
        return 2
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_embed(args) -> int:
    files = _list_wavs(Path(args.in_path))
    if not files:
        print("no input files", file=sys.stderr)
        return 2
    encoder = _build_encoder(args.rate, args.dim, args.seed)
    store = EmbeddingStore(args.dim)
    for path in files:
        try:
            buf = _prepare_mono(path, args.rate)
            store.add(path.stem, encoder.encode_audio(buf).values)
            _info(f"embedded {path.name}")
        except (WavFormatError, ValueError, OSError) as exc:
            _warn(f"skipping {path}: {exc}")
    if len(store) == 0:
        print("no input files could be embedded", file=sys.stderr)
        return 2
    store_save(Path(args.out), store, metadata={"model": f"melstat(seed={args.seed})", "notes": f"d={args.dim}"})
    return 0


def _report_row(mode: str, direction: str, model: str, report) -> list:
    return [mode, direction, model] + [float(report.r_at[k]) for k in DEFAULT_KS] + [float(report.rank)]


def cmd_eval(args) -> int:
    audio_store = store_load(Path(args.audio_store))
    text_store = store_load(Path(args.text_store))
    patches = load_patch_manifest(Path(args.patches), audio_store)
    for warning in validate_patches(patches):
        _warn(warning)

    if args.direction == "t2p":
        query_set = build_queries(patches, args.mode)
        missing = sorted({q.text for q in query_set.queries if q.text not in text_store})
        if missing:
            raise UnresolvedReferenceError(f"query texts missing from text store: {missing}", missing)
        queries = [(text_store[q.text], q.relevant) for q in query_set.queries]
        documents = [(p.patch_id, p) for p in patches]
        distance = patch_distance
    else:
        audio_queries = build_audio_queries(patches, args.mode)
        texts = list(dict.fromkeys(text for _, _, rel in audio_queries for text in rel))
        missing = sorted({t for t in texts if t not in text_store})
        if missing:
            raise UnresolvedReferenceError(f"document texts missing from text store: {missing}", missing)
        queries = [(emb, rel) for _, emb, rel in audio_queries]
        documents = [(text, text_store[text]) for text in texts]
        distance = cosine_distance

    rows = [_report_row(args.mode, args.direction, args.model_name, evaluate(queries, documents, distance))]
    if args.baselines:
        rows.append(_report_row(args.mode, args.direction, "perfect", perfect_baseline(queries, documents)))
        rows.append(
            _report_row(
                args.mode, args.direction, "random",
                random_baseline(queries, documents, runs=args.runs, seed=args.seed),
            )
        )
    out = Path(args.out)
    header = ["mode", "direction", "model"] + [f"R@{k}" for k in DEFAULT_KS] + ["RANK"]
    _write_csv(out, header, rows)
    if not args.no_figures:
        figure_rows = [dict(zip(header, row)) for row in rows]
        plots.save_retrieval_bars(out.with_suffix(".png"), figure_rows)
    return 0


def cmd_eq(args) -> int:
    if not args.prompt:
        print("at least one --prompt is required", file=sys.stderr)
        return 2
    source = _prepare_mono(Path(args.in_path), args.rate)
    encoder = _build_encoder(args.rate, args.dim, args.seed)

    if args.hash_prompts:
        prompt_vectors = [hashed_text_encode(p, d=args.dim, seed=args.seed).values for p in args.prompt]
    else:
        if not args.prompt_store:
            print("--prompt-store is required unless --hash-prompts is given", file=sys.stderr)
            return 2
        store = store_load(Path(args.prompt_store))
        missing = sorted({p for p in args.prompt if p not in store})
        if missing:
            raise UnresolvedReferenceError(f"prompts missing from store: {missing}", missing)
        prompt_vectors = [store[p] for p in args.prompt]

    alphas = None
    if args.alpha:
        if len(args.alpha) != 1 + len(args.prompt):
            print(
                f"need {1 + len(args.prompt)} --alpha values (source first), got {len(args.alpha)}",
                file=sys.stderr,
            )
            return 2
        alphas = np.asarray(args.alpha, dtype=np.float64)

    z_source = encoder.encode_audio(source, args.hop)
    target = build_target(z_source, prompt_vectors, alphas)
    config = EqRunConfig(
        iterations=args.iters, lr=args.lr, alphas=alphas, l2_penalty=args.l2,
        bands=args.bands, n_fft=DEFAULT_N_FFT, hop=args.hop, seed=args.seed,
    )
    result = optimize_eq(source, target, encoder, config)
    _info(f"loss {result.initial_loss:.6f} -> {result.final_loss:.6f}")

    out = Path(args.out)
    save_wav(out, result.processed, encoding="float32")
    trace_path = Path(args.trace)
    _write_csv(trace_path, ["iteration", "loss"], [[i, float(v)] for i, v in enumerate(result.trace)])
    centers = band_centers_hz(config.bands, config.n_fft, args.rate)
    Path(args.params).write_text(
        json.dumps(
            {
                "log_gains": [float(g) for g in result.params.log_gains],
                "band_centers_hz": [float(c) for c in centers],
            },
            indent=2,
        ) + "\n",
        encoding="utf-8",
    )
    if not args.no_figures:
        plots.save_loss_trace(trace_path.with_suffix(".png"), result.trace)
        plots.save_gain_curve(Path(args.params).with_suffix(".png"), centers, result.params.log_gains)
        before = stft(source, config.n_fft, config.hop)
        plots.save_spectrogram_pair(out.with_suffix(".spectrogram.png"), before, apply_eq(before, result.params))
    return 0


def cmd_t2i(args) -> int:
    keyword_store = store_load(Path(args.bank))
    matrices = prompt_matrices_load(Path(args.prompts))
    bank = load_prompt_bank(keyword_store, matrices)
    mode = "literal_distance" if args.mode == "literal" else "softmax_similarity"
    encoder = _build_encoder(args.rate, keyword_store.d, args.seed)

    def encode(buf):
        return encoder.encode_audio(buf, args.hop).values

    inputs = [Path(p) for p in args.in_paths]
    if not inputs:
        print("no input files", file=sys.stderr)
        return 2
    stems = [p.stem for p in inputs]
    buffers = [_prepare_mono(p, args.rate) for p in inputs]

    results: dict[str, np.ndarray] = {}
    weight_rows: list[list] = []
    if args.dry:
        dry = _prepare_mono(Path(args.dry), args.rate)
        for item in effect_series(dry, buffers, encode, bank, mode, args.temperature):
            if item.error is not None:
                _warn(f"{stems[item.index]}: {item.error}")
                continue
            results[stems[item.index]] = item.result.conditioning
            weight_rows.append([stems[item.index]] + [float(w) for w in item.result.weights])
    else:
        for stem, buf in zip(stems, buffers):
            res = condition(encode(buf), bank, mode, args.temperature)
            results[stem] = res.conditioning
            weight_rows.append([stem] + [float(w) for w in res.weights])
    if not results:
        print("no inputs produced conditioning output", file=sys.stderr)
        return 2

    prompt_matrices_save(Path(args.out), results)
    weights_path = Path(args.weights)
    _write_csv(weights_path, ["input"] + list(bank.keywords), weight_rows)
    if not args.no_figures:
        plots.save_weight_heatmap(
            weights_path.with_suffix(".png"),
            [row[0] for row in weight_rows],
            list(bank.keywords),
            np.asarray([row[1:] for row in weight_rows], dtype=np.float64),
        )
    return 0


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timbrespace", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering next to CSV outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="resample, downmix, augment, and normalize notes")
    p.add_argument("--in", dest="in_path", required=True, help="input directory of WAV files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--style", choices=["nsynth", "alv"], required=True, help="augmentation rule set")
    p.add_argument("--rate", type=int, default=16000, help="target sample rate (default 16000)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("embed", help="encode WAV files into a TCLP embedding store")
    p.add_argument("--in", dest="in_path", required=True, help="input WAV file or directory")
    p.add_argument("--out", required=True, help="output .tclp path")
    p.add_argument("--encoder", choices=["melstat"], default="melstat")
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--dim", type=int, default=512, help="embedding dimension (default 512)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="cross-modal retrieval report")
    p.add_argument("--patches", required=True, help="patch manifest JSON")
    p.add_argument("--audio-store", required=True, help="TCLP store with note embeddings")
    p.add_argument("--text-store", required=True, help="TCLP store with query/document text embeddings")
    p.add_argument("--mode", choices=["title", "category", "title_category"], required=True)
    p.add_argument("--direction", choices=["t2p", "a2t"], required=True)
    p.add_argument("--baselines", action="store_true", help="append perfect and random rows")
    p.add_argument("--runs", type=int, default=100, help="random-baseline runs (default 100)")
    p.add_argument("--model-name", default="reference", help="model label for the report rows")
    p.add_argument("--out", required=True, help="output report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eq", help="text-guided EQ of one audio file")
    p.add_argument("--in", dest="in_path", required=True, help="source WAV")
    p.add_argument("--prompt", action="append", default=[], help="text prompt (repeatable)")
    p.add_argument("--prompt-store", help="TCLP store with prompt embeddings (id = prompt text)")
    p.add_argument("--hash-prompts", action="store_true", help="embed prompts with the hashed reference encoder")
    p.add_argument("--alpha", action="append", type=float, default=[],
                   help="mixing weight, repeatable: source first, then one per prompt")
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--l2", type=float, default=0.0, help="L2 penalty on log-gains")
    p.add_argument("--bands", type=int, default=32)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--hop", type=int, default=DEFAULT_HOP)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--out", required=True, help="processed WAV path")
    p.add_argument("--trace", required=True, help="loss trace CSV path")
    p.add_argument("--params", required=True, help="final params JSON path")
    p.set_defaults(func=cmd_eq)

    p = sub.add_parser("t2i", help="conditioning matrices from audio via a keyword bank")
    p.add_argument("--in", dest="in_paths", action="append", default=[], required=True,
                   help="input WAV (repeatable)")
    p.add_argument("--dry", help="dry reference WAV; switches to effect-difference mode")
    p.add_argument("--bank", required=True, help="TCLP store of keyword embeddings")
    p.add_argument("--prompts", required=True, help="TCPM file of prompt matrices")
    p.add_argument("--mode", choices=["literal", "softmax"], default="softmax")
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--hop", type=int, default=DEFAULT_HOP)
    p.add_argument("--out", required=True, help="output conditioning TCPM")
    p.add_argument("--weights", required=True, help="output per-input keyword-weight CSV")
    p.set_defaults(func=cmd_t2i)

    return parser


def main(argv=None) -> int:
    global _log_verbose
    args = build_parser().parse_args(argv)
    _log_verbose = bool(args.verbose)
    try:
        return args.func(args)
    except UnresolvedReferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EmptyInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced with a message instead of a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
