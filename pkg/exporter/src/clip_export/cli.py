"""clip-export CLI: export-text, export-prompts, export-audio."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import export_audio_embeddings, export_prompt_matrices, export_text_embeddings
from .models import ModelLoadError


def _read_lines(path) -> list[str]:
    lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    return [line for line in lines if line]


def cmd_export_text(args) -> int:
    texts = _read_lines(args.texts)
    if not texts:
        print("no texts in input file", file=sys.stderr)
        return 2
    summary = export_text_embeddings(texts, args.model, args.out, batch_size=args.batch_size)
    print(f"wrote {summary['records']} records (d={summary['dimension']}) to {args.out}")
    return 0


def cmd_export_prompts(args) -> int:
    keywords = _read_lines(args.keywords)
    if not keywords:
        print("no keywords in input file", file=sys.stderr)
        return 2
    summary = export_prompt_matrices(
        args.template, keywords, args.model, args.out, batch_size=args.batch_size
    )
    print(
        f"wrote {summary['records']} prompt matrices "
        f"(M={summary['rows']}, d_tau={summary['width']}) to {args.out}"
    )
    return 0


def cmd_export_audio(args) -> int:
    target = Path(args.in_path)
    if target.is_dir():
        wavs = sorted(p for p in target.iterdir() if p.suffix.lower() == ".wav")
    else:
        wavs = [target]
    if not wavs:
        print("no input files", file=sys.stderr)
        return 2
    summary = export_audio_embeddings(wavs, args.model, args.out)
    print(f"wrote {summary['records']} records (d={summary['dimension']}) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clip-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-text", help="CLIP text embeddings -> TCLP")
    p.add_argument("--texts", required=True, help="file with one text per line")
    p.add_argument("--model", required=True, help="hub id or local directory of a CLIP text model")
    p.add_argument("--out", required=True, help="output .tclp path")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(func=cmd_export_text)

    p = sub.add_parser("export-prompts", help="token-level prompt matrices -> TCPM")
    p.add_argument("--template", required=True, help='prompt template containing "<keyword>" once')
    p.add_argument("--keywords", required=True, help="file with one keyword per line")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output .tcpm path")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(func=cmd_export_prompts)

    p = sub.add_parser("export-audio", help="CLAP audio embeddings -> TCLP")
    p.add_argument("--in", dest="in_path", required=True, help="WAV file or directory")
    p.add_argument("--model", required=True, help="hub id or local directory of a CLAP model")
    p.add_argument("--out", required=True, help="output .tclp path")
    p.set_defaults(func=cmd_export_audio)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
