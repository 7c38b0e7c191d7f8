"""Command line for one-shot embedding exports."""

from __future__ import annotations

import argparse
import json
import sys

from .exporter import ExportError, ExportJob, run_export


def _load_string_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not all(isinstance(t, str) for t in data):
        raise ExportError(f"{path}: expected a JSON array of strings")
    return data


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-export")
    parser.add_argument("--model", required=True, help="encoder id or local path")
    parser.add_argument("--labels", required=True, help="JSON array of label strings")
    parser.add_argument("--out", required=True, help="output embedding file")
    parser.add_argument("--include-special", action="store_true",
                        help="keep special tokens in each entry")
    parser.add_argument("--phrases", default=None,
                        help="JSON array of extra seed phrases to export")
    args = parser.parse_args(argv)
    try:
        labels = _load_string_list(args.labels)
        phrases = _load_string_list(args.phrases) if args.phrases else []
        job = ExportJob(
            model_id=args.model,
            label_texts=labels,
            output_path=args.out,
            include_special_tokens=args.include_special,
            seed_phrases=phrases,
        )
        out = run_export(job)
    except (ExportError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(labels) + len(phrases)} entries to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
