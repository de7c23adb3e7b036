"""CLI: annotate raw transcripts into engine-ready record files."""

from __future__ import annotations

import argparse
import sys

from .annotate import bridge_annotate
from .config import BridgeConfig, BridgeModelError
from .transcript import TranscriptError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convmem-bridge",
        description="annotate dialogue transcripts into structured memory records")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("annotate", help="transcript file -> record file")
    p.add_argument("transcript")
    p.add_argument("out")
    p.add_argument("--parser", default="builtin-svo")
    p.add_argument("--coref", default="builtin-chains")
    p.add_argument("--discourse", default="builtin-connectives")
    p.add_argument("--embedder", default="hashgram")
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--gap-hours", type=int, default=36)
    p.add_argument("--discourse-map", dest="discourse_map")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig(
            parser=args.parser,
            coref=args.coref,
            discourse=args.discourse,
            embedder=args.embedder,
            dim=args.dim,
            batch_size=args.batch_size,
            gap_hours=args.gap_hours,
            discourse_map_path=args.discourse_map,
        )
        count = bridge_annotate(args.transcript, args.out, config)
    except (BridgeModelError, TranscriptError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
