"""Entry point: ``python -m latbridge --table FILE`` or ``--hf MODEL_ID``."""

import argparse
import sys

from .server import serve


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="latbridge")
    group = ap.add_mutually_exclusive_group(required=True)
    group.add_argument("--table", help="table-model JSON file to replay")
    group.add_argument("--hf", help="pretrained seq2seq checkpoint id or path")
    ap.add_argument("--top-k", type=int, default=5, dest="top_k")
    args = ap.parse_args(argv)
    if args.table:
        from .backends import TableBackend
        try:
            backend = TableBackend(args.table)
        except (OSError, KeyError, ValueError) as e:
            print(f"error: cannot load table {args.table}: {e}", file=sys.stderr)
            return 1
    else:
        from .backends import HFBackend
        try:
            backend = HFBackend(args.hf)
        except Exception as e:  # model loading failures are diverse
            print(f"error: cannot load model {args.hf}: {e}", file=sys.stderr)
            return 1
    return serve(backend, top_k=args.top_k)


if __name__ == "__main__":
    sys.exit(main())
