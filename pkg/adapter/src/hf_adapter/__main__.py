"""Command-line entry point: serve one model over the wire protocol.

The configuration arrives as JSON — a literal object or a path to a file
holding one — and the server speaks on stdio unless --tcp is given. Run
as ``python -m hf_adapter`` or via the installed ``hf-adapter`` script.
"""

from __future__ import annotations

import argparse
import sys

from .config import AdapterError, load_config
from .server import serve_model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hf-adapter",
        description="Serve a translation model or prompted LLM over the "
                    "newline-delimited JSON scorer protocol.")
    parser.add_argument(
        "--config", required=True,
        help="adapter configuration as literal JSON, or a path (optionally "
             "prefixed with @) to a JSON file")
    parser.add_argument("--tcp", metavar="HOST:PORT",
                        help="listen on TCP instead of stdio")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except AdapterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    serve_model(config, tcp=args.tcp)
    return 0


if __name__ == "__main__":
    sys.exit(main())
