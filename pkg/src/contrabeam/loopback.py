"""Reference protocol server backed by in-process scorers.

Serves a table scorer, the synthetic world, or a trivial echo model over
stdio (default) or TCP, so protocol sessions can be tested end to end
without any model runtime. Run as ``python -m contrabeam.loopback``.
"""

from __future__ import annotations

import argparse
import io
import socketserver
import sys

import numpy as np

from .core import ConditioningContext, make_vocabulary
from .protocol import serve
from .scoring import Scorer, ScorerDescriptor, StepDistribution, TableScorer, VocabScorer
from .synthetic import toy_world


class EchoScorer(VocabScorer):
    """One-hot scorer: emits a fixed token `length` times, then EOS."""

    def __init__(self, fixed_id: int, length: int, vocab_size: int = 16):
        if vocab_size < 5:
            raise ValueError("echo vocab must hold the specials plus one word")
        self.vocab = make_vocabulary([f"w{i}" for i in range(vocab_size - 4)])
        if not 0 <= fixed_id < vocab_size:
            raise ValueError(f"fixed id {fixed_id} outside vocab")
        self._fixed = fixed_id
        self._length = length

    def descriptor(self) -> ScorerDescriptor:
        v = self.vocab
        return ScorerDescriptor(vocab_size=len(v), bos_id=v.bos_id,
                                eos_id=v.eos_id, unk_id=v.unk_id,
                                pad_id=v.pad_id)

    def next_distribution(self, ctx: ConditioningContext,
                          prefix) -> StepDistribution:
        self._check_context_len(prefix)
        out = np.zeros(len(self.vocab), dtype=np.float64)
        out[self._fixed if len(prefix) < self._length else self.vocab.eos_id] = 1.0
        return out


def build_scorer(args: argparse.Namespace) -> Scorer:
    if args.mode == "table":
        if not args.table:
            raise SystemExit("--table PATH is required in table mode")
        return TableScorer.from_json(args.table)
    if args.mode == "synthetic":
        return toy_world(h=args.h, c=args.c,
                         english_mix_weak=args.english_mix,
                         seed=args.world_seed)
    return EchoScorer(args.echo_id, args.echo_len, args.echo_vocab)


def _serve_tcp(scorer: Scorer, address: str) -> None:
    host, _, port = address.rpartition(":")

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            reader = io.TextIOWrapper(self.rfile, encoding="utf-8")
            writer = io.TextIOWrapper(self.wfile, encoding="utf-8",
                                      write_through=True)
            serve(scorer, reader, writer)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host or "127.0.0.1", int(port)), Handler) as server:
        bound = server.server_address
        print(f"listening on {bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
        server.serve_forever()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="contrabeam-loopback",
        description="Serve an in-process scorer over the wire protocol.")
    parser.add_argument("--mode", choices=("table", "synthetic", "echo"),
                        default="echo")
    parser.add_argument("--table", help="table scorer JSON path (table mode)")
    parser.add_argument("--h", type=float, default=0.3,
                        help="synthetic hallucination rate")
    parser.add_argument("--c", type=float, default=0.0,
                        help="synthetic copy rate")
    parser.add_argument("--english-mix", type=float, default=0.5,
                        help="synthetic English mass for the weak target")
    parser.add_argument("--world-seed", type=int, default=2024)
    parser.add_argument("--echo-id", type=int, default=4)
    parser.add_argument("--echo-len", type=int, default=3)
    parser.add_argument("--echo-vocab", type=int, default=16)
    parser.add_argument("--tcp", metavar="HOST:PORT",
                        help="listen on TCP instead of stdio")
    args = parser.parse_args(argv)

    scorer = build_scorer(args)
    if args.tcp:
        _serve_tcp(scorer, args.tcp)
    else:
        serve(scorer, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
