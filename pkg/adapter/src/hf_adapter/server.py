"""The request loop: answer wire frames from a backend.

Request ids must be strictly increasing; every request gets exactly one
reply, in order. Anything that goes wrong below the transport — a frame
that does not parse, a model that will not load, an inference failure —
is answered in-band as an error frame and the session continues, so one
bad request never takes the server down. Model loading is deferred to the
first request, which is how a load failure becomes a handshake error
reply instead of a dead process.
"""

from __future__ import annotations

import io
import socketserver
import sys
from typing import Callable

from .backends import make_backend
from .config import AdapterConfig
from .wire import WireError, dump_frame, pack_distribution, parse_context, \
    parse_frame


class _LazyBackend:
    """Build the backend on first use so load errors answer the handshake."""

    def __init__(self, factory: Callable):
        self._factory = factory
        self._backend = None

    def get(self):
        if self._backend is None:
            self._backend = self._factory()
        return self._backend


def _answer(backend, msg: dict) -> dict:
    kind = msg["kind"]
    if kind == "handshake":
        return backend.describe()
    if kind == "tokenize":
        return {"tokens": backend.tokenize(str(msg.get("text", "")),
                                           role=str(msg.get("role", "target")))}
    if kind == "detokenize":
        tokens = msg.get("tokens")
        if not isinstance(tokens, list):
            raise WireError("detokenize needs a token list")
        return {"text": backend.detokenize([int(t) for t in tokens])}
    if kind == "next_logprobs":
        context = parse_context(msg.get("context"))
        prefixes = msg.get("prefixes")
        if not isinstance(prefixes, list) or \
                not all(isinstance(p, list) for p in prefixes):
            raise WireError("next_logprobs needs a list of prefix arrays")
        prefixes = [[int(t) for t in p] for p in prefixes]
        top_k = int(msg.get("top_k", backend.default_top_k))
        rows = backend.next_rows(context, prefixes)
        return {"results": [pack_distribution(row, top_k) for row in rows]}
    raise WireError(f"cannot serve frame of kind {kind!r}")


def handle_session(get_backend: Callable, reader, writer) -> None:
    """Serve one session: frames in from `reader`, replies out on `writer`.

    `get_backend` is a zero-argument callable returning the backend; it is
    invoked per request (cheap once loaded) so that a failing model load
    surfaces as an error reply every time rather than once.
    """
    last_id = 0
    for line_number, line in enumerate(iter(reader.readline, ""), start=1):
        if line.strip() == "":
            continue
        request_id = 0
        try:
            msg = parse_frame(line.rstrip("\n"), line_number)
            request_id = msg["id"]
            if request_id <= last_id:
                raise WireError(
                    f"line {line_number}: request id {request_id} not "
                    f"greater than {last_id}")
            last_id = request_id
            body = _answer(get_backend(), msg)
            response = {"id": request_id, "kind": msg["kind"], **body}
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as exc:
            response = {"id": request_id, "kind": "error", "message": str(exc)}
        writer.write(dump_frame(response) + "\n")
        writer.flush()


def serve_tcp(get_backend: Callable, address: str) -> None:
    """Listen on HOST:PORT and serve each connection as one session."""
    host, _, port = address.rpartition(":")

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            reader = io.TextIOWrapper(self.rfile, encoding="utf-8")
            writer = io.TextIOWrapper(self.wfile, encoding="utf-8",
                                      write_through=True)
            handle_session(get_backend, reader, writer)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host or "127.0.0.1", int(port)), Handler) as server:
        bound = server.server_address
        print(f"listening on {bound[0]}:{bound[1]}", file=sys.stderr,
              flush=True)
        server.serve_forever()


def serve_model(config: AdapterConfig, tcp: str | None = None,
                reader=None, writer=None) -> None:
    """Serve one configured model over stdio (default) or TCP."""
    lazy = _LazyBackend(lambda: make_backend(config))
    if tcp:
        serve_tcp(lazy.get, tcp)
    else:
        handle_session(lazy.get, reader or sys.stdin, writer or sys.stdout)
