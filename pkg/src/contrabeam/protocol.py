"""Wire protocol for out-of-process scorers.

Framing is newline-delimited JSON: one UTF-8 object per line, no length
prefixes. A session is one ordered request/response stream; request ids are
assigned by the client and must be strictly increasing, and the server
answers in request order, so pipelining several requests before reading any
response is safe.

Request kinds and payloads::

    {"id": N, "kind": "handshake"}
    {"id": N, "kind": "tokenize", "text": str, "role": "source"|"target"}
    {"id": N, "kind": "detokenize", "tokens": [int, ...]}
    {"id": N, "kind": "next_logprobs",
     "context": {"source_text": str, "source_lang": str, "target_lang": str,
                 "mode": "mt"|"llm", "prompt_variant": str (optional)},
     "prefixes": [[int, ...], ...], "top_k": int (optional, 0 = dense)}

Responses repeat the request id and kind. A handshake answer carries
vocab_size, the special token ids, a supports map, and optionally the
model's language indicator token ids. next_logprobs answers carry one
result per prefix: either {"dense": [logprob, ...]} over the full
vocabulary or {"sparse": {"<token_id>": logprob, ...}, "other_mass": p}
where other_mass is the leftover probability, spread uniformly over
unlisted ids during densification. Log-probabilities are capped below at
LOGPROB_FLOOR so that no line ever contains a non-finite number. Any
request may be answered with {"id": N, "kind": "error", "message": str}.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import socket
import subprocess
from typing import Mapping, Sequence

import numpy as np

from .core import ConditioningContext, EngineError, ScorerError
from .scoring import Scorer, ScorerDescriptor, StepDistribution

LOGPROB_FLOOR = -1.0e4
EXP_SUM_SLACK = 1e-4  # exp-sum of a response distribution may exceed 1 by this
EXP_SUM_SHORTFALL = 1e-3  # ... and fall short of 1 by this
DENSE_VOCAB_LIMIT = 4096  # vocabularies up to this size default to dense
DEFAULT_TOP_K = 256

KINDS = ("handshake", "tokenize", "detokenize", "next_logprobs", "error")


class ProtocolError(EngineError):
    """Malformed or out-of-contract wire traffic."""


# -- message validation ------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ProtocolError(message)


def parse_message(line: str, line_number: int | None = None) -> dict:
    """Parse one frame, tagging errors with the 1-based line number."""
    where = f"line {line_number}: " if line_number is not None else ""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"{where}not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError(f"{where}frame must be a JSON object")
    if not isinstance(msg.get("id"), int):
        raise ProtocolError(f"{where}frame missing integer id")
    if msg.get("kind") not in KINDS:
        raise ProtocolError(f"{where}unknown kind {msg.get('kind')!r}")
    return msg


def serialize_message(msg: Mapping) -> str:
    """One JSON line, stable key order, no trailing newline."""
    try:
        out = json.dumps(msg, sort_keys=True, separators=(",", ":"),
                         allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"frame not serializable: {exc}") from exc
    if "\n" in out:
        raise ProtocolError("serialized frame must not contain newlines")
    return out


def context_to_wire(ctx: ConditioningContext) -> dict:
    wire = {"source_text": ctx.source_text, "source_lang": ctx.source_lang,
            "target_lang": ctx.target_lang, "mode": ctx.mode}
    if ctx.prompt_variant:
        wire["prompt_variant"] = ctx.prompt_variant
    return wire


def context_from_wire(payload: Mapping) -> ConditioningContext:
    try:
        return ConditioningContext(
            source_text=payload["source_text"],
            source_lang=payload["source_lang"],
            target_lang=payload["target_lang"],
            mode=payload.get("mode", "mt"),
            prompt_variant=payload.get("prompt_variant"))
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"bad context descriptor: {exc}") from exc


def densify_result(result: Mapping, vocab_size: int) -> StepDistribution:
    """Turn one next_logprobs result into a dense probability vector."""
    if "dense" in result:
        lp = np.asarray(result["dense"], dtype=np.float64)
        _require(lp.shape == (vocab_size,),
                 f"dense result has length {lp.size}, expected {vocab_size}")
        _require(bool(np.all(lp <= 1e-9)), "logprobs must be <= 0")
        probs = np.exp(lp)
    elif "sparse" in result:
        sparse = result["sparse"]
        _require(isinstance(sparse, Mapping), "sparse result must be a map")
        probs = np.zeros(vocab_size, dtype=np.float64)
        listed = np.zeros(vocab_size, dtype=bool)
        for key, lp in sparse.items():
            try:
                token_id = int(key)
            except ValueError:
                raise ProtocolError(f"sparse token id {key!r} not an integer")
            _require(0 <= token_id < vocab_size,
                     f"sparse token id {token_id} out of range")
            _require(lp <= 1e-9, "logprobs must be <= 0")
            probs[token_id] = np.exp(lp)
            listed[token_id] = True
        other = float(result.get("other_mass", 0.0))
        _require(0.0 <= other <= 1.0 + EXP_SUM_SLACK,
                 f"other_mass {other} outside [0, 1]")
        unlisted = int(vocab_size - listed.sum())
        if unlisted and other > 0.0:
            probs[~listed] = other / unlisted
    else:
        raise ProtocolError("result must contain 'dense' or 'sparse'")
    total = float(probs.sum())
    _require(total <= 1.0 + EXP_SUM_SLACK,
             f"distribution exp-sum {total} exceeds 1 + {EXP_SUM_SLACK}")
    _require(total >= 1.0 - EXP_SUM_SHORTFALL,
             f"distribution exp-sum {total} falls short of 1")
    return probs / total


def distribution_to_result(probs: np.ndarray, top_k: int = 0) -> dict:
    """Server-side inverse of densify_result."""
    with np.errstate(divide="ignore"):
        lp = np.log(probs)
    lp = np.minimum(np.maximum(lp, LOGPROB_FLOOR), 0.0)
    if top_k <= 0 or top_k >= probs.size:
        return {"dense": lp.tolist()}
    # ties broken toward lower token ids for reproducible transcripts
    order = np.lexsort((np.arange(probs.size), -lp))[:top_k]
    kept = sorted(int(i) for i in order)
    sparse = {str(i): float(lp[i]) for i in kept}
    other = 1.0 - float(probs[kept].sum())
    return {"sparse": sparse, "other_mass": max(0.0, other)}


# -- request batching --------------------------------------------------------


def batch_plan(items: Sequence[tuple[ConditioningContext, Sequence[int]]]
               ) -> list[tuple[ConditioningContext, list[tuple[int, ...]], list[list[int]]]]:
    """Group (context, prefix) queries into one request per context.

    Returns (context, unique prefixes in first-seen order, positions) per
    group, where positions[j] lists the item indices answered by prefix j;
    duplicate (context, prefix) pairs collapse into one query and fan out.
    """
    groups: dict[tuple, int] = {}
    plan: list[tuple[ConditioningContext, list[tuple[int, ...]], list[list[int]]]] = []
    seen: list[dict[tuple[int, ...], int]] = []
    for index, (ctx, prefix) in enumerate(items):
        key = (ctx.source_text, ctx.source_lang, ctx.target_lang, ctx.mode,
               ctx.prompt_variant or "")
        g = groups.get(key)
        if g is None:
            g = groups[key] = len(plan)
            plan.append((ctx, [], []))
            seen.append({})
        prefix = tuple(prefix)
        slot = seen[g].get(prefix)
        if slot is None:
            slot = seen[g][prefix] = len(plan[g][1])
            plan[g][1].append(prefix)
            plan[g][2].append([])
        plan[g][2][slot].append(index)
    return plan


# -- transports --------------------------------------------------------------


class Transport:
    """One ordered bidirectional line stream."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self, timeout: float | None = None) -> str:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class StdioTransport(Transport):
    """Line stream over a child process's stdin/stdout."""

    def __init__(self, command: str | Sequence[str]):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8")
        except OSError as exc:
            raise ProtocolError(f"cannot start scorer process {argv!r}: {exc}")

    def send_line(self, line: str) -> None:
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise ProtocolError(f"scorer process closed its input: {exc}")

    def recv_line(self, timeout: float | None = None) -> str:
        # The timeout path is only sound before any pipelined traffic (used
        # for the handshake): it polls the raw fd, not the text buffer.
        if timeout is not None:
            ready, _, _ = select.select([self._proc.stdout], [], [], timeout)
            if not ready:
                raise ProtocolError(f"timed out after {timeout}s waiting for scorer")
        line = self._proc.stdout.readline()
        if line == "":
            raise ProtocolError("scorer process closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport(Transport):
    """Line stream over a TCP connection."""

    def __init__(self, address: str, connect_timeout: float = 10.0):
        host, _, port = address.rpartition(":")
        try:
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                                  timeout=connect_timeout)
        except (OSError, ValueError) as exc:
            raise ProtocolError(f"cannot connect to scorer at {address!r}: {exc}")
        self._sock.settimeout(None)
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._file.write(line + "\n")
            self._file.flush()
        except OSError as exc:
            raise ProtocolError(f"scorer connection lost: {exc}")

    def recv_line(self, timeout: float | None = None) -> str:
        self._sock.settimeout(timeout)
        try:
            line = self._file.readline()
        except socket.timeout:
            raise ProtocolError(f"timed out after {timeout}s waiting for scorer")
        finally:
            self._sock.settimeout(None)
        if line == "":
            raise ProtocolError("scorer closed the connection")
        return line.rstrip("\n")

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


# -- client ------------------------------------------------------------------


class RemoteScorer(Scorer):
    """Scorer backed by a protocol session.

    Batches are planned with `batch_plan` (one request per conditioning
    context, duplicates deduplicated) and pipelined before any response is
    read. Not thread-safe; use one session per worker.
    """

    def __init__(self, transport: Transport, handshake_timeout: float = 30.0,
                 top_k: int | None = None):
        self._transport = transport
        self._next_id = 1
        self._line_number = 0
        hello = self._roundtrip({"kind": "handshake"},
                                timeout=handshake_timeout)
        try:
            self._descriptor = ScorerDescriptor(
                vocab_size=int(hello["vocab_size"]),
                bos_id=int(hello["bos_id"]), eos_id=int(hello["eos_id"]),
                unk_id=int(hello["unk_id"]), pad_id=int(hello["pad_id"]),
                supports_language_indicators=bool(
                    hello.get("supports", {}).get("language_indicators", False)),
                max_context_len=int(hello.get("max_context_len", 1024)),
                language_indicators={
                    code: int(i) for code, i in
                    (hello.get("language_indicators") or {}).items()})
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad handshake response: {exc}") from exc
        if self._descriptor.vocab_size <= 0:
            raise ProtocolError("handshake reported non-positive vocab_size")
        if top_k is None:
            top_k = (0 if self._descriptor.vocab_size <= DENSE_VOCAB_LIMIT
                     else DEFAULT_TOP_K)
        self._top_k = top_k

    # transport plumbing

    def _send(self, body: dict) -> int:
        request_id = self._next_id
        self._next_id += 1
        self._transport.send_line(serialize_message({"id": request_id, **body}))
        return request_id

    def _recv(self, request_id: int, timeout: float | None = None) -> dict:
        self._line_number += 1
        msg = parse_message(self._transport.recv_line(timeout=timeout),
                            self._line_number)
        if msg["id"] != request_id:
            raise ProtocolError(
                f"line {self._line_number}: response id {msg['id']} does not "
                f"match request id {request_id}")
        if msg["kind"] == "error":
            raise ScorerError(f"scorer error: {msg.get('message', '(no message)')}")
        return msg

    def _roundtrip(self, body: dict, timeout: float | None = None) -> dict:
        return self._recv(self._send(body), timeout=timeout)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "RemoteScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # scorer interface

    def descriptor(self) -> ScorerDescriptor:
        return self._descriptor

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        msg = self._roundtrip({"kind": "tokenize", "text": text, "role": role})
        return [int(t) for t in msg["tokens"]]

    def detokenize(self, tokens: Sequence[int]) -> str:
        msg = self._roundtrip({"kind": "detokenize",
                               "tokens": [int(t) for t in tokens]})
        return str(msg["text"])

    def next_distribution(self, ctx: ConditioningContext,
                          prefix: Sequence[int]) -> StepDistribution:
        return self.batch_next_distributions([(ctx, prefix)])[0]

    def batch_next_distributions(
            self, items: Sequence[tuple[ConditioningContext, Sequence[int]]]
    ) -> list[StepDistribution]:
        plan = batch_plan(items)
        request_ids = [
            self._send({"kind": "next_logprobs",
                        "context": context_to_wire(ctx),
                        "prefixes": [list(p) for p in prefixes],
                        "top_k": self._top_k})
            for ctx, prefixes, _ in plan]
        out: list[StepDistribution | None] = [None] * len(items)
        vocab_size = self._descriptor.vocab_size
        for request_id, (ctx, prefixes, positions) in zip(request_ids, plan):
            msg = self._recv(request_id)
            results = msg.get("results")
            if not isinstance(results, list) or len(results) != len(prefixes):
                raise ProtocolError(
                    f"expected {len(prefixes)} results, got "
                    f"{len(results) if isinstance(results, list) else results!r}")
            for result, targets in zip(results, positions):
                probs = densify_result(result, vocab_size)
                for index in targets:
                    out[index] = probs
        return out  # type: ignore[return-value]


def connect(spec: str, handshake_timeout: float = 30.0) -> RemoteScorer:
    """Open a session from a transport spec.

    ``stdio:<command>`` starts a child process; ``tcp:<host>:<port>``
    connects to a listening server.
    """
    scheme, _, rest = spec.partition(":")
    if scheme == "stdio" and rest:
        return RemoteScorer(StdioTransport(rest), handshake_timeout)
    if scheme == "tcp" and rest:
        return RemoteScorer(TcpTransport(rest), handshake_timeout)
    raise ProtocolError(f"bad transport spec {spec!r}; "
                        "expected stdio:<command> or tcp:<host>:<port>")


# -- server ------------------------------------------------------------------


def _handshake_body(descriptor: ScorerDescriptor) -> dict:
    body = {
        "vocab_size": descriptor.vocab_size,
        "bos_id": descriptor.bos_id, "eos_id": descriptor.eos_id,
        "unk_id": descriptor.unk_id, "pad_id": descriptor.pad_id,
        "max_context_len": descriptor.max_context_len,
        "supports": {
            "language_indicators": descriptor.supports_language_indicators,
            "llm_prompting": False,
        },
    }
    if descriptor.language_indicators:
        body["language_indicators"] = {
            code: int(i) for code, i in descriptor.language_indicators.items()}
    return body


def _answer(scorer: Scorer, msg: dict) -> dict:
    kind = msg["kind"]
    if kind == "handshake":
        return _handshake_body(scorer.descriptor())
    if kind == "tokenize":
        return {"tokens": scorer.tokenize(str(msg.get("text", "")),
                                          role=str(msg.get("role", "target")))}
    if kind == "detokenize":
        tokens = msg.get("tokens")
        _require(isinstance(tokens, list), "detokenize needs a token list")
        return {"text": scorer.detokenize([int(t) for t in tokens])}
    if kind == "next_logprobs":
        ctx = context_from_wire(msg.get("context") or {})
        prefixes = msg.get("prefixes")
        _require(isinstance(prefixes, list) and
                 all(isinstance(p, list) for p in prefixes),
                 "next_logprobs needs a list of prefix arrays")
        top_k = int(msg.get("top_k", 0))
        dists = scorer.batch_next_distributions(
            [(ctx, [int(t) for t in p]) for p in prefixes])
        return {"results": [distribution_to_result(d, top_k) for d in dists]}
    raise ProtocolError(f"cannot serve frame of kind {kind!r}")


def serve(scorer: Scorer, reader, writer) -> None:
    """Answer frames from `reader` on `writer` until EOF.

    Scorer and malformed-frame errors are answered in-band and the session
    continues; only transport failure ends the loop early.
    """
    last_id = 0
    for line_number, line in enumerate(iter(reader.readline, ""), start=1):
        if line.strip() == "":
            continue
        request_id = 0
        try:
            msg = parse_message(line.rstrip("\n"), line_number)
            request_id = msg["id"]
            if request_id <= last_id:
                raise ProtocolError(
                    f"line {line_number}: request id {request_id} not "
                    f"greater than {last_id}")
            last_id = request_id
            body = _answer(scorer, msg)
            response = {"id": request_id, "kind": msg["kind"], **body}
        except (ProtocolError, ScorerError, EngineError, ValueError) as exc:
            response = {"id": request_id, "kind": "error", "message": str(exc)}
        writer.write(serialize_message(response) + "\n")
        writer.flush()
