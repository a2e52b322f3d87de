"""Server-side wire handling, as specified in the engine's PROTOCOL.md.

Frames are newline-delimited JSON objects in canonical form (sorted keys,
compact separators, no NaN). Next-token distributions go out either dense
(one logprob per vocabulary id) or sparse (the top-k ids plus the leftover
probability in other_mass); log-probabilities are clamped to
[LOGPROB_FLOOR, 0] so no frame ever carries a non-finite number.
"""

from __future__ import annotations

import json
from typing import Mapping

import numpy as np

LOGPROB_FLOOR = -1.0e4
DENSE_VOCAB_LIMIT = 4096  # clients default to dense at or below this size
DEFAULT_TOP_K = 256

KINDS = ("handshake", "tokenize", "detokenize", "next_logprobs", "error")


class WireError(ValueError):
    """Malformed or out-of-contract frame."""


def parse_frame(line: str, line_number: int | None = None) -> dict:
    """Parse one frame, tagging errors with the 1-based line number."""
    where = f"line {line_number}: " if line_number is not None else ""
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"{where}not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise WireError(f"{where}frame must be a JSON object")
    if not isinstance(msg.get("id"), int):
        raise WireError(f"{where}frame missing integer id")
    if msg.get("kind") not in KINDS:
        raise WireError(f"{where}unknown kind {msg.get('kind')!r}")
    return msg


def dump_frame(msg: Mapping) -> str:
    """One JSON line in canonical form, no trailing newline."""
    try:
        out = json.dumps(msg, sort_keys=True, separators=(",", ":"),
                         allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise WireError(f"frame not serializable: {exc}") from exc
    if "\n" in out:
        raise WireError("serialized frame must not contain newlines")
    return out


def pack_distribution(probs: np.ndarray, top_k: int = 0) -> dict:
    """Shape one probability row into a dense or sparse wire result.

    Sparse results keep the `top_k` most probable ids — ties broken toward
    lower ids so transcripts are reproducible — and report the remaining
    probability as other_mass for the client to spread over the rest.
    """
    probs = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore"):
        lp = np.log(probs)
    lp = np.minimum(np.maximum(lp, LOGPROB_FLOOR), 0.0)
    if top_k <= 0 or top_k >= probs.size:
        return {"dense": lp.tolist()}
    order = np.lexsort((np.arange(probs.size), -lp))[:top_k]
    kept = sorted(int(i) for i in order)
    sparse = {str(i): float(lp[i]) for i in kept}
    other = 1.0 - float(probs[kept].sum())
    return {"sparse": sparse, "other_mass": max(0.0, other)}


def parse_context(payload) -> dict:
    """Validate a next_logprobs context descriptor into a plain dict."""
    if not isinstance(payload, Mapping):
        raise WireError("bad context descriptor: not an object")
    try:
        ctx = {"source_text": str(payload["source_text"]),
               "source_lang": str(payload["source_lang"]),
               "target_lang": str(payload["target_lang"]),
               "mode": str(payload.get("mode", "mt")),
               "prompt_variant": payload.get("prompt_variant")}
    except KeyError as exc:
        raise WireError(f"bad context descriptor: missing {exc}") from exc
    if ctx["mode"] not in ("mt", "llm"):
        raise WireError(f"bad context descriptor: unknown mode {ctx['mode']!r}")
    if ctx["prompt_variant"] is not None:
        ctx["prompt_variant"] = str(ctx["prompt_variant"])
    return ctx
