"""Scorer abstraction and the exact-oracle table scorer.

A scorer maps (conditioning context, target prefix) to a next-token
probability distribution over its vocabulary. Distributions are dense numpy
vectors; the wire protocol densifies sparse responses before they reach the
decoder, so everything downstream sees the same representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (ConditioningContext, ConfigError, ScorerError, Vocabulary,
                   make_vocabulary)

# A StepDistribution is a 1-D float vector over the vocabulary whose entries
# lie in [0, 1] and sum to 1 within DIST_TOL.
StepDistribution = np.ndarray

DIST_TOL = 1e-6


def validate_distribution(probs: np.ndarray, vocab_size: int) -> np.ndarray:
    """Check StepDistribution invariants, returning the validated vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (vocab_size,):
        raise ScorerError(
            f"distribution has length {probs.shape}, expected ({vocab_size},)")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ScorerError("distribution entries must lie in [0, 1]")
    total = float(probs.sum())
    if abs(total - 1.0) > DIST_TOL:
        raise ScorerError(f"distribution sums to {total}, expected 1 within {DIST_TOL}")
    return probs


@dataclass(frozen=True)
class ScorerDescriptor:
    """Static facts a decoder needs about a scorer."""

    vocab_size: int
    bos_id: int
    eos_id: int
    unk_id: int
    pad_id: int
    supports_language_indicators: bool = False
    max_context_len: int = 1024
    language_indicators: Mapping[str, int] = field(default_factory=dict)


class Scorer:
    """Base class for next-token scorers.

    Scorers are immutable after construction and usable from multiple threads.
    Subclasses implement `descriptor` and `next_distribution`; the default
    batch implementation maps sequentially and preserves order.
    """

    def descriptor(self) -> ScorerDescriptor:
        raise NotImplementedError

    def next_distribution(self, ctx: ConditioningContext,
                          prefix: Sequence[int]) -> StepDistribution:
        raise NotImplementedError

    def batch_next_distributions(
            self, items: Sequence[tuple[ConditioningContext, Sequence[int]]]
    ) -> list[StepDistribution]:
        """Elementwise `next_distribution` over `items`, order preserved."""
        out = []
        for i, (ctx, prefix) in enumerate(items):
            try:
                out.append(self.next_distribution(ctx, prefix))
            except ScorerError as e:
                raise ScorerError(f"item {i}: {e}") from e
        return out

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        raise NotImplementedError

    def detokenize(self, tokens: Sequence[int]) -> str:
        raise NotImplementedError

    def _check_context_len(self, prefix: Sequence[int]) -> None:
        if len(prefix) >= self.descriptor().max_context_len:
            raise ScorerError("context overflow")


class VocabScorer(Scorer):
    """Scorer carrying an in-process word vocabulary."""

    vocab: Vocabulary

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        return self.vocab.tokenize(text)

    def detokenize(self, tokens: Sequence[int]) -> str:
        return self.vocab.detokenize(tokens)


def _context_key(ctx: ConditioningContext) -> tuple[str, str, str]:
    return (ctx.source_text, ctx.target_lang, ctx.prompt_variant or "")


class TableScorer(VocabScorer):
    """Exact lookup scorer: (context, prefix) -> stored distribution.

    Used as the test oracle; every stored vector is validated on construction.
    A `default` distribution, when given, answers lookups missing from the
    table; without one, a missing key is an error.
    """

    def __init__(self, vocab: Vocabulary,
                 table: Mapping[tuple[tuple[str, str, str], tuple[int, ...]], np.ndarray],
                 default: np.ndarray | None = None,
                 max_context_len: int = 1024,
                 supports_language_indicators: bool = False):
        self.vocab = vocab
        self._table = {
            key: validate_distribution(np.array(probs, dtype=np.float64), len(vocab))
            for key, probs in table.items()
        }
        self._default = (None if default is None else
                         validate_distribution(np.array(default, dtype=np.float64),
                                               len(vocab)))
        self._max_context_len = max_context_len
        self._supports_indicators = supports_language_indicators

    def descriptor(self) -> ScorerDescriptor:
        v = self.vocab
        return ScorerDescriptor(
            vocab_size=len(v), bos_id=v.bos_id, eos_id=v.eos_id,
            unk_id=v.unk_id, pad_id=v.pad_id,
            supports_language_indicators=self._supports_indicators,
            max_context_len=self._max_context_len,
            language_indicators=dict(v.language_indicators))

    def next_distribution(self, ctx: ConditioningContext,
                          prefix: Sequence[int]) -> StepDistribution:
        self._check_context_len(prefix)
        key = (_context_key(ctx), tuple(prefix))
        dist = self._table.get(key)
        if dist is None:
            dist = self._default
        if dist is None:
            raise ScorerError(
                f"no distribution for context {key[0]!r} with prefix {key[1]}")
        return dist

    @classmethod
    def from_json(cls, doc: dict | str) -> "TableScorer":
        """Load a table scorer from its JSON document (or a path to one).

        Schema::

            {"vocab": {"words": [...], "language_indicators": {code: surface}},
             "default": [p, ...] | null,
             "max_context_len": int,
             "entries": [{"source_text": str, "target_lang": str,
                          "prompt_variant": str?, "prefix": [int, ...],
                          "probs": [p, ...]}, ...]}
        """
        if isinstance(doc, str):
            with open(doc, "r", encoding="utf-8") as f:
                doc = json.load(f)
        try:
            vocab = make_vocabulary(doc["vocab"]["words"],
                                    doc["vocab"].get("language_indicators"))
            table = {}
            for e in doc["entries"]:
                key = ((e["source_text"], e["target_lang"], e.get("prompt_variant", "")),
                       tuple(e["prefix"]))
                table[key] = np.array(e["probs"], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed table scorer document: {exc}") from exc
        return cls(vocab, table, default=doc.get("default"),
                   max_context_len=int(doc.get("max_context_len", 1024)),
                   supports_language_indicators=bool(
                       doc["vocab"].get("language_indicators")))

    def to_json(self) -> dict:
        """Serialize to the `from_json` schema."""
        specials = self.vocab.special_ids
        words = [s for i, s in enumerate(self.vocab.entries) if i not in specials]
        indicator_surfaces = {code: self.vocab.entries[i]
                              for code, i in self.vocab.language_indicators.items()}
        entries = []
        for ((src, tgt, variant), prefix), probs in sorted(
                self._table.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            entry = {"source_text": src, "target_lang": tgt,
                     "prefix": list(prefix), "probs": probs.tolist()}
            if variant:
                entry["prompt_variant"] = variant
            entries.append(entry)
        return {
            "vocab": {"words": words, "language_indicators": indicator_surfaces},
            "default": None if self._default is None else self._default.tolist(),
            "max_context_len": self._max_context_len,
            "entries": entries,
        }
