"""Evaluation metrics for hallucination and off-target analysis.

chrF2 here is the character n-gram F-score with beta=2, orders 1..6,
whitespace removed from character n-grams, no epsilon smoothing: per-segment
F values are averaged over the orders for which both hypothesis and
reference contribute at least one n-gram ("effective" orders). BLEU is the
usual modified n-gram precision geometric mean with brevity penalty and
exponential smoothing of zero counts; it operates on caller-tokenized
sequences, so any subword scheme can be plugged in upstream.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

from .core import ConfigError, DataError


@dataclass(frozen=True)
class ChrfParams:
    char_order: int = 6
    word_order: int = 0
    beta: float = 2.0
    remove_whitespace: bool = True
    eps_smoothing: bool = False

    def __post_init__(self):
        if (self.char_order, self.word_order, self.beta,
                self.remove_whitespace, self.eps_smoothing) != (6, 0, 2.0, True, False):
            raise ConfigError("chrF parameters are fixed: nc=6, nw=0, beta=2, "
                              "whitespace removed, eps smoothing off")


@dataclass(frozen=True)
class TngParams:
    n: int = 4
    t: int = 2

    def __post_init__(self):
        if self.n < 1 or self.t < 1:
            raise ConfigError("TNG parameters must satisfy n >= 1, t >= 1")


@dataclass
class EvalRecord:
    """Per-segment bundle of texts and computed metric values."""

    source: str
    hypothesis: str
    reference: str
    chrf2: float | None = None
    bleu: float | None = None
    tng_flag: bool | None = None
    predicted_lang: str | None = None

    def __post_init__(self):
        if self.chrf2 is not None and not 0.0 <= self.chrf2 <= 100.0:
            raise DataError(f"chrf2 out of range: {self.chrf2}")


class LanguageIdentifier(Protocol):
    """Anything that can classify a text's language with a confidence."""

    def classify(self, text: str) -> tuple[str, float]:
        ...


def _char_ngram_counts(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf2(hyp: str, ref: str, params: ChrfParams = ChrfParams()) -> float:
    """Sentence chrF2 in [0, 100].

    Both strings empty counts as a vacuous perfect match (100); an empty
    hypothesis against a non-empty reference scores 0.
    """
    h = "".join(hyp.split())
    r = "".join(ref.split())
    if not h and not r:
        return 100.0
    beta2 = params.beta ** 2
    total_f = 0.0
    effective_orders = 0
    for n in range(1, params.char_order + 1):
        hyp_counts = _char_ngram_counts(h, n)
        ref_counts = _char_ngram_counts(r, n)
        n_hyp = sum(hyp_counts.values())
        n_ref = sum(ref_counts.values())
        if n_hyp == 0 or n_ref == 0:
            continue
        matches = sum((hyp_counts & ref_counts).values())
        prec = matches / n_hyp
        rec = matches / n_ref
        denom = beta2 * prec + rec
        if denom > 0:
            total_f += (1 + beta2) * prec * rec / denom
        effective_orders += 1
    if effective_orders == 0:
        return 0.0
    return 100.0 * total_f / effective_orders


def _ngram_counts(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyp_tokens: Sequence, ref_tokens: Sequence, max_order: int = 4) -> float:
    """Sentence BLEU in [0, 100] on pre-tokenized sequences."""
    return corpus_bleu([(hyp_tokens, ref_tokens)], max_order)


def corpus_bleu(pairs: Sequence[tuple[Sequence, Sequence]],
                max_order: int = 4) -> float:
    """BLEU over aggregated modified n-gram counts.

    Zero match counts are smoothed exponentially (first zero halves the
    precision floor, the next quarters it, and so on); an order with no
    hypothesis n-grams at all yields 0.
    """
    if not pairs:
        raise DataError("corpus_bleu needs at least one pair")
    correct = [0] * max_order
    total = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp_tokens, ref_tokens in pairs:
        if len(ref_tokens) == 0:
            raise DataError("empty reference")
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp_tokens, n)
            ref_counts = _ngram_counts(ref_tokens, n)
            correct[n - 1] += sum((hyp_counts & ref_counts).values())
            total[n - 1] += sum(hyp_counts.values())
    if hyp_len == 0:
        return 0.0
    smooth = 1.0
    log_precision_sum = 0.0
    for n in range(1, max_order + 1):
        if total[n - 1] == 0:
            return 0.0
        if correct[n - 1] == 0:
            smooth *= 2.0
            precision = 1.0 / (smooth * total[n - 1])
        else:
            precision = correct[n - 1] / total[n - 1]
        log_precision_sum += math.log(precision)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision_sum / max_order)


def top_ngram_count(text: str, n: int) -> int:
    """Highest occurrence count of any word n-gram; 0 if fewer than n words."""
    words = text.split()
    if len(words) < n:
        return 0
    return max(_ngram_counts(words, n).values())


def tng_flag(src: str, hyp: str, params: TngParams = TngParams()) -> bool:
    """True when the hypothesis' top word n-gram count exceeds the source's
    by at least t: the oscillatory-hallucination detector."""
    return top_ngram_count(hyp, params.n) >= top_ngram_count(src, params.n) + params.t


def hallucination_rate(records: Sequence[EvalRecord],
                       threshold: float = 10.0) -> float:
    """Proportion of records with chrF2 below `threshold`."""
    if not records:
        raise DataError("hallucination_rate needs at least one record")
    for r in records:
        if r.chrf2 is None:
            raise DataError("chrf2 not computed on all records")
    return sum(1 for r in records if r.chrf2 < threshold) / len(records)


@dataclass(frozen=True)
class OffTargetCounts:
    english: int
    source: int
    other: int

    def as_dict(self) -> dict:
        return {"en": self.english, "src": self.source, "other": self.other}


def off_target_counts(records: Sequence[EvalRecord], target: str, source: str,
                      lid: LanguageIdentifier,
                      english: str = "en") -> OffTargetCounts:
    """Count hypotheses not in the target language, bucketed into English,
    source language, and everything else.

    Uses a record's predicted_lang when already set, otherwise classifies
    with `lid`. When English is also the source language, English output is
    counted in the English bucket.
    """
    n_en = n_src = n_other = 0
    for r in records:
        lang = r.predicted_lang
        if lang is None:
            lang, _ = lid.classify(r.hypothesis)
        if lang == target:
            continue
        if lang == english:
            n_en += 1
        elif lang == source:
            n_src += 1
        else:
            n_other += 1
    return OffTargetCounts(n_en, n_src, n_other)


class NaiveBayesLanguageIdentifier:
    """Character-frequency naive Bayes classifier.

    Adequate for toy corpora whose languages have distinctive character
    statistics; real evaluations should plug in an external identifier.
    """

    UNKNOWN = "und"

    def __init__(self, log_probs: dict[str, dict[str, float]],
                 fallback_logp: dict[str, float], order: int = 1):
        self._log_probs = log_probs
        self._fallback = fallback_logp
        self._order = order

    @classmethod
    def train(cls, samples: dict[str, str], order: int = 1,
              alpha: float = 1.0) -> "NaiveBayesLanguageIdentifier":
        """Fit per-language character n-gram log-probabilities with add-alpha
        smoothing over the union alphabet."""
        if not samples:
            raise ConfigError("need at least one language sample")
        alphabet = set()
        counts: dict[str, Counter] = {}
        for lang, text in samples.items():
            grams = _char_ngram_counts("".join(text.split()), order)
            counts[lang] = grams
            alphabet.update(grams)
        v = len(alphabet) + 1  # reserve one slot for unseen n-grams
        log_probs = {}
        fallback = {}
        for lang, grams in counts.items():
            total = sum(grams.values()) + alpha * v
            log_probs[lang] = {g: math.log((c + alpha) / total)
                               for g, c in grams.items()}
            fallback[lang] = math.log(alpha / total)
        return cls(log_probs, fallback, order)

    def classify(self, text: str) -> tuple[str, float]:
        squeezed = "".join(text.split())
        if len(squeezed) < self._order:
            return (self.UNKNOWN, 0.0)
        grams = _char_ngram_counts(squeezed, self._order)
        scores = {}
        for lang, table in self._log_probs.items():
            fallback = self._fallback[lang]
            scores[lang] = sum(c * table.get(g, fallback)
                               for g, c in grams.items())
        best = min(scores, key=lambda lang: (-scores[lang], lang))
        # Normalized posterior under a uniform prior.
        shift = scores[best]
        z = sum(math.exp(s - shift) for s in scores.values())
        return (best, 1.0 / z)
