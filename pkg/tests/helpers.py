"""Independent reference implementations and instance builders for tests.

Everything here is deliberately written from first principles (plain Python,
no imports from the modules under test beyond constructors), so agreement
between these oracles and the package is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from contrabeam.core import ConditioningContext, ContrastiveObjective, Rng, make_vocabulary
from contrabeam.scoring import TableScorer

EPS = 1e-12


# -- reference standard beam search (NLL, no contrastive terms) --------------


def reference_beam_search(scorer, ctx, beam_size, max_len):
    """Plain negative-log-likelihood beam search over a single context.

    Mirrors the documented semantics: EOS retires a hypothesis, candidates
    (finished included) compete on (score, tokens), hypotheses reaching
    max_len are kept as truncated. Returns [(tokens, score, truncated)]
    ranked ascending.
    """
    eos = scorer.descriptor().eos_id
    vocab_size = scorer.descriptor().vocab_size
    live = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float, bool]] = []
    while live:
        candidates = [(s, t, True, tr) for t, s, tr in finished]
        for tokens, score in live:
            probs = scorer.next_distribution(ctx, tokens)
            for token in range(vocab_size):
                step = -math.log(max(EPS, float(probs[token])))
                new_tokens = tokens + (token,)
                new_score = score + step
                if token == eos:
                    candidates.append((new_score, new_tokens, True, False))
                elif len(new_tokens) >= max_len:
                    candidates.append((new_score, new_tokens, True, True))
                else:
                    candidates.append((new_score, new_tokens, False, False))
        candidates.sort(key=lambda c: (c[0], c[1]))
        top = candidates[:beam_size]
        finished = [(t, s, tr) for s, t, done, tr in top if done]
        live = [(t, s) for s, t, done, tr in top if not done]
    return sorted(finished, key=lambda f: (f[1], f[0]))


# -- reference exhaustive contrastive minimizer -------------------------------


def reference_contrastive_score(scorer, objective, tokens, eps=EPS):
    """Cumulative s(Y,X) of a fixed sequence, computed step by step."""
    positive = objective.positive
    total = 0.0
    for i, token in enumerate(tokens):
        prefix = tokens[:i]
        p = float(scorer.next_distribution(positive, prefix)[token])
        inner = p
        for ctx, weight in objective.negatives:
            inner -= weight * float(scorer.next_distribution(ctx, prefix)[token])
        total += -math.log(max(eps, inner))
    return total


def reference_exhaustive(scorer, objective, max_len, eps=EPS):
    """Best EOS-terminated sequence of length <= max_len by brute force."""
    eos = scorer.descriptor().eos_id
    vocab_size = scorer.descriptor().vocab_size
    other = [t for t in range(vocab_size) if t != eos]
    best = None
    for body_len in range(max_len):
        for body in itertools.product(other, repeat=body_len):
            tokens = body + (eos,)
            score = reference_contrastive_score(scorer, objective, tokens, eps)
            key = (score, tokens)
            if best is None or key < best:
                best = key
    return best[1], best[0]


# -- random exact-table instances ---------------------------------------------


def full_table_instance(rng: Rng, n_words: int, max_len: int,
                        lambda_src: float = 0.0, lambda_lang: float = 0.0):
    """TableScorer covering every reachable prefix, plus an objective.

    The table answers three contexts (positive, a different source text, a
    different target language) for every EOS-free prefix shorter than
    max_len, with strictly positive random distributions.
    """
    vocab = make_vocabulary([f"t{i}" for i in range(n_words)])
    vocab_size = len(vocab)
    positive = ConditioningContext("src one", "aa", "bb")
    alt_source = ConditioningContext("src two", "aa", "bb")
    alt_lang = ConditioningContext("src one", "aa", "en")
    table = {}
    tokens = [t for t in range(vocab_size) if t != vocab.eos_id]
    for ctx in (positive, alt_source, alt_lang):
        key = (ctx.source_text, ctx.target_lang, "")
        for length in range(max_len):
            for prefix in itertools.product(tokens, repeat=length):
                probs = np.array([rng.uniform() + 0.05
                                  for _ in range(vocab_size)])
                table[(key, prefix)] = probs / probs.sum()
    scorer = TableScorer(vocab, table)
    negatives = []
    if lambda_src:
        negatives.append((alt_source, lambda_src))
    if lambda_lang:
        negatives.append((alt_lang, lambda_lang))
    objective = ContrastiveObjective(positive, tuple(negatives))
    return scorer, objective


# -- independent chrF ----------------------------------------------------------


def chrf_brute(hyp: str, ref: str, max_order: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-beta by direct counting (whitespace removed)."""
    hyp_chars = "".join(hyp.split())
    ref_chars = "".join(ref.split())
    if not hyp_chars and not ref_chars:
        return 100.0
    scores = []
    for order in range(1, max_order + 1):
        hyp_grams: dict[str, int] = {}
        for i in range(len(hyp_chars) - order + 1):
            gram = hyp_chars[i:i + order]
            hyp_grams[gram] = hyp_grams.get(gram, 0) + 1
        ref_grams: dict[str, int] = {}
        for i in range(len(ref_chars) - order + 1):
            gram = ref_chars[i:i + order]
            ref_grams[gram] = ref_grams.get(gram, 0) + 1
        hyp_total = sum(hyp_grams.values())
        ref_total = sum(ref_grams.values())
        if hyp_total == 0 or ref_total == 0:
            continue
        overlap = sum(min(count, ref_grams.get(gram, 0))
                      for gram, count in hyp_grams.items())
        precision = overlap / hyp_total
        recall = overlap / ref_total
        denom = beta * beta * precision + recall
        scores.append(0.0 if denom == 0 else
                      (1 + beta * beta) * precision * recall / denom)
    if not scores:
        return 0.0
    return 100.0 * sum(scores) / len(scores)
