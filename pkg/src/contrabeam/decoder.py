"""Contrastive beam search.

The decoding objective scores a candidate sequence Y against a positive
context and a set of weighted contrastive contexts: each step contributes
-log(max(eps, p_pos(t) - sum_j w_j * p_neg_j(t))), and search minimizes the
cumulative score. All streams are queried with the same target prefix; only
the conditioning differs. With all weights zero this reduces exactly to
standard negative-log-likelihood beam search.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import ConfigError, ContrastiveObjective, EngineError
from .scoring import Scorer, StepDistribution


@dataclass(frozen=True)
class DecodeParams:
    """Search hyperparameters.

    clamp_floor keeps the per-step log argument positive when the weighted
    contrastive mass exceeds the positive probability; a clamped token is
    maximally penalized but never infinite. length_normalization divides the
    final ranking score by sequence length and is off by default.
    """

    beam_size: int = 5
    max_len: int = 256
    clamp_floor: float = 1e-12
    length_normalization: bool = False
    stop_token: int | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")
        if self.clamp_floor <= 0:
            raise ConfigError("clamp_floor must be > 0")


@dataclass(frozen=True)
class Hypothesis:
    """A (partial) target sequence with its cumulative contrastive score.

    `score` is the sum of per-step combined negative-log terms over all freely
    emitted tokens; forced-prefix tokens contribute exactly 0. `truncated`
    marks hypotheses force-finished at max_len without reaching EOS.
    """

    tokens: tuple[int, ...]
    score: float
    finished: bool = False
    truncated: bool = False

    def _order_key(self):
        return (self.score, self.tokens)


def combine_step(p_pos: StepDistribution,
                 negatives: Sequence[tuple[float, StepDistribution]],
                 eps: float = 1e-12) -> np.ndarray:
    """Per-token combined scores: -log(max(eps, p_pos - sum w * p_neg)).

    Returns a finite vector over the vocabulary (lower is better).
    """
    inner = np.asarray(p_pos, dtype=np.float64)
    for weight, p_neg in negatives:
        if weight < 0:
            raise ConfigError(f"negative weight must be >= 0, got {weight}")
        p_neg = np.asarray(p_neg, dtype=np.float64)
        if p_neg.shape != inner.shape:
            raise ConfigError(
                f"vocabulary size mismatch: {p_neg.shape} vs {inner.shape}")
        inner = inner - weight * p_neg
    return -np.log(np.maximum(eps, inner))


class _Beam:
    """Mutable search state for one decode."""

    def __init__(self, forced_prefix: tuple[int, ...]):
        self.live: list[Hypothesis] = [Hypothesis(forced_prefix, 0.0)]
        self.finished: list[Hypothesis] = []


def _rank(hyps: list[Hypothesis], length_norm: bool,
          free_from: int) -> list[Hypothesis]:
    if length_norm:
        def key(h: Hypothesis):
            n = max(1, len(h.tokens) - free_from)
            return (h.score / n, h.tokens)
    else:
        def key(h: Hypothesis):
            return h._order_key()
    return sorted(hyps, key=key)


def beam_search(scorer: Scorer, objective: ContrastiveObjective,
                params: DecodeParams) -> list[Hypothesis]:
    """Contrastive beam search; returns finished hypotheses, best first.

    Forced-prefix tokens are emitted with zero score contribution before free
    decoding begins. EOS is scored like any other token; a hypothesis that
    emits EOS (or the configured stop token) retires from the beam and keeps
    its slot. Hypotheses reaching max_len are force-finished and flagged
    truncated. Ties break on lower token ids, then shorter sequences.
    """
    desc = scorer.descriptor()
    contexts = objective.contexts
    weights = objective.weights
    forced = objective.positive.forced_prefix
    if desc.eos_id in forced:
        raise ConfigError("forced_prefix must not contain EOS")
    if len(forced) >= params.max_len:
        raise ConfigError("forced_prefix is at least max_len tokens long")

    end_ids = {desc.eos_id}
    if params.stop_token is not None:
        end_ids.add(params.stop_token)

    beam = _Beam(tuple(forced))
    while beam.live:
        items = [(ctx, hyp.tokens) for ctx in contexts for hyp in beam.live]
        dists = scorer.batch_next_distributions(items)
        n = len(beam.live)
        candidates: list[Hypothesis] = list(beam.finished)
        for i, hyp in enumerate(beam.live):
            p_pos = dists[i]
            negs = [(weights[j], dists[(j + 1) * n + i])
                    for j in range(len(weights))]
            step = combine_step(p_pos, negs, params.clamp_floor)
            # Only the per-hypothesis best beam_size extensions can survive
            # global pruning; stable argsort breaks score ties on token id.
            keep = np.argsort(step, kind="stable")[:params.beam_size]
            for t in keep:
                t = int(t)
                score = hyp.score + float(step[t])
                tokens = hyp.tokens + (t,)
                if t in end_ids:
                    # a non-EOS stop token is consumed (scored) but kept out
                    # of the surface sequence
                    if t != desc.eos_id:
                        tokens = hyp.tokens
                    candidates.append(Hypothesis(tokens, score, finished=True))
                elif len(tokens) >= params.max_len:
                    candidates.append(Hypothesis(tokens, score, finished=True,
                                                 truncated=True))
                else:
                    candidates.append(Hypothesis(tokens, score))
        candidates.sort(key=Hypothesis._order_key)
        top = candidates[:params.beam_size]
        beam.finished = [h for h in top if h.finished]
        beam.live = [h for h in top if not h.finished]

    return _rank(beam.finished, params.length_normalization, len(forced))


def greedy_decode(scorer: Scorer, objective: ContrastiveObjective,
                  params: DecodeParams) -> Hypothesis:
    """Beam search with beam size 1; honors the configured stop token."""
    result = beam_search(scorer, objective, replace(params, beam_size=1))
    if not result:
        raise EngineError("greedy decode produced no hypothesis")
    return result[0]


def exhaustive_decode(scorer: Scorer, objective: ContrastiveObjective,
                      max_len: int,
                      clamp_floor: float = 1e-12) -> Hypothesis:
    """Exact minimizer of the contrastive score over all EOS-terminated
    sequences of length <= max_len. Verification oracle: the search space is
    enumerated outright, so vocab_size ** max_len must stay <= 1e7.
    """
    desc = scorer.descriptor()
    if desc.vocab_size ** max_len > 10 ** 7:
        raise ConfigError("exhaustive search space exceeds 1e7 sequences")
    contexts = objective.contexts
    weights = objective.weights
    forced = tuple(objective.positive.forced_prefix)
    if len(forced) >= max_len:
        raise ConfigError("forced_prefix is at least max_len tokens long")

    best: Hypothesis | None = None

    def visit(prefix: tuple[int, ...], score: float) -> None:
        nonlocal best
        dists = scorer.batch_next_distributions(
            [(ctx, prefix) for ctx in contexts])
        step = combine_step(dists[0],
                            list(zip(weights, dists[1:])), clamp_floor)
        eos_hyp = Hypothesis(prefix + (desc.eos_id,),
                             score + float(step[desc.eos_id]), finished=True)
        if best is None or eos_hyp._order_key() < best._order_key():
            best = eos_hyp
        if len(prefix) + 1 >= max_len:
            return
        for t in range(desc.vocab_size):
            if t == desc.eos_id:
                continue
            visit(prefix + (t,), score + float(step[t]))

    visit(forced, 0.0)
    assert best is not None
    return best


def sequence_score(scorer: Scorer, objective: ContrastiveObjective,
                   tokens: Sequence[int], clamp_floor: float = 1e-12) -> float:
    """Cumulative contrastive score of a fixed token sequence.

    Tokens covered by the forced prefix contribute 0; the sequence must start
    with the objective's forced prefix.
    """
    tokens = tuple(tokens)
    forced = tuple(objective.positive.forced_prefix)
    if tokens[:len(forced)] != forced:
        raise ConfigError("sequence does not start with the forced prefix")
    contexts = objective.contexts
    weights = objective.weights
    total = 0.0
    for i in range(len(forced), len(tokens)):
        prefix = tokens[:i]
        dists = scorer.batch_next_distributions(
            [(ctx, prefix) for ctx in contexts])
        step = combine_step(dists[0], list(zip(weights, dists[1:])), clamp_floor)
        total += float(step[tokens[i]])
    return total
