"""Contrastive beam search, exhaustive oracle, and scoring arithmetic."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contrabeam.core import (ConditioningContext, ConfigError, ContrastiveObjective,
                             Rng, make_vocabulary)
from contrabeam.decoder import (DecodeParams, combine_step, exhaustive_decode,
                                beam_search, greedy_decode, sequence_score)
from contrabeam.scoring import TableScorer

from tests.helpers import (full_table_instance, reference_beam_search,
                           reference_contrastive_score, reference_exhaustive)

CTX = ConditioningContext("quelle", "aa", "bb")


def scorer_for(words, dists, default=None):
    """TableScorer answering CTX with `dists`: {prefix: [probs]}."""
    vocab = make_vocabulary(words)
    table = {(("quelle", "bb", ""), tuple(prefix)): np.array(probs)
             for prefix, probs in dists.items()}
    return TableScorer(vocab, table,
                       default=None if default is None else np.array(default))


def bare_objective():
    return ContrastiveObjective(CTX, ())


# -- combine_step --------------------------------------------------------------


def test_combine_step_hand_case():
    step = combine_step(np.array([0.5, 0.3, 0.2]),
                        [(0.5, np.array([0.2, 0.4, 0.4]))])
    assert step[0] == pytest.approx(-math.log(0.4), abs=1e-12)
    assert step[1] == pytest.approx(-math.log(0.1), abs=1e-12)
    assert step[2] == pytest.approx(-math.log(1e-12), abs=1e-12)


def test_combine_step_without_negatives_is_nll():
    step = combine_step(np.array([0.25, 0.75]), [])
    assert np.allclose(step, [-math.log(0.25), -math.log(0.75)])


def test_combine_step_clamp_floor_configurable():
    step = combine_step(np.array([0.0, 1.0]), [], eps=1e-6)
    assert step[0] == pytest.approx(-math.log(1e-6))


def test_combine_step_rejects_mismatched_shapes():
    with pytest.raises(ConfigError, match="mismatch"):
        combine_step(np.array([0.5, 0.5]), [(0.5, np.array([1.0]))])
    with pytest.raises(ConfigError, match=">= 0"):
        combine_step(np.array([0.5, 0.5]), [(-0.1, np.array([0.5, 0.5]))])


def test_decode_params_validation():
    with pytest.raises(ConfigError):
        DecodeParams(beam_size=0)
    with pytest.raises(ConfigError):
        DecodeParams(max_len=0)
    with pytest.raises(ConfigError):
        DecodeParams(clamp_floor=0.0)


# -- beam search semantics ------------------------------------------------------


def test_eos_is_scored_like_any_token():
    scorer = scorer_for(["w"], {(): [0.0, 0.0, 0.6, 0.0, 0.4],
                                (4,): [0.0, 0.0, 0.9, 0.0, 0.1]})
    hyps = beam_search(scorer, bare_objective(), DecodeParams(beam_size=2, max_len=4))
    assert [h.tokens for h in hyps] == [(2,), (4, 2)]
    assert hyps[0].score == pytest.approx(-math.log(0.6), abs=1e-12)
    assert hyps[1].score == pytest.approx(-math.log(0.4) - math.log(0.9), abs=1e-12)


def test_truncation_force_finishes_without_eos_cost():
    scorer = scorer_for(["w"], {}, default=[0.0, 0.0, 0.05, 0.15, 0.8])
    hyps = beam_search(scorer, bare_objective(), DecodeParams(beam_size=1, max_len=3))
    (hyp,) = hyps
    assert hyp.tokens == (4, 4, 4)
    assert hyp.truncated and hyp.finished
    assert 2 not in hyp.tokens
    assert hyp.score == pytest.approx(3 * -math.log(0.8), abs=1e-12)


def test_eos_at_max_len_is_terminated_not_truncated():
    scorer = scorer_for(["w"], {(): [0.0, 0.0, 0.01, 0.09, 0.9],
                                (4,): [0.0, 0.0, 0.95, 0.04, 0.01]})
    hyps = beam_search(scorer, bare_objective(), DecodeParams(beam_size=1, max_len=2))
    assert hyps[0].tokens == (4, 2)
    assert not hyps[0].truncated


def test_stop_token_is_consumed_but_not_surfaced():
    scorer = scorer_for(["w", "halt"],
                        {(): [0.0, 0.0, 0.1, 0.0, 0.2, 0.7]})
    hyps = beam_search(scorer, bare_objective(),
                       DecodeParams(beam_size=1, max_len=4, stop_token=5))
    (hyp,) = hyps
    assert hyp.tokens == ()
    assert hyp.finished and not hyp.truncated
    assert hyp.score == pytest.approx(-math.log(0.7), abs=1e-12)
    assert scorer.detokenize(hyp.tokens) == ""


def test_score_ties_break_on_lower_token_id():
    scorer = scorer_for(["a", "b"], {(): [0.0, 0.0, 0.2, 0.0, 0.4, 0.4],
                                     (4,): [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                                     (5,): [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]})
    hyps = beam_search(scorer, bare_objective(), DecodeParams(beam_size=1, max_len=4))
    assert hyps[0].tokens == (4, 2)


def test_forced_prefix_contributes_zero_score():
    scorer = scorer_for(["a", "b"],
                        {(4,): [0.0, 0.0, 0.3, 0.0, 0.2, 0.5],
                         (4, 5): [0.0, 0.0, 0.8, 0.0, 0.1, 0.1]})
    ctx = CTX.replace(forced_prefix=(4,))
    obj = ContrastiveObjective(ctx, ())
    hyps = beam_search(scorer, obj, DecodeParams(beam_size=2, max_len=3))
    assert hyps[0].tokens == (4, 5, 2)
    assert hyps[0].score == pytest.approx(-math.log(0.5) - math.log(0.8), abs=1e-12)
    assert sequence_score(scorer, obj, hyps[0].tokens) == pytest.approx(
        hyps[0].score, abs=1e-12)


def test_forced_prefix_validation():
    scorer = scorer_for(["a"], {}, default=[0.0, 0.0, 0.5, 0.0, 0.5])
    with pytest.raises(ConfigError, match="EOS"):
        beam_search(scorer, ContrastiveObjective(CTX.replace(forced_prefix=(2,)), ()),
                    DecodeParams())
    with pytest.raises(ConfigError, match="max_len"):
        beam_search(scorer, ContrastiveObjective(CTX.replace(forced_prefix=(4, 4)), ()),
                    DecodeParams(max_len=2))


def test_length_normalization_reranks_finished():
    dists = {
        (): [0.1, 0.05, 0.05, 0.05, 0.3, 0.45],
        (4,): [0.025, 0.025, 0.9, 0.025, 0.0125, 0.0125],
        (5,): [0.1, 0.05, 0.05, 0.05, 0.3, 0.45],
        (5, 5): [0.025, 0.025, 0.9, 0.025, 0.0125, 0.0125],
    }
    scorer = scorer_for(["w0", "w1"], dists)
    plain = beam_search(scorer, bare_objective(), DecodeParams(beam_size=2, max_len=4))
    assert [h.tokens for h in plain] == [(4, 2), (5, 5, 2)]
    normed = beam_search(scorer, bare_objective(),
                         DecodeParams(beam_size=2, max_len=4,
                                      length_normalization=True))
    assert [h.tokens for h in normed] == [(5, 5, 2), (4, 2)]


def test_greedy_decode_is_beam_one():
    rng = Rng(31)
    scorer, objective = full_table_instance(rng, n_words=2, max_len=3,
                                            lambda_src=0.3, lambda_lang=0.1)
    greedy = greedy_decode(scorer, objective, DecodeParams(beam_size=5, max_len=3))
    beam1 = beam_search(scorer, objective, DecodeParams(beam_size=1, max_len=3))
    assert greedy == beam1[0]


# -- agreement with the reference implementations -------------------------------


@pytest.mark.parametrize("seed", [11, 12, 13, 14])
def test_plain_beam_matches_reference(seed):
    rng = Rng(seed)
    scorer, objective = full_table_instance(rng, n_words=3, max_len=3)
    for beam_size in (1, 2, 3):
        got = beam_search(scorer, objective,
                          DecodeParams(beam_size=beam_size, max_len=3))
        want = reference_beam_search(scorer, objective.positive, beam_size, 3)
        assert [h.tokens for h in got] == [t for t, _, _ in want]
        for h, (_, s, tr) in zip(got, want):
            assert h.score == pytest.approx(s, abs=1e-9)
            assert h.truncated == tr


@pytest.mark.parametrize("seed,lam_src,lam_lang",
                         [(21, 0.3, 0.0), (22, 0.7, 0.1), (23, 0.0, 0.1)])
def test_exhaustive_matches_reference(seed, lam_src, lam_lang):
    rng = Rng(seed)
    scorer, objective = full_table_instance(rng, n_words=2, max_len=3,
                                            lambda_src=lam_src, lambda_lang=lam_lang)
    got = exhaustive_decode(scorer, objective, max_len=3)
    want_tokens, want_score = reference_exhaustive(scorer, objective, max_len=3)
    assert got.tokens == want_tokens
    assert got.score == pytest.approx(want_score, abs=1e-9)


def test_exhaustive_rejects_oversized_space():
    scorer = scorer_for(["a"], {}, default=[0.0, 0.0, 0.5, 0.0, 0.5])
    with pytest.raises(ConfigError, match="1e7"):
        exhaustive_decode(scorer, bare_objective(), max_len=12)


def test_sequence_score_matches_reference():
    rng = Rng(41)
    scorer, objective = full_table_instance(rng, n_words=2, max_len=4,
                                            lambda_src=0.7, lambda_lang=0.1)
    tokens = (4, 0, 5, 2)
    assert sequence_score(scorer, objective, tokens) == pytest.approx(
        reference_contrastive_score(scorer, objective, tokens), abs=1e-9)


def test_sequence_score_requires_forced_prefix():
    scorer = scorer_for(["a"], {}, default=[0.0, 0.0, 0.5, 0.0, 0.5])
    obj = ContrastiveObjective(CTX.replace(forced_prefix=(4,)), ())
    with pytest.raises(ConfigError, match="forced prefix"):
        sequence_score(scorer, obj, (2,))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10 ** 6),
       beam_size=st.integers(min_value=1, max_value=4))
def test_reported_scores_are_consistent(seed, beam_size):
    """Every returned hypothesis' score equals the step-by-step rescoring
    of its token sequence (truncated hypotheses included)."""
    rng = Rng(seed)
    scorer, objective = full_table_instance(rng, n_words=2, max_len=3,
                                            lambda_src=0.3, lambda_lang=0.1)
    hyps = beam_search(scorer, objective, DecodeParams(beam_size=beam_size, max_len=3))
    assert hyps
    for h in hyps:
        assert h.finished
        assert h.score == pytest.approx(
            reference_contrastive_score(scorer, objective, h.tokens), abs=1e-9)
    scores = [h.score for h in hyps]
    assert scores == sorted(scores)
