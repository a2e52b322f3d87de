"""Vocabulary, context, objective, document, and RNG behavior."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from contrabeam.core import (ConditioningContext, ConfigError, ContrastiveObjective,
                             DataError, Document, Rng, Vocabulary, check_lang_code,
                             make_vocabulary)


def test_make_vocabulary_places_specials_first():
    v = make_vocabulary(["dog", "cat"])
    assert (v.pad_id, v.bos_id, v.eos_id, v.unk_id) == (0, 1, 2, 3)
    assert v.entries[:4] == ("<pad>", "<bos>", "<eos>", "<unk>")
    assert v.entries[4:] == ("dog", "cat")
    assert len(v) == 6


def test_make_vocabulary_language_indicators():
    v = make_vocabulary(["hello"], {"en": "<en>", "de": "<de>"})
    assert v.entries[v.language_indicators["en"]] == "<en>"
    assert v.entries[v.language_indicators["de"]] == "<de>"
    # An indicator surface already present is reused, not duplicated.
    v2 = make_vocabulary(["<en>", "x"], {"en": "<en>"})
    assert v2.language_indicators["en"] == v2.entries.index("<en>")
    assert v2.entries.count("<en>") == 1


def test_vocabulary_rejects_duplicates_and_bad_ids():
    with pytest.raises(ConfigError):
        Vocabulary(("a", "a", "b", "c"), bos_id=0, eos_id=1, unk_id=2, pad_id=3)
    with pytest.raises(ConfigError, match="eos id"):
        Vocabulary(("a", "b"), bos_id=0, eos_id=9, unk_id=0, pad_id=1)
    with pytest.raises(ConfigError, match="indicator"):
        Vocabulary(("a", "b", "c", "d"), bos_id=0, eos_id=1, unk_id=2, pad_id=3,
                   language_indicators={"en": 17})


def test_tokenize_maps_unknown_to_unk():
    v = make_vocabulary(["dog", "cat"])
    assert v.tokenize("dog zebra cat") == [4, v.unk_id, 5]
    assert v.id_of("zebra") == v.unk_id


def test_detokenize_skips_specials_except_unk():
    v = make_vocabulary(["dog", "cat"])
    tokens = [v.bos_id, 4, v.unk_id, 5, v.eos_id, v.pad_id]
    assert v.detokenize(tokens) == "dog <unk> cat"


def test_token_lookup_bounds():
    v = make_vocabulary(["dog"])
    assert v.token(4) == (4, "dog")
    with pytest.raises(ConfigError, match="out of range"):
        v.token(99)
    with pytest.raises(ConfigError, match="out of range"):
        v.detokenize([0, 99])


@pytest.mark.parametrize("bad", ["", "EN", "dé", "e n"])
def test_check_lang_code_rejects(bad):
    with pytest.raises(ConfigError):
        check_lang_code(bad)


def test_check_lang_code_accepts():
    assert check_lang_code("en") == "en"
    assert check_lang_code("zu") == "zu"


def test_context_validation():
    with pytest.raises(ConfigError):
        ConditioningContext("", "aa", "bb")
    with pytest.raises(ConfigError):
        ConditioningContext("x", "aa", "bb", mode="chat")
    with pytest.raises(ConfigError):
        ConditioningContext("x", "AA", "bb")
    ctx = ConditioningContext("x", "aa", "bb", forced_prefix=[7, 8])
    assert ctx.forced_prefix == (7, 8)
    alt = ctx.replace(target_lang="en")
    assert (alt.source_text, alt.target_lang, alt.forced_prefix) == ("x", "en", (7, 8))


def test_objective_validation():
    pos = ConditioningContext("x", "aa", "bb")
    with pytest.raises(ConfigError, match="differ"):
        ContrastiveObjective(pos, ((ConditioningContext("x", "aa", "bb"), 0.5),))
    with pytest.raises(ConfigError, match=">= 0"):
        ContrastiveObjective(pos, ((pos.replace(source_text="y"), -0.1),))
    with pytest.raises(ConfigError, match="forced_prefix"):
        ContrastiveObjective(
            pos, ((ConditioningContext("y", "aa", "bb", forced_prefix=(5,)), 0.5),))
    neg_src = pos.replace(source_text="y")
    neg_lang = pos.replace(target_lang="en")
    obj = ContrastiveObjective(pos, ((neg_src, 0.7), (neg_lang, 0.1)))
    assert obj.contexts == [pos, neg_src, neg_lang]
    assert obj.weights == [0.7, 0.1]


def test_document_validation():
    with pytest.raises(DataError):
        Document((), "aa")
    with pytest.raises(DataError):
        Document(("x", ""), "aa")
    doc = Document(["a", "b"], "aa")
    assert doc.segments == ("a", "b")


def test_splitmix64_published_vector():
    rng = Rng(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4
    assert rng.next_u64() == 0x06C45D188009454F


@given(st.integers(min_value=0, max_value=2 ** 64 - 1))
def test_splitmix64_matches_independent_reimplementation(seed):
    mask = (1 << 64) - 1

    def independent(state):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = ((state ^ (state >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return state, z ^ (z >> 31)

    rng = Rng(seed)
    state = seed
    for _ in range(4):
        state, expected = independent(state)
        assert rng.next_u64() == expected


def test_rng_same_seed_same_stream():
    a, b = Rng(1234), Rng(1234)
    assert [a.next_u64() for _ in range(50)] == [b.next_u64() for _ in range(50)]


@given(st.integers(min_value=0, max_value=2 ** 64 - 1))
def test_uniform_in_unit_interval(seed):
    rng = Rng(seed)
    for _ in range(8):
        x = rng.uniform()
        assert 0.0 <= x < 1.0


@given(st.integers(min_value=0, max_value=2 ** 32), st.integers(min_value=1, max_value=37))
def test_randint_in_range(seed, n):
    rng = Rng(seed)
    for _ in range(8):
        assert 0 <= rng.randint(n) < n


def test_randint_rejects_nonpositive():
    with pytest.raises(ConfigError):
        Rng(1).randint(0)


@given(st.integers(min_value=0, max_value=2 ** 32), st.integers(min_value=0, max_value=12))
def test_shuffle_preserves_multiset(seed, n):
    rng = Rng(seed)
    items = list(range(n)) + [0, 0]
    shuffled = list(items)
    rng.shuffle(shuffled)
    assert sorted(shuffled) == sorted(items)
    assert sorted(rng.permutation(n)) == list(range(n))


def test_choice_and_weighted_index():
    rng = Rng(7)
    assert rng.choice(["only"]) == "only"
    with pytest.raises(ConfigError):
        rng.choice([])
    for _ in range(20):
        assert rng.weighted_index([0.0, 3.0, 0.0]) == 1
    with pytest.raises(ConfigError):
        rng.weighted_index([0.0, 0.0])


@given(st.lists(st.sampled_from(["ab", "cd", "ef", "gh"]), min_size=1, max_size=8))
def test_tokenize_detokenize_roundtrip(words):
    v = make_vocabulary(["ab", "cd", "ef", "gh"])
    text = " ".join(words)
    assert v.detokenize(v.tokenize(text)) == text
