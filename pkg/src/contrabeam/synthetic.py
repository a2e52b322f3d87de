"""Synthetic translation scorer for desk-scale experiments.

The toy world has four languages with disjoint character sets, so language
identification and cross-language chrF behave predictably:

* ``aa`` (source) and ``bb`` (well-supported target) use lowercase letters;
* ``cc`` (weakly-supported target) and ``en`` (the English stand-in) use
  uppercase letters.

Words are built from unique letter pairs, so two different words never share
a character bigram; wrong-word outputs therefore score near zero on chrF
orders above 1. Each step the model mixes three behaviors: translate the
next uncovered source word through the lexicon, continue from a
target-language bigram model that ignores the source (hallucination), or
copy the next source word verbatim. The bigram model is built from 3-word
cycles, so once a hypothesis detaches from the source it tends to oscillate,
which is what the repeating-n-gram detector is meant to catch. Detachment is
sticky: after a hallucination step the model keeps using the bigram model
with probability max(h, 0.9), and an ongoing copy continues with probability
max(c, 0.9).

A weakly-supported target language mixes its own output with English output
at a configurable rate, decided once at the first emitted token and sticky
afterwards, which is what gives language-contrastive decoding a measurable
off-target failure mode to suppress.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConditioningContext, ConfigError, Rng, ScorerError, Vocabulary, make_vocabulary
from .scoring import ScorerDescriptor, StepDistribution, VocabScorer

SOURCE_LANG = "aa"
MAIN_TARGET = "bb"
WEAK_TARGET = "cc"
ENGLISH = "en"

_ALPHABETS = {
    SOURCE_LANG: "abcdefghijkl",
    MAIN_TARGET: "mnopqrstuvwx",
    WEAK_TARGET: "ABCDEFGHIJKL",
    ENGLISH: "MNOPQRSTUVWX",
}

_WORDS_PER_LANG = 45
_SOURCE_WORDS = 36
_LM_LOOP_PROB = 0.88
_LM_EOS_PROB = 0.002
_DETACHED_FLOOR = 0.9
_GAP_WORD_RATE = 0.10  # fraction of lexicon entries with flat choice probs

_EASY_CHOICES = ((0.75, 0.2, 0.05), (0.8, 0.2))
_GAP_CHOICES = ((0.25, 0.25, 0.25, 0.25),)


def _make_words(alphabet: str, count: int, rng: Rng) -> list[str]:
    """Words of the form xyxyxy over unique letter pairs of the alphabet."""
    pairs = [(a, b) for i, a in enumerate(alphabet) for b in alphabet[i + 1:]]
    rng.shuffle(pairs)
    if count > len(pairs):
        raise ConfigError("alphabet too small for requested word count")
    return [(a + b) * 3 for a, b in pairs[:count]]


@dataclass(frozen=True)
class _Lm:
    """Bigram continuation model over one language's words (vocab vectors)."""

    start: np.ndarray
    next_by_id: dict[int, np.ndarray]

    def step(self, prev_id: int | None) -> np.ndarray:
        if prev_id is not None and prev_id in self.next_by_id:
            return self.next_by_id[prev_id]
        return self.start


class SyntheticTranslator(VocabScorer):
    """Deterministic mixture scorer over the toy world.

    `h` is the per-step hallucination rate, `c` the copy rate (h + c <= 1).
    `english_mix` maps a target language to the probability mass diverted to
    English output; languages without a lexicon pair from the source fall
    back to English entirely.
    """

    def __init__(self, vocab: Vocabulary,
                 word_lang: dict[int, str],
                 lexicon: dict[tuple[str, str], dict[str, list[tuple[str, float]]]],
                 lms: dict[str, _Lm],
                 h: float = 0.0, c: float = 0.0,
                 english_mix: dict[str, float] | None = None,
                 english_code: str = ENGLISH,
                 max_context_len: int = 64):
        if h < 0 or c < 0 or h + c > 1:
            raise ConfigError("hallucination and copy rates must satisfy "
                              "h >= 0, c >= 0, h + c <= 1")
        self.vocab = vocab
        self.h = h
        self.c = c
        self._word_lang = word_lang
        self._lexicon = lexicon
        self._lms = lms
        self._english_mix = dict(english_mix or {})
        self._english = english_code
        self._max_context_len = max_context_len
        # id-level lexicon: (src_lang, tgt_lang) -> src word id -> (ids, probs)
        self._lex_ids: dict[tuple[str, str], dict[int, tuple[np.ndarray, np.ndarray]]] = {}
        for pair, table in lexicon.items():
            by_id = {}
            for src_word, choices in table.items():
                ids = np.array([vocab.id_of(w) for w, _ in choices], dtype=np.int64)
                probs = np.array([p for _, p in choices], dtype=np.float64)
                by_id[vocab.id_of(src_word)] = (ids, probs / probs.sum())
            self._lex_ids[pair] = by_id

    # -- scorer interface -------------------------------------------------

    def descriptor(self) -> ScorerDescriptor:
        v = self.vocab
        return ScorerDescriptor(
            vocab_size=len(v), bos_id=v.bos_id, eos_id=v.eos_id,
            unk_id=v.unk_id, pad_id=v.pad_id,
            supports_language_indicators=True,
            max_context_len=self._max_context_len,
            language_indicators=dict(v.language_indicators))

    def next_distribution(self, ctx: ConditioningContext,
                          prefix) -> StepDistribution:
        self._check_context_len(prefix)
        prefix = tuple(prefix)
        src_ids = [self.vocab.id_of(w) for w in ctx.source_text.split()]
        main = ctx.target_lang
        f = self._fallback_mass(ctx.source_lang, main)
        streams = self._language_weights(prefix, main, f)
        out = np.zeros(len(self.vocab), dtype=np.float64)
        for lang, lang_weight in streams:
            if lang_weight == 0.0:
                continue
            out += lang_weight * self._component(ctx.source_lang, lang,
                                                 src_ids, prefix)
        return out

    # -- internals ---------------------------------------------------------

    def _fallback_mass(self, src_lang: str, tgt_lang: str) -> float:
        if tgt_lang == self._english:
            return 0.0
        if tgt_lang in self._english_mix:
            return self._english_mix[tgt_lang]
        if tgt_lang == src_lang or (src_lang, tgt_lang) in self._lex_ids:
            return 0.0
        return 1.0  # unsupported target: pure English output

    def _language_weights(self, prefix: tuple[int, ...], main: str,
                          f: float) -> list[tuple[str, float]]:
        if f == 0.0:
            return [(main, 1.0)]
        if f == 1.0:
            return [(self._english, 1.0)]
        if not prefix:
            return [(main, 1.0 - f), (self._english, f)]
        first = self._word_lang.get(prefix[0])
        lang = first if first in (main, self._english) else main
        return [(lang, 1.0)]

    def _translations(self, src_lang: str, lang: str,
                      src_id: int) -> tuple[np.ndarray, np.ndarray] | None:
        if lang == src_lang:
            return (np.array([src_id]), np.array([1.0]))  # identity pair
        return self._lex_ids.get((src_lang, lang), {}).get(src_id)

    def _scan_state(self, src_lang: str, lang: str, src_ids: list[int],
                    prefix: tuple[int, ...]) -> str:
        state = "faithful"
        for j, tok in enumerate(prefix):
            faithful = False
            if j < len(src_ids):
                tr = self._translations(src_lang, lang, src_ids[j])
                faithful = tr is not None and tok in tr[0]
            if state != "halluc" and faithful:
                state = "faithful"
            elif self.c > 0 and state != "halluc" and j < len(src_ids) \
                    and tok == src_ids[j]:
                state = "copying"
            elif self.h > 0:
                state = "halluc"  # absorbing
        return state

    def _state_weights(self, state: str) -> tuple[float, float, float]:
        """Mixture weights (lexicon, lm, copy) for the next step."""
        h, c = self.h, self.c
        if state == "halluc":
            lm = max(h, _DETACHED_FLOOR)
            rest = 1.0 - lm
            return (rest * (1.0 - h - c), lm + rest * h, rest * c)
        if state == "copying":
            copy = max(c, _DETACHED_FLOOR)
            rest = 1.0 - copy
            return (rest * (1.0 - h - c), rest * h, copy + rest * c)
        return (1.0 - h - c, h, c)

    def _component(self, src_lang: str, lang: str, src_ids: list[int],
                   prefix: tuple[int, ...]) -> np.ndarray:
        lex_w, lm_w, copy_w = self._state_weights(
            self._scan_state(src_lang, lang, src_ids, prefix))
        vec = np.zeros(len(self.vocab), dtype=np.float64)
        pos = len(prefix)
        if lex_w > 0:
            if pos < len(src_ids):
                tr = self._translations(src_lang, lang, src_ids[pos])
                if tr is None:
                    raise ScorerError(
                        f"source word {src_ids[pos]} has no {src_lang}->{lang} "
                        "lexicon entry")
                ids, probs = tr
                np.add.at(vec, ids, lex_w * probs)
            else:
                vec[self.vocab.eos_id] += lex_w
        if copy_w > 0:
            target = src_ids[pos] if pos < len(src_ids) else self.vocab.eos_id
            vec[target] += copy_w
        if lm_w > 0:
            lm = self._lms.get(lang)
            if lm is None:
                raise ScorerError(f"no language model for {lang!r}")
            prev = prefix[-1] if prefix else None
            vec += lm_w * lm.step(prev)
        return vec


def toy_world(h: float = 0.3, c: float = 0.0, english_mix_weak: float = 0.5,
              seed: int = 2024) -> SyntheticTranslator:
    """Build the standard four-language synthetic world.

    The direction aa->bb exercises hallucination; aa->cc (English mixed in at
    `english_mix_weak`) exercises off-target output.
    """
    rng = Rng(seed)
    inventories = {lang: _make_words(alpha, _WORDS_PER_LANG, rng)
                   for lang, alpha in _ALPHABETS.items()}
    all_words = [w for lang in (SOURCE_LANG, MAIN_TARGET, WEAK_TARGET, ENGLISH)
                 for w in inventories[lang]]
    vocab = make_vocabulary(all_words)
    word_lang = {vocab.id_of(w): lang
                 for lang, words in inventories.items() for w in words}

    src_words = inventories[SOURCE_LANG][:_SOURCE_WORDS]
    lexicon: dict[tuple[str, str], dict[str, list[tuple[str, float]]]] = {}
    for tgt in (MAIN_TARGET, WEAK_TARGET, ENGLISH):
        table = {}
        targets = inventories[tgt]
        for word in src_words:
            if rng.uniform() < _GAP_WORD_RATE:
                probs = rng.choice(_GAP_CHOICES)
            else:
                probs = rng.choice(_EASY_CHOICES)
            picks = [targets[rng.randint(len(targets))] for _ in probs]
            while len(set(picks)) < len(picks):  # choices must be distinct
                picks = [targets[rng.randint(len(targets))] for _ in probs]
            table[word] = list(zip(picks, probs))
        lexicon[(SOURCE_LANG, tgt)] = table

    lms = {lang: _build_lm(vocab, inventories[lang])
           for lang in (SOURCE_LANG, MAIN_TARGET, WEAK_TARGET, ENGLISH)}
    return SyntheticTranslator(
        vocab, word_lang, lexicon, lms, h=h, c=c,
        english_mix={WEAK_TARGET: english_mix_weak})


def _build_lm(vocab: Vocabulary, words: list[str]) -> _Lm:
    """Bigram model whose words form 3-cycles, with a small EOS mass."""
    ids = [vocab.id_of(w) for w in words]
    base = (1.0 - _LM_LOOP_PROB - _LM_EOS_PROB) / len(ids)
    next_by_id = {}
    for i, word_id in enumerate(ids):
        vec = np.zeros(len(vocab), dtype=np.float64)
        vec[ids] = base
        group = i - i % 3
        if group + 3 <= len(ids):
            cycle_next = ids[group + (i + 1 - group) % 3]
        else:
            cycle_next = ids[(i + 1) % len(ids)]  # incomplete tail group
        vec[cycle_next] += _LM_LOOP_PROB
        vec[vocab.eos_id] += _LM_EOS_PROB
        next_by_id[word_id] = vec / vec.sum()
    start = np.zeros(len(vocab), dtype=np.float64)
    entries = ids[0::3]
    start[entries] = 1.0 / len(entries)
    start = start / start.sum()
    return _Lm(start, next_by_id)


def synthetic_corpus(gen: SyntheticTranslator, src_lang: str, tgt_lang: str,
                     n: int, seed: int, min_words: int = 4,
                     max_words: int = 10) -> list[tuple[str, str]]:
    """Seeded (source segment, reference translation) pairs.

    References take each word's highest-probability translation (lowest
    token id on ties), matching what a faithful greedy decode produces.
    """
    table = gen._lexicon.get((src_lang, tgt_lang))
    if not table:
        raise ConfigError(f"no lexicon for direction {src_lang}->{tgt_lang}")
    words = sorted(table)
    rng = Rng(seed)
    pairs = []
    for _ in range(n):
        length = min_words + rng.randint(max_words - min_words + 1)
        segment = [words[rng.randint(len(words))] for _ in range(length)]
        reference = [max(table[w],
                         key=lambda wp: (wp[1], -gen.vocab.id_of(wp[0])))[0]
                     for w in segment]
        pairs.append((" ".join(segment), " ".join(reference)))
    return pairs


def lid_training_samples(gen: SyntheticTranslator) -> dict[str, str]:
    """Per-language sample text for training the built-in identifier."""
    samples: dict[str, list[str]] = {}
    for word_id, lang in sorted(gen._word_lang.items()):
        samples.setdefault(lang, []).append(gen.vocab.entries[word_id])
    return {lang: " ".join(words) for lang, words in samples.items()}
