"""Shared domain types: vocabularies, conditioning contexts, objectives, seeded RNG."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence


class EngineError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(EngineError):
    """Invalid configuration or invalid construction arguments."""


class DataError(EngineError):
    """Malformed or inconsistent input data (corpora, files)."""


class ScorerError(EngineError):
    """A scorer could not produce a distribution."""


class Token(NamedTuple):
    """A vocabulary entry: integer id plus its surface form."""

    id: int
    surface: str


def check_lang_code(code: str) -> str:
    """Validate a language code (non-empty lowercase ASCII, no whitespace)
    and return it."""
    if (not code or not code.isascii() or code != code.lower()
            or any(ch.isspace() for ch in code)):
        raise ConfigError(f"invalid language code: {code!r}")
    return code


@dataclass(frozen=True)
class Vocabulary:
    """Whitespace-word vocabulary with designated special tokens.

    Real subword tokenization lives behind the scorer protocol; in-process
    vocabularies are word-level and exist for toy scorers and tests.
    """

    entries: tuple[str, ...]
    bos_id: int
    eos_id: int
    unk_id: int
    pad_id: int
    language_indicators: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.entries)) != len(self.entries):
            raise ConfigError("vocabulary entries must be unique")
        for name, i in (("bos", self.bos_id), ("eos", self.eos_id),
                        ("unk", self.unk_id), ("pad", self.pad_id)):
            if not 0 <= i < len(self.entries):
                raise ConfigError(f"{name} id {i} out of range")
        for code, i in self.language_indicators.items():
            check_lang_code(code)
            if not 0 <= i < len(self.entries):
                raise ConfigError(f"language indicator id {i} out of range")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.entries)})

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.bos_id, self.eos_id, self.unk_id, self.pad_id))

    def token(self, token_id: int) -> Token:
        if not 0 <= token_id < len(self.entries):
            raise ConfigError(f"token id out of range: {token_id}")
        return Token(token_id, self.entries[token_id])

    def id_of(self, surface: str) -> int:
        """Id of a surface form, falling back to UNK."""
        return self._index.get(surface, self.unk_id)

    def tokenize(self, text: str) -> list[int]:
        """Whitespace-split `text` into token ids; unknown words map to UNK."""
        return [self._index.get(w, self.unk_id) for w in text.split()]

    def detokenize(self, tokens: Sequence[int]) -> str:
        """Inverse of tokenize; specials other than UNK are omitted."""
        skip = self.special_ids - {self.unk_id}
        words = []
        for t in tokens:
            if not 0 <= t < len(self.entries):
                raise ConfigError(f"token id out of range: {t}")
            if t in skip:
                continue
            words.append(self.entries[t])
        return " ".join(words)


def make_vocabulary(words: Iterable[str],
                    language_indicators: Mapping[str, str] | None = None) -> Vocabulary:
    """Build a vocabulary with the conventional special tokens prepended.

    `language_indicators` maps language code -> indicator surface form; the
    indicator surfaces are appended as regular entries.
    """
    specials = ["<pad>", "<bos>", "<eos>", "<unk>"]
    entries = list(specials) + [w for w in words if w not in specials]
    indicators = {}
    for code, surface in (language_indicators or {}).items():
        if surface not in entries:
            entries.append(surface)
        indicators[code] = entries.index(surface)
    return Vocabulary(tuple(entries), bos_id=1, eos_id=2, unk_id=3, pad_id=0,
                      language_indicators=indicators)


@dataclass(frozen=True)
class ConditioningContext:
    """One (source text, target language, forced target prefix) conditioning triple.

    `mode` selects how a scorer realizes the conditioning ("mt" conditions on
    language indicators, "llm" on an instruction prompt); `prompt_variant`
    names the instruction template an llm-mode scorer must realize.
    """

    source_text: str
    source_lang: str
    target_lang: str
    forced_prefix: tuple[int, ...] = ()
    mode: str = "mt"
    prompt_variant: str | None = None

    def __post_init__(self):
        if not self.source_text:
            raise ConfigError("source_text must be non-empty")
        check_lang_code(self.source_lang)
        check_lang_code(self.target_lang)
        if self.mode not in ("mt", "llm"):
            raise ConfigError(f"unknown context mode: {self.mode!r}")
        object.__setattr__(self, "forced_prefix", tuple(self.forced_prefix))

    def replace(self, **kwargs) -> "ConditioningContext":
        fields = dict(source_text=self.source_text, source_lang=self.source_lang,
                      target_lang=self.target_lang, forced_prefix=self.forced_prefix,
                      mode=self.mode, prompt_variant=self.prompt_variant)
        fields.update(kwargs)
        return ConditioningContext(**fields)


@dataclass(frozen=True)
class ContrastiveObjective:
    """A positive context plus weighted contrastive contexts to penalize."""

    positive: ConditioningContext
    negatives: tuple[tuple[ConditioningContext, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "negatives", tuple(self.negatives))
        for ctx, weight in self.negatives:
            if weight < 0:
                raise ConfigError(f"negative weight must be >= 0, got {weight}")
            if (ctx.source_text == self.positive.source_text
                    and ctx.target_lang == self.positive.target_lang):
                raise ConfigError(
                    "contrastive context must differ from the positive in "
                    "source_text or target_lang")
            # All streams share the hypothesis prefix y_<i, so forced prefixes
            # must be token-identical; language indicators are conditioning,
            # not part of the shared prefix.
            if ctx.forced_prefix != self.positive.forced_prefix:
                raise ConfigError("forced_prefix must be identical across "
                                  "positive and contrastive contexts")

    @property
    def contexts(self) -> list[ConditioningContext]:
        """Positive context first, then contrastive contexts in order."""
        return [self.positive] + [ctx for ctx, _ in self.negatives]

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.negatives]


@dataclass(frozen=True)
class Document:
    """An ordered list of source segments in one language."""

    segments: tuple[str, ...]
    lang: str

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise DataError("document must contain at least one segment")
        if any(not s for s in self.segments):
            raise DataError("document segments must be non-empty")
        check_lang_code(self.lang)


_MASK64 = (1 << 64) - 1


class Rng:
    """SplitMix64 pseudo-random generator.

    Pure 64-bit integer arithmetic with the published SplitMix64 constants,
    so identical seeds produce identical draw sequences on every platform.
    Not shared across threads: single-owner.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection sampling."""
        if n <= 0:
            raise ConfigError("randint bound must be positive")
        limit = (_MASK64 + 1) - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        perm = list(range(n))
        self.shuffle(perm)
        return perm

    def choice(self, items: Sequence):
        if not items:
            raise ConfigError("cannot choose from an empty sequence")
        return items[self.randint(len(items))]

    def weighted_index(self, weights: Sequence[float]) -> int:
        """Index drawn proportionally to non-negative weights."""
        total = float(sum(weights))
        if total <= 0:
            raise ConfigError("weights must sum to a positive value")
        r = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if r < acc:
                return i
        return len(weights) - 1
