"""Construction of contrastive objectives.

Source contrast pairs each segment with randomly chosen other segments of the
same document (seeded, derangement-checked shuffles). Language contrast
penalizes decoding under wrong target-language conditioning: English and the
source language, excluding the target itself.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (ConditioningContext, ConfigError, ContrastiveObjective,
                   DataError, Document, Rng, check_lang_code)

_MAX_SHUFFLE_ATTEMPTS = 10_000


@dataclass(frozen=True)
class ContrastConfig:
    """Weights and sizes for objective construction.

    lambda_src is split evenly across the k source-contrastive inputs;
    lambda_lang applies per contrastive language.
    """

    lambda_src: float = 0.7
    lambda_lang: float = 0.1
    num_src_contrastive: int = 1
    english_code: str = "en"

    def __post_init__(self):
        if self.lambda_src < 0 or self.lambda_lang < 0:
            raise ConfigError("contrastive weights must be >= 0")
        if self.num_src_contrastive < 1:
            raise ConfigError("num_src_contrastive must be >= 1")
        check_lang_code(self.english_code)


def assign_contrastive_sources(doc: Document, k: int, rng: Rng) -> list[list[int]]:
    """For each segment, pick k contrastive segment indices by seeded shuffles.

    Each of the k rounds is a full permutation of the document, resampled
    until it is a derangement and collides with no earlier round at any
    position, so a segment never contrasts with itself or with a duplicate.
    """
    n = len(doc.segments)
    if n < k + 1:
        raise DataError(
            f"insufficient contrast pool: {n} segments for k={k}")
    rounds: list[list[int]] = []
    for _ in range(k):
        perm = _sample_disjoint_derangement(n, rounds, rng)
        rounds.append(perm)
    return [[perm[i] for perm in rounds] for i in range(n)]


def _sample_disjoint_derangement(n: int, previous: list[list[int]],
                                 rng: Rng) -> list[int]:
    for _ in range(_MAX_SHUFFLE_ATTEMPTS):
        perm = rng.permutation(n)
        if any(perm[i] == i for i in range(n)):
            continue
        if any(perm[i] == prev[i] for prev in previous for i in range(n)):
            continue
        return perm
    # Tiny pools can make rejection sampling impractical; fall back to a
    # rotation, which is a derangement and disjoint from all other rotations.
    for shift in range(1, n):
        perm = [(i + shift) % n for i in range(n)]
        if all(perm[i] != prev[i] for prev in previous for i in range(n)):
            return perm
    raise DataError("could not find a disjoint derangement")


def contrastive_language_set(src: str, tgt: str,
                             english: str = "en") -> list[str]:
    """Languages to penalize: English and the source language, minus the
    target, deduplicated. Order is stable: English first."""
    src, tgt, english = check_lang_code(src), check_lang_code(tgt), check_lang_code(english)
    if src == tgt:
        raise ConfigError(f"degenerate direction: {src}->{tgt}")
    langs = []
    for code in (english, src):
        if code != tgt and code not in langs:
            langs.append(code)
    return langs


def build_objective(ctx: ConditioningContext, contrast_sources: list[str],
                    config: ContrastConfig) -> ContrastiveObjective:
    """Combine source-contrastive and language-contrastive inputs.

    Produces k source negatives at weight lambda_src/k (same target language,
    different source) plus one negative per contrastive language at weight
    lambda_lang (same source, replaced target language). Zero-weight groups
    are omitted entirely.
    """
    negatives: list[tuple[ConditioningContext, float]] = []
    if config.lambda_src > 0:
        if len(contrast_sources) != config.num_src_contrastive:
            raise ConfigError(
                f"expected {config.num_src_contrastive} contrastive sources, "
                f"got {len(contrast_sources)}")
        w = config.lambda_src / config.num_src_contrastive
        for source in contrast_sources:
            negatives.append((ctx.replace(source_text=source), w))
    if config.lambda_lang > 0:
        for lang in contrastive_language_set(ctx.source_lang, ctx.target_lang,
                                             config.english_code):
            neg = ctx.replace(target_lang=lang)
            if ctx.mode == "llm":
                # llm-mode scorers realize the contrast inside the
                # instruction text, not via an indicator token.
                neg = neg.replace(prompt_variant=f"contrastive:{lang}")
            negatives.append((neg, config.lambda_lang))
    return ContrastiveObjective(ctx, tuple(negatives))
