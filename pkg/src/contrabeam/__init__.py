"""Model-agnostic contrastive beam-search decoding and MT evaluation."""

from .contrast import (ContrastConfig, assign_contrastive_sources,
                       build_objective, contrastive_language_set)
from .core import (ConditioningContext, ConfigError, ContrastiveObjective,
                   DataError, Document, EngineError, Rng, ScorerError, Token,
                   Vocabulary, make_vocabulary)
from .decoder import (DecodeParams, Hypothesis, beam_search, combine_step,
                      exhaustive_decode, greedy_decode, sequence_score)
from .metrics import (ChrfParams, EvalRecord, NaiveBayesLanguageIdentifier,
                      OffTargetCounts, TngParams, bleu, chrf2, corpus_bleu,
                      hallucination_rate, off_target_counts, tng_flag,
                      top_ngram_count)
from .protocol import (ProtocolError, RemoteScorer, StdioTransport,
                       TcpTransport, batch_plan, connect, serve)
from .scoring import (Scorer, ScorerDescriptor, StepDistribution, TableScorer,
                      validate_distribution)
from .synthetic import SyntheticTranslator, synthetic_corpus, toy_world

__version__ = "0.1.0"

__all__ = [
    "ChrfParams", "ConditioningContext", "ConfigError", "ContrastConfig",
    "ContrastiveObjective", "DataError", "DecodeParams", "Document",
    "EngineError", "EvalRecord", "Hypothesis",
    "NaiveBayesLanguageIdentifier", "OffTargetCounts", "ProtocolError",
    "RemoteScorer", "Rng", "Scorer", "ScorerDescriptor", "ScorerError",
    "StdioTransport", "StepDistribution", "SyntheticTranslator",
    "TableScorer", "TcpTransport", "TngParams", "Token", "Vocabulary",
    "assign_contrastive_sources", "batch_plan", "beam_search", "bleu",
    "build_objective", "chrf2", "combine_step", "connect",
    "contrastive_language_set", "corpus_bleu", "exhaustive_decode",
    "greedy_decode", "hallucination_rate", "make_vocabulary",
    "off_target_counts", "sequence_score", "serve", "synthetic_corpus",
    "tng_flag", "top_ngram_count", "toy_world", "validate_distribution",
]
