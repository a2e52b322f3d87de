"""Serve Hugging Face translation models and prompted LLMs over the
newline-delimited JSON scorer protocol, plus optional fasttext language
identification for evaluation."""

from .backends import (BackendError, EchoBackend, PromptedLmBackend,
                       TranslationBackend, decoder_start_ids, make_backend)
from .config import AdapterConfig, AdapterError, config_from_mapping, \
    load_config
from .lid import FasttextIdentifier, LidUnavailable, lid_classify, \
    load_identifier
from .prompts import (ASSISTANT_PREFIX, ONE_SHOT_TEMPLATE,
                      ZERO_SHOT_TEMPLATE, effective_target, language_name,
                      render_prompt)
from .server import handle_session, serve_model, serve_tcp
from .wire import (DEFAULT_TOP_K, DENSE_VOCAB_LIMIT, LOGPROB_FLOOR,
                   WireError, dump_frame, pack_distribution, parse_context,
                   parse_frame)

__version__ = "0.1.0"

__all__ = [
    "ASSISTANT_PREFIX", "AdapterConfig", "AdapterError", "BackendError",
    "DEFAULT_TOP_K", "DENSE_VOCAB_LIMIT", "EchoBackend",
    "FasttextIdentifier", "LOGPROB_FLOOR", "LidUnavailable",
    "ONE_SHOT_TEMPLATE", "PromptedLmBackend", "TranslationBackend",
    "WireError", "ZERO_SHOT_TEMPLATE", "config_from_mapping",
    "decoder_start_ids", "dump_frame", "effective_target", "handle_session",
    "language_name", "lid_classify", "load_config", "load_identifier",
    "make_backend", "pack_distribution", "parse_context", "parse_frame",
    "render_prompt", "serve_model", "serve_tcp",
]
