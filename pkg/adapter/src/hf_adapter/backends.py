"""Model backends: the things that actually produce distributions.

A backend exposes four operations — describe (the handshake body),
tokenize, detokenize, and next_rows (one probability row per prefix) —
plus a default_top_k for responses whose request did not choose. Three
implementations:

- EchoBackend: a deterministic stub (emit one fixed token N times, then
  EOS) for wire-level tests and diagnostics. No model runtime needed.
- TranslationBackend: encoder-decoder translation models (M2M-100 class)
  whose target language is an indicator token; conditioning happens in the
  decoder start sequence, so clients never pay for indicator tokens.
- PromptedLmBackend: causal LMs driven by chat-style translation prompts
  with a forced assistant prefix; the prompt realizes positive and
  contrastive language variants.

The Hugging Face backends import transformers/torch lazily so that the
echo path, config handling, and wire tests work without them installed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import prompts
from .config import AdapterConfig

_ECHO_DEFAULTS = {"fixed_id": 5, "length": 2, "vocab_size": 8}


class BackendError(RuntimeError):
    """Model loading or inference failure, reported in-band."""


def _check_prefix_lengths(prefixes: Sequence[Sequence[int]],
                          max_context_len: int) -> None:
    for prefix in prefixes:
        if len(prefix) > max_context_len:
            raise BackendError(
                f"prefix of {len(prefix)} tokens exceeds the context "
                f"limit {max_context_len}")


class EchoBackend:
    """One-hot stub: a fixed token `length` times, then EOS.

    Token ids 0..3 are pad/bos/eos/unk; ids 4.. are the words w0, w1, ...
    Behaviour is independent of the conditioning context, which makes
    transcripts reproducible by construction.
    """

    default_top_k = 0

    def __init__(self, fixed_id: int = 5, length: int = 2,
                 vocab_size: int = 8, max_context_len: int = 1024):
        if vocab_size < 5:
            raise BackendError("echo vocab must hold the specials plus one word")
        if not 0 <= fixed_id < vocab_size:
            raise BackendError(f"fixed id {fixed_id} outside vocab")
        self._fixed = fixed_id
        self._length = length
        self._vocab_size = vocab_size
        self._max_context_len = max_context_len

    def describe(self) -> dict:
        return {"vocab_size": self._vocab_size,
                "bos_id": 1, "eos_id": 2, "unk_id": 3, "pad_id": 0,
                "max_context_len": self._max_context_len,
                "supports": {"language_indicators": False,
                             "llm_prompting": False}}

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        out = []
        for word in text.split():
            if word.startswith("w") and word[1:].isdigit():
                token_id = 4 + int(word[1:])
                out.append(token_id if token_id < self._vocab_size else 3)
            else:
                out.append(3)
        return out

    def detokenize(self, tokens: Sequence[int]) -> str:
        return " ".join(f"w{t - 4}" for t in tokens if t >= 4)

    def next_rows(self, context: dict,
                  prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        _check_prefix_lengths(prefixes, self._max_context_len)
        rows = np.zeros((len(prefixes), self._vocab_size), dtype=np.float64)
        for i, prefix in enumerate(prefixes):
            rows[i, self._fixed if len(prefix) < self._length else 2] = 1.0
        return rows


def parse_echo_spec(spec: str) -> dict:
    """Parse ``echo`` / ``echo:fixed_id=5,length=2,vocab_size=8``."""
    _, _, params = spec.partition(":")
    out = dict(_ECHO_DEFAULTS)
    if not params:
        return out
    for part in params.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in out:
            raise BackendError(f"bad echo model parameter {part!r}")
        try:
            out[key] = int(value)
        except ValueError:
            raise BackendError(f"bad echo model parameter {part!r}")
    return out


def decoder_start_ids(prefix: Sequence[int], start_id: int,
                      indicator_id: int | None,
                      indicator_ids: frozenset[int]) -> list[int]:
    """Decoder input for one prefix: start token, indicator, then content.

    A client that already placed a known indicator at the head of its
    prefix (the engine's zero-cost forced-prefix route) keeps it; the
    backend must not condition twice.
    """
    prefix = [int(t) for t in prefix]
    if indicator_id is None or (prefix and prefix[0] in indicator_ids):
        return [start_id] + prefix
    return [start_id, indicator_id] + prefix


class _HuggingFaceBackend:
    """Shared loading and batching for the transformers-based backends."""

    def __init__(self, config: AdapterConfig, auto_model_cls_name: str):
        self._config = config
        try:
            import torch
            import transformers
        except ImportError as exc:
            raise BackendError(
                f"model backend requires transformers and torch: {exc}")
        self._torch = torch
        model_cls = getattr(transformers, auto_model_cls_name)
        load_kwargs = {}
        if config.quantize_4bit:
            try:
                load_kwargs["quantization_config"] = \
                    transformers.BitsAndBytesConfig(load_in_4bit=True)
            except (AttributeError, ImportError) as exc:
                raise BackendError(f"4-bit quantization unavailable: {exc}")
        try:
            self.tokenizer = transformers.AutoTokenizer.from_pretrained(
                config.model)
            self.model = model_cls.from_pretrained(config.model, **load_kwargs)
            if not config.quantize_4bit:
                self.model.to(config.device)
            self.model.eval()
        except BackendError:
            raise
        except Exception as exc:
            raise BackendError(f"cannot load model {config.model!r}: {exc}")
        self.vocab_size = len(self.tokenizer)
        self.pad_id = self._special_id("pad_token_id", 0)

    def _special_id(self, name: str, fallback: int) -> int:
        value = getattr(self.tokenizer, name, None)
        return int(value) if value is not None else fallback

    def _special_ids(self) -> dict:
        eos = self._special_id("eos_token_id", 0)
        return {"bos_id": self._special_id("bos_token_id", eos),
                "eos_id": eos,
                "unk_id": self._special_id("unk_token_id", 0),
                "pad_id": self.pad_id}

    def _rows_from_token_batch(self, rows: list[list[int]]) -> np.ndarray:
        """Softmax over the logits at each row's last real position."""
        torch = self._torch
        lengths = [len(r) for r in rows]
        width = max(lengths)
        batch = torch.full((len(rows), width), self.pad_id, dtype=torch.long)
        mask = torch.zeros((len(rows), width), dtype=torch.long)
        for i, row in enumerate(rows):
            batch[i, :len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, :len(row)] = 1
        batch = batch.to(self._config.device)
        mask = mask.to(self._config.device)
        with torch.no_grad():
            logits = self._forward(batch, mask)
        index = torch.tensor(lengths, device=logits.device) - 1
        last = logits[torch.arange(len(rows), device=logits.device), index]
        probs = torch.softmax(last.double(), dim=-1)
        return probs.cpu().numpy()

    def _forward(self, batch, mask):
        raise NotImplementedError

    def _check_token_ids(self, prefixes: Sequence[Sequence[int]]) -> None:
        for prefix in prefixes:
            for token in prefix:
                if not 0 <= int(token) < self.vocab_size:
                    raise BackendError(f"token id {token} outside the "
                                       f"vocabulary of {self.vocab_size}")


class TranslationBackend(_HuggingFaceBackend):
    """Encoder-decoder translation models with language indicator tokens."""

    def __init__(self, config: AdapterConfig):
        super().__init__(config, "AutoModelForSeq2SeqLM")
        self.default_top_k = config.top_k
        self._indicators = {
            str(code): int(i)
            for code, i in (getattr(self.tokenizer, "lang_code_to_id", None)
                            or {}).items()}
        self._indicator_ids = frozenset(self._indicators.values())
        start = getattr(self.model.config, "decoder_start_token_id", None)
        self._start_id = (int(start) if start is not None
                          else self._special_ids()["eos_id"])

    def describe(self) -> dict:
        body = {"vocab_size": self.vocab_size, **self._special_ids(),
                "max_context_len": self._config.max_context_len,
                "supports": {"language_indicators": bool(self._indicators),
                             "llm_prompting": False}}
        if self._indicators:
            body["language_indicators"] = dict(self._indicators)
        return body

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        return [int(t) for t in
                self.tokenizer(text, add_special_tokens=False).input_ids]

    def detokenize(self, tokens: Sequence[int]) -> str:
        return self.tokenizer.decode([int(t) for t in tokens],
                                     skip_special_tokens=True)

    def _indicator_for(self, lang: str) -> int | None:
        if not self._indicators:
            return None
        indicator = self._indicators.get(lang)
        if indicator is None:
            raise BackendError(f"model has no language indicator for {lang!r}")
        return indicator

    def next_rows(self, context: dict,
                  prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        _check_prefix_lengths(prefixes, self._config.max_context_len)
        self._check_token_ids(prefixes)
        torch = self._torch
        if hasattr(self.tokenizer, "src_lang") and \
                context["source_lang"] in self._indicators:
            self.tokenizer.src_lang = context["source_lang"]
        encoded = self.tokenizer(context["source_text"], return_tensors="pt")
        self._enc_ids = encoded.input_ids.to(self._config.device)
        self._enc_mask = encoded.attention_mask.to(self._config.device)
        indicator = self._indicator_for(context["target_lang"])
        rows = [decoder_start_ids(p, self._start_id, indicator,
                                  self._indicator_ids) for p in prefixes]
        return self._rows_from_token_batch(rows)

    def _forward(self, batch, mask):
        n = batch.shape[0]
        out = self.model(input_ids=self._enc_ids.expand(n, -1),
                         attention_mask=self._enc_mask.expand(n, -1),
                         decoder_input_ids=batch,
                         decoder_attention_mask=mask)
        return out.logits


class PromptedLmBackend(_HuggingFaceBackend):
    """Causal LMs conditioned through chat-style translation prompts."""

    def __init__(self, config: AdapterConfig):
        super().__init__(config, "AutoModelForCausalLM")
        self.default_top_k = config.top_k

    def describe(self) -> dict:
        return {"vocab_size": self.vocab_size, **self._special_ids(),
                "max_context_len": self._config.max_context_len,
                "supports": {"language_indicators": False,
                             "llm_prompting": True}}

    def tokenize(self, text: str, role: str = "target") -> list[int]:
        return [int(t) for t in
                self.tokenizer(text, add_special_tokens=False).input_ids]

    def detokenize(self, tokens: Sequence[int]) -> str:
        return self.tokenizer.decode([int(t) for t in tokens],
                                     skip_special_tokens=True)

    def next_rows(self, context: dict,
                  prefixes: Sequence[Sequence[int]]) -> np.ndarray:
        _check_prefix_lengths(prefixes, self._config.max_context_len)
        self._check_token_ids(prefixes)
        try:
            prompt = prompts.render_prompt(
                self._config, context["source_text"], context["source_lang"],
                context["target_lang"], context.get("prompt_variant"))
        except ValueError as exc:
            raise BackendError(str(exc))
        base = [int(t) for t in self.tokenizer(prompt).input_ids]
        rows = [base + [int(t) for t in p] for p in prefixes]
        return self._rows_from_token_batch(rows)

    def _forward(self, batch, mask):
        return self.model(input_ids=batch, attention_mask=mask).logits


def make_backend(config: AdapterConfig):
    """Build the backend a config asks for; failures raise BackendError."""
    if config.model == "echo" or config.model.startswith("echo:"):
        backend = EchoBackend(max_context_len=config.max_context_len,
                              **parse_echo_spec(config.model))
        backend.default_top_k = config.top_k
        return backend
    if config.mode == "llm":
        return PromptedLmBackend(config)
    return TranslationBackend(config)
