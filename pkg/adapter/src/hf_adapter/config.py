"""Adapter configuration.

One AdapterConfig describes one served model: what to load, how to
condition it (translation model vs. chat-prompted LLM), and how responses
are shaped on the wire. The command-line entry point accepts the whole
thing as JSON — either a literal object or a path to a file holding one.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Mapping

from . import prompts


class AdapterError(ValueError):
    """Bad configuration or usage."""


@dataclass(frozen=True)
class AdapterConfig:
    """Everything needed to serve one model over the wire protocol.

    `model` is a Hugging Face model name or local path; the diagnostic
    scheme ``echo:...`` serves a deterministic stub instead (see
    backends.EchoBackend). `top_k` is the default response sparsity when a
    request does not choose its own (0 = dense). The template fields drive
    llm-mode prompting; templates must mention ``{target_language}``,
    since asking for a language is the whole point.
    """

    model: str
    mode: str = "mt"
    device: str = "cpu"
    top_k: int = 0
    max_context_len: int = 1024
    quantize_4bit: bool = False
    llm_shots: int = 0
    zero_shot_template: str = prompts.ZERO_SHOT_TEMPLATE
    one_shot_template: str = prompts.ONE_SHOT_TEMPLATE
    assistant_prefix: str = prompts.ASSISTANT_PREFIX
    example_source: str = prompts.EXAMPLE_SOURCE
    example_translation: str = prompts.EXAMPLE_TRANSLATION
    lid_model: str | None = None

    def __post_init__(self):
        if not self.model or not isinstance(self.model, str):
            raise AdapterError("model must be a non-empty string")
        if self.mode not in ("mt", "llm"):
            raise AdapterError(f"mode must be 'mt' or 'llm', not {self.mode!r}")
        if self.llm_shots not in (0, 1):
            raise AdapterError("llm_shots must be 0 or 1")
        if self.top_k < 0:
            raise AdapterError("top_k must be >= 0")
        if self.max_context_len < 1:
            raise AdapterError("max_context_len must be >= 1")
        for name in ("zero_shot_template", "one_shot_template"):
            if "{target_language}" not in getattr(self, name):
                raise AdapterError(
                    f"{name} must contain a {{target_language}} placeholder")
        self._check_templates_render()

    def _check_templates_render(self) -> None:
        """Fail fast on templates with unknown placeholders."""
        for template in (self.zero_shot_template, self.one_shot_template):
            try:
                prompts.render_template(
                    template, source_language="x", target_language="y",
                    source_text="z", example_source=self.example_source,
                    example_translation=self.example_translation,
                    assistant_prefix=self.assistant_prefix)
            except ValueError as exc:
                raise AdapterError(str(exc)) from exc

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_from_mapping(doc: Mapping) -> AdapterConfig:
    """Build a config from decoded JSON, rejecting unknown keys."""
    if not isinstance(doc, Mapping):
        raise AdapterError("config must be a JSON object")
    fields = {f.name for f in dataclasses.fields(AdapterConfig)}
    unknown = sorted(set(doc) - fields)
    if unknown:
        raise AdapterError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return AdapterConfig(**doc)
    except TypeError as exc:
        raise AdapterError(f"bad config: {exc}") from exc


def load_config(spec: str) -> AdapterConfig:
    """Parse a config argument: literal JSON, or a path to a JSON file.

    Anything whose first non-space character is ``{`` is treated as
    literal JSON; a leading ``@`` always means a file path.
    """
    text = spec
    stripped = spec.strip()
    if stripped.startswith("@") or not stripped.startswith("{"):
        path = stripped[1:] if stripped.startswith("@") else stripped
        if not os.path.exists(path):
            raise AdapterError(f"cannot read config: no such file {path!r}")
        try:
            with open(path, encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise AdapterError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AdapterError(f"config is not valid JSON: {exc}") from exc
    return config_from_mapping(doc)
