"""Chat-prompt construction for LLM-mode translation.

The model is instructed to translate a segment into a named language, and
the assistant's reply is forced to begin with a fixed line so that the
first thing decoded after the prompt is the translation itself, not a
preamble. A request's prompt_variant picks what to ask for: the positive
variant names the real target language, and ``contrastive:<lang>`` renders
the same prompt asking for ``<lang>`` instead, which is how a
language-contrastive penalty is expressed against a model that has no
target-language indicator tokens.
"""

from __future__ import annotations

ASSISTANT_PREFIX = "Sure, here's the translation:"

ZERO_SHOT_TEMPLATE = (
    "[INST] <<SYS>>\n"
    "You are a machine translation system that translates sentences from "
    "{source_language} to {target_language}. You just respond with the "
    "translation, without any additional comments.\n"
    "<</SYS>>[INST] {source_text}\n"
    "\n"
    "Translate to {target_language} [/INST]"
)

ONE_SHOT_TEMPLATE = (
    "[INST] <<SYS>>\n"
    "You are a machine translation system that translates sentences from "
    "{source_language} to {target_language}. You just respond with the "
    "translation, without any additional comments.\n"
    "\n"
    "Example instruction:\n"
    "\n"
    "{example_source}\n"
    "Translate to {target_language}\n"
    "\n"
    "Example response:\n"
    "\n"
    "{assistant_prefix}\n"
    "{example_translation}\n"
    "<</SYS>>[INST] {source_text}\n"
    "\n"
    "Translate to {target_language} [/INST]"
)

EXAMPLE_SOURCE = (
    "On Monday, scientists from the Stanford University School of Medicine "
    "announced the invention of a new diagnostic tool that can sort cells "
    "by type: a tiny printable chip that can be manufactured using standard "
    "inkjet printers for possibly about one U.S. cent each.")

EXAMPLE_TRANSLATION = (
    "Am Montag haben die Wissenschaftler der Stanford University School of "
    "Medicine die Erfindung eines neuen Diagnosetools bekanntgegeben, mit "
    "dem Zellen nach ihrem Typ sortiert werden können: ein winziger, "
    "ausdruckbarer Chip, der für jeweils etwa einen US-Cent mit "
    "Standard-Tintenstrahldruckern hergestellt werden kann.")

# Display names for the language codes prompts are likely to see; anything
# else is named by its code, which instruction-tuned models usually still
# understand for the common ISO codes.
LANGUAGE_NAMES = {
    "af": "Afrikaans", "ar": "Arabic", "ast": "Asturian", "be": "Belarusian",
    "bg": "Bulgarian", "ca": "Catalan", "cs": "Czech", "cy": "Welsh",
    "da": "Danish", "de": "German", "el": "Greek", "en": "English",
    "es": "Spanish", "et": "Estonian", "fa": "Persian", "fi": "Finnish",
    "fr": "French", "ga": "Irish", "gl": "Galician", "ha": "Hausa",
    "he": "Hebrew", "hi": "Hindi", "hr": "Croatian", "hu": "Hungarian",
    "id": "Indonesian", "is": "Icelandic", "it": "Italian", "ja": "Japanese",
    "ko": "Korean", "lt": "Lithuanian", "lv": "Latvian", "nl": "Dutch",
    "no": "Norwegian", "oc": "Occitan", "pl": "Polish", "pt": "Portuguese",
    "ro": "Romanian", "ru": "Russian", "sk": "Slovak", "sl": "Slovenian",
    "sr": "Serbian", "sv": "Swedish", "sw": "Swahili", "th": "Thai",
    "tr": "Turkish", "uk": "Ukrainian", "vi": "Vietnamese", "zh": "Chinese",
    "zu": "Zulu",
}


def language_name(code: str) -> str:
    """Human-readable name for a language code, falling back to the code."""
    return LANGUAGE_NAMES.get(code, code)


def effective_target(target_lang: str, prompt_variant: str | None) -> str:
    """Resolve a prompt variant to the language the prompt should ask for.

    ``None`` and ``"positive"`` keep the real target; ``"contrastive:<lang>"``
    substitutes ``<lang>``.
    """
    if prompt_variant is None or prompt_variant == "positive":
        return target_lang
    scheme, _, lang = prompt_variant.partition(":")
    if scheme == "contrastive" and lang:
        return lang
    raise ValueError(
        f"bad prompt_variant {prompt_variant!r}; expected 'positive' or "
        "'contrastive:<lang>'")


def render_template(template: str, **fields: str) -> str:
    """Fill a prompt template, turning placeholder mistakes into ValueError."""
    try:
        return template.format(**fields)
    except (KeyError, IndexError) as exc:
        raise ValueError(f"prompt template references unknown field: {exc}")


def render_prompt(config, source_text: str, source_lang: str,
                  target_lang: str, prompt_variant: str | None = None) -> str:
    """Build the full model input: rendered template + forced prefix.

    `config` is an AdapterConfig (duck-typed: the template and example
    fields are read off it). The forced assistant prefix is appended so
    that the caller's prefixes continue right after it.
    """
    asked = language_name(effective_target(target_lang, prompt_variant))
    template = (config.one_shot_template if config.llm_shots
                else config.zero_shot_template)
    body = render_template(
        template,
        source_language=language_name(source_lang),
        target_language=asked,
        source_text=source_text,
        example_source=config.example_source,
        example_translation=config.example_translation,
        assistant_prefix=config.assistant_prefix)
    return body + config.assistant_prefix
