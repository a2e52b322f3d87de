"""Language identification over a fasttext-format classifier.

Pointing `lid_model` at an OpenLID-style .bin gives per-segment language
codes with confidences for off-target evaluation. When the model file or
the fasttext package is missing, the classifier declares itself
unavailable with a clear message instead of guessing — callers (the
evaluation CLI has its own small built-in classifier) decide how to fall
back. Empty input is answered with the "und" sentinel rather than asking
the model to label nothing.
"""

from __future__ import annotations

import os
from typing import Sequence

_LABEL_PREFIX = "__label__"


class LidUnavailable(RuntimeError):
    """No usable language-identification model."""


class FasttextIdentifier:
    """Wrap any fasttext-like object exposing predict(text) -> labels, probs."""

    def __init__(self, model):
        self._model = model

    def classify(self, text: str) -> tuple[str, float]:
        labels, probs = self._model.predict(text)
        if not len(labels):
            return ("und", 0.0)
        label = str(labels[0])
        if label.startswith(_LABEL_PREFIX):
            label = label[len(_LABEL_PREFIX):]
        return (label, float(probs[0]))


def load_identifier(model_path: str | None) -> FasttextIdentifier:
    if not model_path:
        raise LidUnavailable("no language identification model configured")
    try:
        import fasttext
    except ImportError as exc:
        raise LidUnavailable(
            f"language identification needs the fasttext package: {exc}")
    if not os.path.exists(model_path):
        raise LidUnavailable(f"no such model file: {model_path!r}")
    try:
        # fasttext's loader prints a deprecation banner on stderr; the
        # model object is what matters.
        model = fasttext.load_model(model_path)
    except Exception as exc:
        raise LidUnavailable(f"cannot load {model_path!r}: {exc}")
    return FasttextIdentifier(model)


def lid_classify(texts: Sequence[str], identifier=None,
                 model_path: str | None = None) -> list[tuple[str, float]]:
    """One (language code, confidence) pair per text.

    Whitespace-only texts map to ("und", 1.0). Raises LidUnavailable when
    no identifier is given and none can be loaded from `model_path`.
    """
    if identifier is None:
        identifier = load_identifier(model_path)
    out = []
    for text in texts:
        flat = " ".join(text.split())
        if not flat:
            out.append(("und", 1.0))
            continue
        out.append(identifier.classify(flat))
    return out
