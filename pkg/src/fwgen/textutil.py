"""Shared text primitives: word tokenization, sentence splitting, normalization.

Every token budget and every n-gram metric in this package counts tokens with
the same rule: lowercase word tokens at Unicode word boundaries. Keeping one
tokenizer avoids binding the pipeline to any provider's subword vocabulary.
"""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"\w+", re.UNICODE)

# Sentence boundary: '.', '!' or '?' followed by whitespace and an uppercase
# letter or digit. The token ending in '.' is checked against this stop list
# so common scholarly abbreviations do not split.
_ABBREVIATIONS = frozenset(
    {
        "al.",
        "e.g.",
        "i.e.",
        "cf.",
        "vs.",
        "fig.",
        "figs.",
        "eq.",
        "eqs.",
        "sec.",
        "secs.",
        "no.",
        "resp.",
        "approx.",
    }
)
_BOUNDARY_RE = re.compile(r"[.!?](?=\s+[A-Z0-9])")
_OPENERS = "([\"'“‘"


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens, the single tokenizer used across the package."""
    return _WORD_RE.findall(text.lower())


def count_tokens(text: str) -> int:
    return len(_WORD_RE.findall(text))


def split_sentences(text: str) -> list[str]:
    """Split text into sentences at terminal punctuation.

    A boundary is '.', '!' or '?' followed by whitespace and an uppercase
    letter or digit, unless the period terminates a known abbreviation
    (e.g. "et al.", "Fig."). Deterministic and dependency-free.
    """
    if not text.strip():
        return []
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        end = match.end()
        if text[match.start()] == "." and _ends_with_abbreviation(text[start:end]):
            continue
        sentence = text[start:end].strip()
        if sentence:
            sentences.append(sentence)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _ends_with_abbreviation(prefix: str) -> bool:
    words = prefix.split()
    if not words:
        return False
    last = words[-1].lower().lstrip(_OPENERS)
    return last in _ABBREVIATIONS


def normalize_sentence(sentence: str) -> str:
    """Lowercase, collapse whitespace, strip terminal punctuation.

    Trailing punctuation and spaces strip together ("x . ." -> "x"), so
    normalization is idempotent.
    """
    collapsed = " ".join(sentence.split()).lower()
    return collapsed.rstrip(".!?,;: ")


def sentence_set(text: str) -> set[str]:
    """Normalized sentences of ``text`` as a set, empty entries dropped."""
    out = set()
    for sentence in split_sentences(text):
        normalized = normalize_sentence(sentence)
        if normalized:
            out.add(normalized)
    return out
