"""Deterministic offline provider for demos and recorded test cassettes.

Implements the gateway transport protocol without any network access.
Embeddings hash the text into a fixed-dimension unit vector; chat
responses are computed from the prompt with pure string logic, dispatched
on each prompt template's literal prefix. Every response is a
deterministic function of the request, so recording a cassette from this
transport and replaying it later gives byte-identical runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
from typing import Callable

import numpy as np

from . import extraction, generation, judge
from .gateway import ChatRequest, ChatResponse, EmbedRequest, GatewayError, Vector
from .textutil import normalize_sentence, split_sentences, tokenize

logger = logging.getLogger(__name__)

_FUTURE_SIGNALS = ("future", "plan", "extend", "explore", "will", "direction")
_SUGGESTION_SIGNALS = ("suggest", "should", "could", "future", "recommend", "explore", "extend")
_SHORT_TERM_SIGNALS = ("typo", "minor", "presentation", "formatting", "citation")


def _template_prefix(template: str) -> str:
    return template.split("{", 1)[0]


def _after(prompt: str, marker: str) -> str:
    index = prompt.find(marker)
    if index < 0:
        raise GatewayError(f"offline transport: marker {marker!r} not in prompt")
    return prompt[index + len(marker):]


def _between(prompt: str, start: str, end: str) -> str:
    return _after(prompt, start).split(end, 1)[0]


def _h(text: str, salt: str) -> int:
    digest = hashlib.blake2b(f"{salt}|{text}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class OfflineTransport:
    """Networkless transport with deterministic, content-derived responses."""

    def __init__(self, dim: int = 32):
        if not 1 <= dim <= 64:
            raise ValueError("embedding dimension must be in 1-64")
        self.dim = dim
        self._handlers: list[tuple[str, Callable[[str], str]]] = [
            (_template_prefix(extraction.REFINE_PROMPT), self._refine_extraction),
            (_template_prefix(extraction.REVIEW_GOALS_PROMPT), self._review_goals),
            (_template_prefix(extraction.VALIDATE_GOALS_PROMPT), self._validate_goals),
            (_template_prefix(extraction.MERGE_PROMPT), self._merge),
            (_template_prefix(judge.QUALITY_PROMPT), self._quality),
            (_template_prefix(judge.NOVELTY_PROMPT), self._novelty),
            (_template_prefix(judge.NLI_PROMPT), self._nli),
            (_template_prefix(judge.FEASIBILITY_PROMPT), self._feasibility),
            (generation.INITIAL_INSTRUCTION.split("\n", 1)[0], self._generate),
        ]

    def chat(self, request: ChatRequest) -> ChatResponse:
        prompt = request.messages[0][1]
        for prefix, handler in self._handlers:
            if prompt.startswith(prefix):
                return ChatResponse(text=handler(prompt), usage={})
        raise GatewayError(f"offline transport: unrecognized prompt {prompt[:60]!r}")

    def embed(self, request: EmbedRequest) -> list[Vector]:
        return [self._embed_one(text) for text in request.texts]

    def _embed_one(self, text: str) -> Vector:
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=self.dim).digest()
        arr = (np.frombuffer(digest, dtype=np.uint8).astype(np.float64) - 127.5) / 127.5
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            arr = np.ones(self.dim, dtype=np.float64)
            norm = float(np.linalg.norm(arr))
        return tuple((arr / norm).tolist())

    # One handler per prompt template; each parses its payload back out of
    # the rendered prompt, so responses depend only on request content.

    def _refine_extraction(self, prompt: str) -> str:
        source = _after(prompt, "Extracted text:\n")
        sentences = split_sentences(source)
        kept = [s for s in sentences if any(w in s.lower() for w in _FUTURE_SIGNALS)]
        return " ".join(s.strip() for s in (kept or sentences))

    def _review_goals(self, prompt: str) -> str:
        source = _after(prompt, "Reviews:\n")
        kept = []
        for sentence in split_sentences(source):
            if any(w in sentence.lower() for w in _SUGGESTION_SIGNALS):
                kept.append(sentence.strip())
        return "\n".join(kept)

    def _validate_goals(self, prompt: str) -> str:
        source = _after(prompt, "Suggestions:\n")
        kept = [
            line
            for line in source.splitlines()
            if line.strip() and not any(w in line.lower() for w in _SHORT_TERM_SIGNALS)
        ]
        return "\n".join(kept)

    def _merge(self, prompt: str) -> str:
        source_a = _between(prompt, "Source A (from the paper):\n", "\n\nSource B (from the reviews):\n")
        source_b = _after(prompt, "\n\nSource B (from the reviews):\n")
        seen = set()
        merged = []
        for sentence in split_sentences(source_a) + split_sentences(source_b):
            norm = normalize_sentence(sentence)
            if norm and norm not in seen:
                seen.add(norm)
                merged.append(sentence.strip())
        return " ".join(merged)

    def _quality(self, prompt: str) -> str:
        generated = _between(prompt, "Machine-generated text:\n", "\n\nGround truth:")
        scores = {name: 3 + _h(generated, name) % 3 for name in judge.QUALITY_CRITERIA}
        low = [name for name, value in scores.items() if value <= 3]
        if low:
            justification = f"Weak {', '.join(low)}; tie the suggestions more tightly to the paper."
        else:
            justification = "Clear, well grounded suggestions across all criteria."
        return json.dumps(scores | {"justification": justification}, sort_keys=True)

    def _novelty(self, prompt: str) -> str:
        generated = _between(prompt, "Generated future work:\n", "\n\nGround truth:")
        score = 6 + _h(generated, "novelty") % 4
        if score <= 7:
            reason = "Largely restates the ground truth directions."
        else:
            reason = "Introduces directions beyond the ground truth."
        return json.dumps({"score": score, "reason": reason}, sort_keys=True)

    def _nli(self, prompt: str) -> str:
        hypothesis = _after(prompt, "Hypothesis:\n")
        return "neutral" if _h(hypothesis, "nli") % 4 == 0 else "entailment"

    def _feasibility(self, prompt: str) -> str:
        generated = _after(prompt, "Proposed future work:\n")
        return "not feasible" if _h(generated, "feasibility") % 20 == 0 else "feasible"

    def _generate(self, prompt: str) -> str:
        abstract = _after(prompt, "[abstract]\n").split("\n\n[", 1)[0]
        words = [w for w in tokenize(abstract) if len(w) > 4]
        if not words:
            words = ["retrieval", "evaluation", "analysis", "modeling", "scaling", "robustness"]

        def pick(salt: str) -> str:
            return words[_h(prompt, salt) % len(words)]

        return (
            f"Future work will explore {pick('a')} beyond the current {pick('b')} setting. "
            f"We plan to extend the {pick('c')} study with stronger {pick('d')} baselines. "
            f"Another direction is applying the approach to {pick('e')} under varied {pick('f')} conditions."
        )
