"""Shared test doubles and the acceptance-summary terminal hook."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from fwgen import extraction, generation, judge
from fwgen.gateway import Cassette, GatewayConfig, LlmGateway

# Filled by tests/test_acceptance.py; printed at the end of the run.
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        description, passed = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {description}")


def _prefix(template: str) -> str:
    return template.split("{", 1)[0]


_KIND_PREFIXES = (
    ("extract_refine", _prefix(extraction.REFINE_PROMPT)),
    ("review_goals", _prefix(extraction.REVIEW_GOALS_PROMPT)),
    ("validate", _prefix(extraction.VALIDATE_GOALS_PROMPT)),
    ("merge", _prefix(extraction.MERGE_PROMPT)),
    ("quality", _prefix(judge.QUALITY_PROMPT)),
    ("novelty", _prefix(judge.NOVELTY_PROMPT)),
    ("nli", _prefix(judge.NLI_PROMPT)),
    ("feasibility", _prefix(judge.FEASIBILITY_PROMPT)),
    ("generate", generation.INITIAL_INSTRUCTION.split("\n", 1)[0]),
)


def classify_prompt(prompt: str) -> str:
    for kind, prefix in _KIND_PREFIXES:
        if prompt.startswith(prefix):
            return kind
    raise AssertionError(f"unclassifiable prompt: {prompt[:60]!r}")


class ScriptedTransport:
    """Chat responses served from per-kind queues, keyed by prompt prefix.

    Queues pop one response per provider call; an exhausted queue repeats
    its last response. Embeddings come from an explicit text->vector map,
    falling back to a deterministic hash vector, so dense scores are
    controllable where a test cares and stable where it does not.
    """

    def __init__(self, embeddings: dict[str, tuple[float, ...]] | None = None, dim: int = 8, **queues):
        self.queues = {kind: list(responses) for kind, responses in queues.items()}
        self.embeddings = dict(embeddings or {})
        self.dim = dim
        self.chat_calls: list[tuple[str, str]] = []
        self.embed_calls: list[int] = []

    def chat(self, request):
        from fwgen.gateway import ChatResponse

        prompt = request.messages[0][1]
        kind = classify_prompt(prompt)
        self.chat_calls.append((kind, prompt))
        queue = self.queues.get(kind)
        if not queue:
            raise AssertionError(f"no scripted response for kind {kind!r}")
        text = queue.pop(0) if len(queue) > 1 else queue[0]
        return ChatResponse(text=text, usage={})

    def embed(self, request):
        self.embed_calls.append(len(request.texts))
        return [self._vector(text) for text in request.texts]

    def _vector(self, text: str) -> tuple[float, ...]:
        if text in self.embeddings:
            return self.embeddings[text]
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=self.dim).digest()
        arr = (np.frombuffer(digest, dtype=np.uint8).astype(np.float64) - 127.5) / 127.5
        return tuple((arr / np.linalg.norm(arr)).tolist())


def make_gateway(transport, cassette: Cassette | None = None, **config_kw) -> LlmGateway:
    """Gateway with no real sleeping, for retry tests."""
    config = GatewayConfig(**config_kw)
    return LlmGateway(config, transport=transport, cassette=cassette, sleep=lambda seconds: None)


def quality_json(
    coherence: int = 4,
    relevance: int = 4,
    readability: int = 4,
    grammar: int = 4,
    overall: int = 4,
    justification: str = "Concise and grounded.",
) -> str:
    return json.dumps(
        {
            "coherence": coherence,
            "relevance": relevance,
            "readability": readability,
            "grammar": grammar,
            "overall": overall,
            "justification": justification,
        }
    )


def novelty_json(score: int = 8, reason: str = "Goes beyond the stated directions.") -> str:
    return json.dumps({"score": score, "reason": reason})
