"""LLM-as-judge scoring with strict response parsing.

Four judgments over generated future work: a five-criterion quality score,
a 0-10 novelty score against the ground truth, an NLI hallucination check
against the source paper, and a feasibility check. Parsers never fabricate
values; a malformed response earns exactly one structured re-prompt, then
a hard error. Out-of-range scores fail immediately.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .gateway import LlmGateway

logger = logging.getLogger(__name__)

NLI_LABELS = ("entailment", "neutral", "contradiction")

QUALITY_CRITERIA = ("coherence", "relevance", "readability", "grammar", "overall")

QUALITY_PROMPT = """You are given a machine-generated future work passage and the ground truth
future work for the same paper. Evaluate the generated text on these
criteria, assigning each an integer score from 1 to 5 (1 = very poor,
5 = excellent):

- coherence: coherence and logical consistency
- relevance: relevance and accuracy with respect to the ground truth
- readability: readability and style
- grammar: grammatical correctness
- overall: overall quality

Respond with only a JSON object with integer keys "coherence",
"relevance", "readability", "grammar", "overall" and a string key
"justification" explaining the scores.

Machine-generated text:
{generated}

Ground truth:
{ground_truth}"""

NOVELTY_PROMPT = """Compare the generated future work below with the ground truth future work
and assign a novelty score from 0 to 10, where 0 indicates complete
overlap with the ground truth and 10 indicates a completely new direction.

Respond with only a JSON object with keys "score" (integer from 0-10) and
"reason" (string).

Generated future work:
{generated}

Ground truth:
{ground_truth}"""

NLI_PROMPT = """You are given a premise and a hypothesis. Decide whether the hypothesis
is entailed by, neutral to, or contradicts the premise. Respond with
exactly one word: entailment, neutral, or contradiction.

Premise:
{premise}

Hypothesis:
{hypothesis}"""

FEASIBILITY_PROMPT = """Given the research paper below and a proposed future work direction,
decide whether the proposal is executable in the context of the paper's
methodology, that is, whether it could be carried out as a follow-up
study. Respond with 'feasible' or 'not feasible' and nothing else.

Paper:
{paper_text}

Proposed future work:
{generated}"""

QUALITY_RETRY = "Respond with only the JSON object described above, no other text."
NOVELTY_RETRY = "Respond with only the JSON object with keys \"score\" and \"reason\"."
NLI_RETRY = "Respond with exactly one word: entailment, neutral, or contradiction."
FEASIBILITY_RETRY = "Respond with 'feasible' or 'not feasible' and nothing else."


class JudgeParseError(Exception):
    """Response could not be parsed after the single re-prompt."""


class JudgeRangeError(Exception):
    """A parsed score fell outside its documented range."""


@dataclass(frozen=True)
class JudgeScores:
    coherence: int
    relevance: int
    readability: int
    grammar: int
    overall: int
    justification: str

    def __post_init__(self):
        for name in QUALITY_CRITERIA:
            value = getattr(self, name)
            if not 1 <= value <= 5:
                raise JudgeRangeError(f"{name} score {value} outside 1-5")
        if not self.justification.strip():
            raise JudgeParseError("justification must be non-empty")

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in QUALITY_CRITERIA} | {
            "justification": self.justification
        }


@dataclass(frozen=True)
class NoveltyVerdict:
    score: int
    reason: str

    def __post_init__(self):
        if not 0 <= self.score <= 10:
            raise JudgeRangeError(f"novelty score {self.score} outside 0-10")
        if not self.reason.strip():
            raise JudgeParseError("novelty reason must be non-empty")

    def as_dict(self) -> dict:
        return {"score": self.score, "reason": self.reason}


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool


def _extract_json(text: str) -> dict:
    """Parse the first JSON object in a response, tolerating code fences."""
    cleaned = re.sub(r"^```(?:json)?|```$", "", text.strip(), flags=re.MULTILINE).strip()
    start = cleaned.find("{")
    if start < 0:
        raise JudgeParseError(f"no JSON object in response: {text[:80]!r}")
    try:
        obj, _ = json.JSONDecoder().raw_decode(cleaned[start:])
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"malformed JSON in response: {exc}") from exc
    if not isinstance(obj, dict):
        raise JudgeParseError("response JSON is not an object")
    return obj


def _require_int(obj: dict, key: str) -> int:
    if key not in obj:
        raise JudgeParseError(f"response missing field {key!r}")
    value = obj[key]
    # bool is an int subclass; a judge returning true/false is malformed.
    if isinstance(value, bool) or not isinstance(value, int):
        raise JudgeParseError(f"field {key!r} is not an integer: {value!r}")
    return value


def _require_str(obj: dict, key: str) -> str:
    if key not in obj:
        raise JudgeParseError(f"response missing field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise JudgeParseError(f"field {key!r} is not a string: {value!r}")
    return value


def _chat_with_retry(gateway: LlmGateway, prompt: str, retry_instruction: str, parse):
    """One judge call: parse the response, re-prompt once on parse failure.

    Range errors are not retried; a model that answered the question with
    an out-of-range score will not be coaxed into a different number.
    """
    messages = [("user", prompt)]
    response = gateway.chat(messages, role="judge")
    try:
        return parse(response.text)
    except JudgeParseError as exc:
        logger.warning("judge response unparseable, re-prompting once: %s", exc)
        retry_messages = messages + [("assistant", response.text), ("user", retry_instruction)]
        retry_response = gateway.chat(retry_messages, role="judge")
        try:
            return parse(retry_response.text)
        except JudgeParseError as retry_exc:
            raise JudgeParseError(
                f"unparseable judge response after re-prompt: {retry_exc}"
            ) from retry_exc


def judge_quality(generated: str, ground_truth: str, gateway: LlmGateway) -> JudgeScores:
    """Score generated future work against the ground truth on five criteria."""
    if not generated.strip() or not ground_truth.strip():
        raise ValueError("judge_quality requires non-empty texts")
    prompt = QUALITY_PROMPT.format(generated=generated, ground_truth=ground_truth)

    def parse(text: str) -> JudgeScores:
        obj = _extract_json(text)
        return JudgeScores(
            coherence=_require_int(obj, "coherence"),
            relevance=_require_int(obj, "relevance"),
            readability=_require_int(obj, "readability"),
            grammar=_require_int(obj, "grammar"),
            overall=_require_int(obj, "overall"),
            justification=_require_str(obj, "justification"),
        )

    return _chat_with_retry(gateway, prompt, QUALITY_RETRY, parse)


def judge_novelty(generated: str, ground_truth: str, gateway: LlmGateway) -> NoveltyVerdict:
    """Score how novel the generated future work is relative to the ground
    truth; 0 means complete overlap."""
    if not generated.strip() or not ground_truth.strip():
        raise ValueError("judge_novelty requires non-empty texts")
    prompt = NOVELTY_PROMPT.format(generated=generated, ground_truth=ground_truth)

    def parse(text: str) -> NoveltyVerdict:
        obj = _extract_json(text)
        return NoveltyVerdict(score=_require_int(obj, "score"), reason=_require_str(obj, "reason"))

    return _chat_with_retry(gateway, prompt, NOVELTY_RETRY, parse)


def judge_hallucination(
    paper_text: str,
    ground_truth: str,
    generated: str,
    gateway: LlmGateway,
) -> tuple[str, bool]:
    """NLI check of the generated text against paper plus ground truth.

    The premise is the paper text concatenated with the ground truth; the
    hypothesis is the generated text. Returns ``(label, hallucinated)``
    where hallucinated is true for any non-entailment label.
    """
    premise = paper_text.rstrip() + "\n\n" + ground_truth.strip()
    prompt = NLI_PROMPT.format(premise=premise, hypothesis=generated)

    def parse(text: str) -> str:
        label = _normalize_word_response(text)
        if label not in NLI_LABELS:
            raise JudgeParseError(f"not an NLI label: {text[:40]!r}")
        return label

    label = _chat_with_retry(gateway, prompt, NLI_RETRY, parse)
    return label, label != "entailment"


def judge_feasibility(paper_text: str, generated: str, gateway: LlmGateway) -> FeasibilityVerdict:
    """Decide whether the generated future work could actually be carried
    out as a follow-up to the paper."""
    if not paper_text.strip() or not generated.strip():
        raise ValueError("judge_feasibility requires non-empty texts")
    prompt = FEASIBILITY_PROMPT.format(paper_text=paper_text, generated=generated)

    def parse(text: str) -> FeasibilityVerdict:
        answer = _normalize_word_response(text)
        if answer == "feasible":
            return FeasibilityVerdict(feasible=True)
        if answer == "not feasible":
            return FeasibilityVerdict(feasible=False)
        raise JudgeParseError(f"not a feasibility verdict: {text[:40]!r}")

    return _chat_with_retry(gateway, prompt, FEASIBILITY_RETRY, parse)


def _normalize_word_response(text: str) -> str:
    """Case, surrounding whitespace, and terminal punctuation tolerance;
    any other deviation stays visible to the caller."""
    return re.sub(r"\s+", " ", text.strip().rstrip(".!?")).lower()


def aggregate_rates(hallucinated: Sequence[bool], feasible: Sequence[bool]) -> dict:
    """Corpus-level percentages, two decimals.

    ``hallucination_rate`` counts true hallucination flags;
    ``feasibility_rate`` counts feasible verdicts.
    """
    if not hallucinated or not feasible:
        raise ValueError("aggregate_rates requires at least one verdict of each kind")
    return {
        "hallucination_rate": round(100.0 * sum(hallucinated) / len(hallucinated), 2),
        "feasibility_rate": round(100.0 * sum(feasible) / len(feasible), 2),
    }
