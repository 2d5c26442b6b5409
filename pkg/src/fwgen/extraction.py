"""Ground-truth future-work extraction from papers and peer reviews.

Two parallel tracks feed a merged reference text:

* paper track: a rule-based pass pulls the future-work text out of the
  paper body, then an LLM pass tightens it without adding new sentences;
* review track: an LLM pulls forward-looking suggestions out of the peer
  reviews, then a validation pass keeps only long-term goals.

A merge step combines both tracks. Every LLM rewrite on the paper track
and the merge output must stay an extractive subset of its sources; a
violation flags the record instead of silently passing invented text on.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import PaperRecord, ReviewSet
from .gateway import LlmGateway
from .textutil import normalize_sentence, sentence_set, split_sentences

logger = logging.getLogger(__name__)

# Headings that carry future work explicitly. Matched as substrings of the
# lowercased heading, so "Conclusion and Future Work" or "Limitations and
# Future Directions" qualify.
FUTURE_HEADING_PATTERNS = ("future work", "future direction")

# Sections never scanned for implicit future-work sentences.
DENY_HEADINGS = ("abstract", "introduction", "related work", "method")

# An implicit span ends just before the first later sentence containing one
# of these keywords (funding boilerplate, a new discussion, acknowledgements).
STOP_KEYWORDS = ("grant", "discussion", "acknowledgements")

EXTRACTION_MODES = ("explicit_section", "implicit_keyword", "none")

REVIEW_SEPARATOR = "\n\n---\n\n"

REFINE_PROMPT = """You clean up future-work text extracted from a research paper.
Keep only sentences that describe future work, plans, or open directions.
Do not rewrite, paraphrase, or add sentences: copy the kept sentences verbatim.
Return the kept sentences as plain text.

Extracted text:
{text}"""

REVIEW_GOALS_PROMPT = """You read peer reviews of a research paper and list the reviewers'
suggestions for future work. Copy each suggestion as it appears in the
reviews, one per line, without adding ideas of your own.

Reviews:
{text}"""

VALIDATE_GOALS_PROMPT = """You filter reviewer suggestions, keeping only long-term research goals.
Drop requests for typo fixes, presentation tweaks, or minor implementation
changes. Return the kept suggestions verbatim, one per line.

Suggestions:
{text}"""

MERGE_PROMPT = """You merge two descriptions of a paper's future work into one.
Combine the sources, drop duplicated sentences, and keep every distinct
point. Use only sentences that appear in the sources.

Source A (from the paper):
{text_a}

Source B (from the reviews):
{text_b}"""


class SubsetViolationError(Exception):
    """An LLM rewrite contained sentences absent from its source text."""

    def __init__(self, violations: Sequence[str]):
        super().__init__(f"{len(violations)} sentence(s) not found in source")
        self.violations = tuple(violations)


@dataclass(frozen=True)
class SubsetVerdict:
    ok: bool
    violations: tuple[str, ...] = ()


def verify_extractive_subset(source: str, extracted: str) -> SubsetVerdict:
    """Check every sentence of ``extracted`` appears in ``source``.

    Comparison is on normalized sentences (lowercased, whitespace collapsed,
    terminal punctuation stripped), so casing or trailing-period differences
    do not count as violations, but any reworded sentence does.
    """
    allowed = sentence_set(source)
    violations = []
    for sentence in split_sentences(extracted):
        norm = normalize_sentence(sentence)
        if norm and norm not in allowed:
            violations.append(sentence.strip())
    return SubsetVerdict(ok=not violations, violations=tuple(violations))


def extract_future_work_rule_based(paper: PaperRecord) -> tuple[str, str]:
    """Pull future-work text from a paper without any model calls.

    Explicit pass: every section whose heading mentions a future-work
    pattern contributes its full text. Implicit fallback: in each section
    not on the deny list, the span from the first sentence containing
    "future" to the section end, truncated before the first stop-keyword
    sentence. Returns ``(text, mode)`` with mode one of
    ``EXTRACTION_MODES``; an empty result gives mode "none".
    """
    explicit_parts = []
    for section in paper.sections:
        heading = section.heading.lower()
        if any(pattern in heading for pattern in FUTURE_HEADING_PATTERNS):
            if section.text.strip():
                explicit_parts.append(section.text.strip())
    if explicit_parts:
        return "\n".join(explicit_parts), "explicit_section"

    implicit_parts = []
    for section in paper.sections:
        heading = section.heading.lower()
        if any(deny in heading for deny in DENY_HEADINGS):
            continue
        span = _implicit_span(section.text)
        if span:
            implicit_parts.append(span)
    if implicit_parts:
        return "\n".join(implicit_parts), "implicit_keyword"
    return "", "none"


def _implicit_span(text: str) -> str:
    sentences = split_sentences(text)
    start = None
    for i, sentence in enumerate(sentences):
        if "future" in sentence.lower():
            start = i
            break
    if start is None:
        return ""
    kept = []
    for sentence in sentences[start:]:
        lowered = sentence.lower()
        if kept and any(keyword in lowered for keyword in STOP_KEYWORDS):
            break
        kept.append(sentence.strip())
    return " ".join(kept)


def llm_refine_extraction(tool_text: str, gateway: LlmGateway) -> str:
    """LLM pass over the rule-based extraction; output must be a subset.

    Empty input returns empty without a model call. A non-subset response
    raises :class:`SubsetViolationError` carrying the offending sentences.
    """
    if not tool_text.strip():
        return ""
    prompt = REFINE_PROMPT.format(text=tool_text)
    response = gateway.chat([("user", prompt)], role="extractor")
    refined = response.text.strip()
    verdict = verify_extractive_subset(tool_text, refined)
    if not verdict.ok:
        raise SubsetViolationError(verdict.violations)
    return refined


def extract_review_goals(reviews: ReviewSet, gateway: LlmGateway) -> tuple[str, str]:
    """Pull future-work suggestions out of peer reviews.

    Returns ``(raw_reviews, candidate_goals)``: the concatenated review
    text that served as the source, and the model's suggestion list. The
    suggestion list is model-phrased, so no subset check applies here; the
    raw text is retained on the record for audit.
    """
    raw = REVIEW_SEPARATOR.join(reviews.reviews)
    if not raw.strip():
        return raw, ""
    prompt = REVIEW_GOALS_PROMPT.format(text=raw)
    response = gateway.chat([("user", prompt)], role="extractor")
    return raw, response.text.strip()


def validate_long_term_goals(candidates: str, gateway: LlmGateway) -> str:
    """Keep only candidate suggestions that are long-term research goals."""
    if not candidates.strip():
        return ""
    prompt = VALIDATE_GOALS_PROMPT.format(text=candidates)
    response = gateway.chat([("user", prompt)], role="extractor")
    return response.text.strip()


def merge_ground_truth(paper_fw: str, review_goals: str, gateway: LlmGateway) -> str:
    """Merge the paper-derived and review-derived future work into one text.

    When either side is empty the other passes through without a model
    call. The merge must be an extractive subset of the two sources
    combined; a violation raises :class:`SubsetViolationError`.
    """
    if not paper_fw.strip() and not review_goals.strip():
        return ""
    if not paper_fw.strip():
        return review_goals.strip()
    if not review_goals.strip():
        return paper_fw.strip()
    prompt = MERGE_PROMPT.format(text_a=paper_fw, text_b=review_goals)
    response = gateway.chat([("user", prompt)], role="merger")
    merged = response.text.strip()
    verdict = verify_extractive_subset(paper_fw + "\n" + review_goals, merged)
    if not verdict.ok:
        raise SubsetViolationError(verdict.violations)
    return merged


@dataclass(frozen=True)
class FutureWorkRecord:
    """Full extraction lineage for one paper.

    ``flags`` records subset violations and missing ground truth; a record
    with any violation flag keeps the offending text for audit but is not
    valid for downstream use.
    """

    paper_id: str
    tool_extracted: str = ""
    llm_extracted: str = ""
    review_raw: str = ""
    review_goals: str = ""
    merged_ground_truth: str = ""
    extraction_mode: str = "none"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.extraction_mode not in EXTRACTION_MODES:
            raise ValueError(f"unknown extraction mode {self.extraction_mode!r}")

    @property
    def valid(self) -> bool:
        return not any(flag.endswith("subset_violation") for flag in self.flags)

    def reference_for(self, ground_truth: str) -> str:
        """The reference text for a ground-truth selector (fw, or, fw+or)."""
        if ground_truth == "fw":
            return self.llm_extracted
        if ground_truth == "or":
            return self.review_goals
        if ground_truth == "fw+or":
            return self.merged_ground_truth
        raise ValueError(f"unknown ground-truth selector {ground_truth!r}")


def build_lineage(
    papers: Iterable[PaperRecord],
    reviews_by_id: Mapping[str, ReviewSet],
    gateway: LlmGateway,
) -> list[FutureWorkRecord]:
    """Run the full extraction lineage over a set of papers.

    Subset violations flag the record and keep the raw model output for
    audit; gateway errors propagate, since a failed call (as opposed to a
    bad response) should stop the run.
    """
    records = []
    for paper in papers:
        records.append(extract_for_paper(paper, reviews_by_id.get(paper.paper_id), gateway))
    return records


def extract_for_paper(
    paper: PaperRecord,
    reviews: ReviewSet | None,
    gateway: LlmGateway,
) -> FutureWorkRecord:
    tool_text, mode = extract_future_work_rule_based(paper)
    flags: list[str] = []

    llm_text = ""
    try:
        llm_text = llm_refine_extraction(tool_text, gateway)
    except SubsetViolationError as exc:
        flags.append("fg_subset_violation")
        llm_text = _audit_text(exc)
        logger.warning("paper %s: refined extraction added sentences: %s", paper.paper_id, exc)

    review_raw = ""
    review_goals = ""
    if reviews is not None and reviews.reviews:
        review_raw, candidates = extract_review_goals(reviews, gateway)
        review_goals = validate_long_term_goals(candidates, gateway)

    paper_side = "" if "fg_subset_violation" in flags else llm_text
    merged = ""
    try:
        merged = merge_ground_truth(paper_side, review_goals, gateway)
    except SubsetViolationError as exc:
        flags.append("merged_subset_violation")
        merged = _audit_text(exc)
        logger.warning("paper %s: merged ground truth added sentences: %s", paper.paper_id, exc)

    if not merged.strip() and not flags:
        flags.append("no_ground_truth")

    return FutureWorkRecord(
        paper_id=paper.paper_id,
        tool_extracted=tool_text,
        llm_extracted=llm_text,
        review_raw=review_raw,
        review_goals=review_goals,
        merged_ground_truth=merged,
        extraction_mode=mode,
        flags=tuple(flags),
    )


def _audit_text(exc: SubsetViolationError) -> str:
    return "[subset violation] " + " | ".join(exc.violations)


def write_lineage(records: Sequence[FutureWorkRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            row = {
                "paper_id": record.paper_id,
                "tool_extracted": record.tool_extracted,
                "llm_extracted": record.llm_extracted,
                "review_raw": record.review_raw,
                "review_goals": record.review_goals,
                "merged_ground_truth": record.merged_ground_truth,
                "extraction_mode": record.extraction_mode,
                "flags": list(record.flags),
            }
            fh.write(json.dumps(row, ensure_ascii=True, sort_keys=True) + "\n")


def read_lineage(path: str | Path) -> list[FutureWorkRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        records.append(
            FutureWorkRecord(
                paper_id=raw["paper_id"],
                tool_extracted=raw["tool_extracted"],
                llm_extracted=raw["llm_extracted"],
                review_raw=raw["review_raw"],
                review_goals=raw["review_goals"],
                merged_ground_truth=raw["merged_ground_truth"],
                extraction_mode=raw["extraction_mode"],
                flags=tuple(raw["flags"]),
            )
        )
    return records
