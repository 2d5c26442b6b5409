"""Section ranking, budget-constrained prompt assembly, and generation.

The prompt bundles an instruction, the paper's abstract, a set of body
sections (the top-ranked heading classes or all of them), and retrieved
related-work chunks, under a hard token budget. Over-budget bundles shed
retrieved chunks first (last rank first), then sections (lowest priority
first); the instruction, abstract, and any feedback block never drop.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import PaperRecord
from .gateway import LlmGateway
from .metrics import cosine_of_vectors
from .retrieval import RetrievedChunk
from .textutil import count_tokens

logger = logging.getLogger(__name__)

PROMPT_MODES = ("top3_sections", "all_sections")

DEFAULT_TOKEN_BUDGET = 3900

# Generations should stay within this many words; longer output only warns.
WORD_LIMIT = 100

SECTION_CLASSES = (
    "Abstract",
    "Introduction",
    "Related Work",
    "Data",
    "Methodology",
    "Experiment",
    "Conclusion",
    "Limitations",
)

# Tie-break order for equal mean cosine, most future-work-bearing first.
SECTION_PRIORITY = (
    "Abstract",
    "Introduction",
    "Conclusion",
    "Experiment",
    "Related Work",
    "Limitations",
    "Methodology",
    "Data",
)

# Ordered substring rules; first match wins, so compound headings like
# "Conclusion and Limitations" land on the earlier class.
_HEADING_RULES = (
    ("abstract", "Abstract"),
    ("introduction", "Introduction"),
    ("related work", "Related Work"),
    ("background", "Related Work"),
    ("limitation", "Limitations"),
    ("conclusion", "Conclusion"),
    ("experiment", "Experiment"),
    ("result", "Experiment"),
    ("evaluation", "Experiment"),
    ("method", "Methodology"),
    ("approach", "Methodology"),
    ("data", "Data"),
)

INITIAL_INSTRUCTION = """You are a research assistant helping scientists plan follow-up studies.
Read the paper context below and generate comprehensive future work
suggestions for the paper within 100 words. Ground every suggestion in
the provided context."""

REFINEMENT_INSTRUCTION = """You are a research assistant helping scientists plan follow-up studies.
Read the paper context below and generate comprehensive future work
suggestions for the paper within 100 words. Ground every suggestion in
the provided context. Your previous suggestions received the feedback
quoted at the end; read the feedback and try to improve."""

FEEDBACK_LABEL = "feedback"


class PromptBudgetError(Exception):
    """Mandatory prompt parts alone exceed the token budget."""


class GenerationError(Exception):
    """The model returned an unusable generation."""


@dataclass(frozen=True)
class PromptBundle:
    """One assembled prompt; construction enforces the token budget."""

    paper_id: str
    mode: str
    instruction: str
    context_blocks: tuple[tuple[str, str], ...]
    retrieved: tuple[RetrievedChunk, ...] = ()
    token_budget: int = DEFAULT_TOKEN_BUDGET
    feedback: str | None = None

    def __post_init__(self):
        if self.mode not in PROMPT_MODES:
            raise ValueError(f"unknown prompt mode {self.mode!r}")
        if self.token_budget < 1:
            raise ValueError("token budget must be positive")
        total = self.token_count()
        if total > self.token_budget:
            raise PromptBudgetError(
                f"bundle for {self.paper_id!r} uses {total} tokens over budget {self.token_budget}"
            )

    def parts(self) -> list[tuple[str, str]]:
        """Rendered (label, text) parts in prompt order."""
        out = [("instruction", self.instruction)]
        out.extend(self.context_blocks)
        for item in self.retrieved:
            out.append((f"related work excerpt | {item.chunk.paper_id}", item.chunk.text))
        if self.feedback is not None:
            out.append((FEEDBACK_LABEL, self.feedback))
        return out

    def render(self) -> str:
        rendered = []
        for label, text in self.parts():
            if label == "instruction":
                rendered.append(text)
            else:
                rendered.append(f"[{label}]\n{text}")
        return "\n\n".join(rendered)

    def token_count(self) -> int:
        return count_tokens(self.render())

    def block_token_counts(self) -> dict[str, int]:
        return {label: count_tokens(text) for label, text in self.parts()}


@dataclass(frozen=True)
class GenerationTrace:
    """One generation attempt; iteration 1 never carries feedback and
    later iterations always do."""

    paper_id: str
    iteration: int
    prompt: PromptBundle
    output_text: str
    feedback_used: str | None = None

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError("iteration is 1-based")
        if self.iteration == 1 and self.feedback_used is not None:
            raise ValueError("iteration 1 cannot carry feedback")
        if self.iteration > 1 and not (self.feedback_used or "").strip():
            raise ValueError("refinement iterations must carry feedback")


def canonical_heading_class(heading: str) -> str | None:
    """Map a raw heading onto one of the canonical section classes.

    Returns None for headings outside the canonical set (appendices,
    acknowledgements, future-work sections left headless by stripping).
    """
    lowered = heading.lower()
    for needle, cls in _HEADING_RULES:
        if needle in lowered:
            return cls
    return None


def rank_sections(
    corpus: Sequence[PaperRecord],
    fw_texts: Mapping[str, str],
    gateway: LlmGateway,
) -> list[tuple[str, float]]:
    """Rank heading classes by mean cosine to the future-work text.

    For every paper with a non-empty future-work reference, each canonical
    section (the abstract counts as class Abstract) is embedded and scored
    against the paper's future-work embedding. Classes sort by descending
    mean cosine; exact ties fall back to a fixed priority order.
    """
    pairs = []  # (class, section_text, fw_text)
    for paper in corpus:
        fw = fw_texts.get(paper.paper_id, "")
        if not fw.strip():
            continue
        if paper.abstract.strip():
            pairs.append(("Abstract", paper.abstract, fw))
        for section in paper.sections:
            cls = canonical_heading_class(section.heading)
            if cls is None or cls == "Abstract" or not section.text.strip():
                continue
            pairs.append((cls, section.text, fw))
    if not pairs:
        raise ValueError("no embeddable section/future-work pairs in corpus")

    texts = []
    for _, section_text, fw in pairs:
        texts.append(section_text)
        texts.append(fw)
    vectors = gateway.embed(texts)

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for i, (cls, _, _) in enumerate(pairs):
        cos = cosine_of_vectors(vectors[2 * i], vectors[2 * i + 1])
        sums[cls] = sums.get(cls, 0.0) + cos
        counts[cls] = counts.get(cls, 0) + 1
    means = {cls: sums[cls] / counts[cls] for cls in sums}
    ranked = sorted(means.items(), key=lambda kv: (-kv[1], SECTION_PRIORITY.index(kv[0])))
    return ranked


def assemble_prompt(
    paper: PaperRecord,
    mode: str,
    retrieved: Sequence[RetrievedChunk],
    budget: int = DEFAULT_TOKEN_BUDGET,
    top_classes: Sequence[str] = (),
    instruction: str = INITIAL_INSTRUCTION,
) -> PromptBundle:
    """Build the initial generation prompt for one paper.

    ``paper`` must already be stripped of its author future work. In
    top3_sections mode only sections whose heading class appears in
    ``top_classes`` are included, ordered by that ranking; all_sections
    mode keeps document order. Retrieved chunks sit after the sections in
    rank order.
    """
    if mode not in PROMPT_MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    if mode == "top3_sections" and not top_classes:
        raise ValueError("top3_sections mode needs the ranked section classes")

    sections = []  # (label, text) in presentation order, drop from the tail
    if mode == "top3_sections":
        for cls in top_classes:
            if cls == "Abstract":
                continue
            for section in paper.sections:
                if canonical_heading_class(section.heading) == cls and section.text.strip():
                    sections.append((f"section | {section.heading}", section.text))
    else:
        for section in paper.sections:
            if section.text.strip():
                sections.append((f"section | {section.heading}", section.text))

    return _fit_bundle(
        paper_id=paper.paper_id,
        mode=mode,
        instruction=instruction,
        abstract=paper.abstract,
        sections=sections,
        retrieved=tuple(retrieved),
        budget=budget,
        feedback=None,
    )


def assemble_refinement_prompt(bundle: PromptBundle, feedback: str) -> PromptBundle:
    """Rebuild a bundle with a feedback block for the next iteration.

    The refinement keeps the original context and budget, swaps in the
    refinement instruction, and appends the feedback as the final block.
    Feedback never truncates; sections and chunks yield first. Repeated
    refinements replace the feedback, they do not accumulate it.
    """
    if not feedback.strip():
        raise ValueError("refinement needs non-empty feedback")
    abstract_text = ""
    sections = []
    for label, text in bundle.context_blocks:
        if label == "abstract":
            abstract_text = text
        else:
            sections.append((label, text))
    return _fit_bundle(
        paper_id=bundle.paper_id,
        mode=bundle.mode,
        instruction=REFINEMENT_INSTRUCTION,
        abstract=abstract_text,
        sections=sections,
        retrieved=bundle.retrieved,
        budget=bundle.token_budget,
        feedback=feedback,
    )


def _fit_bundle(
    paper_id: str,
    mode: str,
    instruction: str,
    abstract: str,
    sections: list[tuple[str, str]],
    retrieved: tuple[RetrievedChunk, ...],
    budget: int,
    feedback: str | None,
) -> PromptBundle:
    """Drop chunks (last rank first), then sections (last priority first),
    until the rendered bundle fits the budget."""
    blocks = [("abstract", abstract)] if abstract.strip() else []

    def build(n_sections: int, n_chunks: int) -> PromptBundle:
        return PromptBundle(
            paper_id=paper_id,
            mode=mode,
            instruction=instruction,
            context_blocks=tuple(blocks + sections[:n_sections]),
            retrieved=retrieved[:n_chunks],
            token_budget=budget,
            feedback=feedback,
        )

    n_sections, n_chunks = len(sections), len(retrieved)
    while True:
        try:
            return build(n_sections, n_chunks)
        except PromptBudgetError:
            if n_chunks > 0:
                n_chunks -= 1
            elif n_sections > 0:
                n_sections -= 1
            else:
                raise PromptBudgetError(
                    f"mandatory prompt parts for {paper_id!r} exceed budget {budget}"
                )


def generate_future_work(
    bundle: PromptBundle,
    gateway: LlmGateway,
    iteration: int = 1,
    feedback_used: str | None = None,
) -> GenerationTrace:
    """Run one generation and return its trace.

    Empty model output is an error; output longer than the word limit is
    accepted with a warning, since the limit is an instruction to the
    model, not a validity rule.
    """
    response = gateway.chat([("user", bundle.render())], role="generator")
    output = response.text.strip()
    if not output:
        raise GenerationError(f"empty generation for paper {bundle.paper_id!r}")
    words = len(output.split())
    if words > WORD_LIMIT:
        logger.warning(
            "paper %s iteration %d: generation has %d words (limit %d)",
            bundle.paper_id,
            iteration,
            words,
            WORD_LIMIT,
        )
    return GenerationTrace(
        paper_id=bundle.paper_id,
        iteration=iteration,
        prompt=bundle,
        output_text=output,
        feedback_used=feedback_used,
    )
