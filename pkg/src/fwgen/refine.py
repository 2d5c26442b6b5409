"""Thresholded self-feedback refinement around generation and judging.

An iteration generates future work, scores it with the quality and novelty
judges, and regenerates with the judges' justifications as feedback when
any quality score or the novelty score falls at or below its threshold.
The loop is bounded: at most 1 + max_refinements iterations per paper.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .gateway import LlmGateway
from .generation import (
    GenerationTrace,
    PromptBundle,
    assemble_refinement_prompt,
    generate_future_work,
)
from .judge import JudgeScores, NoveltyVerdict, QUALITY_CRITERIA, judge_novelty, judge_quality

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefinementPolicy:
    """Trigger thresholds; a score at the threshold triggers refinement."""

    quality_threshold: int = 3
    novelty_threshold: int = 7
    max_refinements: int = 1

    def __post_init__(self):
        if not 1 <= self.quality_threshold <= 5:
            raise ValueError("quality_threshold must be in 1-5")
        if not 0 <= self.novelty_threshold <= 10:
            raise ValueError("novelty_threshold must be in 0-10")
        if not 0 <= self.max_refinements <= 2:
            raise ValueError("max_refinements must be in 0-2")


@dataclass(frozen=True)
class IterationResult:
    """One loop iteration: the generation trace plus its judge verdicts.

    ``triggered`` records whether this iteration's scores asked for another
    round (the loop may still stop on the iteration cap); ``feedback``
    holds the justification text passed forward when it did.
    """

    trace: GenerationTrace
    scores: JudgeScores
    novelty: NoveltyVerdict
    triggered: bool
    feedback: str = ""


def needs_refinement(
    scores: JudgeScores,
    novelty: NoveltyVerdict,
    policy: RefinementPolicy,
) -> tuple[bool, str]:
    """Decide whether scores trigger another round, and with what feedback.

    Triggers when any of the five quality scores is at or below the
    quality threshold, or novelty is at or below the novelty threshold.
    The feedback concatenates the justifications of whichever judges
    triggered.
    """
    low_criteria = [
        name for name in QUALITY_CRITERIA if getattr(scores, name) <= policy.quality_threshold
    ]
    lines = []
    if low_criteria:
        lines.append(f"quality ({', '.join(low_criteria)}): {scores.justification}")
    if novelty.score <= policy.novelty_threshold:
        lines.append(f"novelty: {novelty.reason}")
    return bool(lines), "\n".join(lines)


def run_refinement_loop(
    bundle: PromptBundle,
    reference: str,
    policy: RefinementPolicy,
    gateway: LlmGateway,
) -> list[IterationResult]:
    """Generate, judge, and refine one paper's future work.

    Returns one result per iteration, between 1 and 1 + max_refinements.
    Refinement prompts rebuild from the original bundle with the latest
    feedback, so feedback replaces rather than accumulates. An error after
    at least one completed iteration returns the completed results and
    logs the failure; an error on the first iteration propagates.
    """
    results: list[IterationResult] = []
    current = bundle
    feedback_in: str | None = None
    for iteration in range(1, policy.max_refinements + 2):
        try:
            trace = generate_future_work(current, gateway, iteration=iteration, feedback_used=feedback_in)
            scores = judge_quality(trace.output_text, reference, gateway)
            novelty = judge_novelty(trace.output_text, reference, gateway)
        except Exception:
            if results:
                logger.exception(
                    "paper %s: iteration %d failed, keeping %d completed iteration(s)",
                    bundle.paper_id,
                    iteration,
                    len(results),
                )
                return results
            raise
        triggered, feedback = needs_refinement(scores, novelty, policy)
        results.append(
            IterationResult(
                trace=trace,
                scores=scores,
                novelty=novelty,
                triggered=triggered,
                feedback=feedback,
            )
        )
        if not triggered or iteration == policy.max_refinements + 1:
            break
        current = assemble_refinement_prompt(bundle, feedback)
        feedback_in = feedback
    return results
