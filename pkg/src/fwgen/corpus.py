"""Load, validate, and partition parsed papers and peer reviews.

Input schema: one JSON document per paper file with ``paper_id``, ``title``,
``abstract``, ``sections`` (array of ``{heading, text}`` in document order)
and optional ``venue`` / ``year``. Reviews arrive as newline-delimited JSON
records ``{paper_id, review_text}``. Malformed inputs are reported and
skipped, never repaired.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .textutil import sentence_set, split_sentences, normalize_sentence

if TYPE_CHECKING:
    from .extraction import FutureWorkRecord

logger = logging.getLogger(__name__)

VENUES = ("ACL", "NeurIPS", "other")


@dataclass(frozen=True)
class Section:
    heading: str
    text: str
    index: int


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    title: str
    abstract: str
    sections: tuple[Section, ...]
    venue: str = "other"
    year: int | None = None


@dataclass(frozen=True)
class ReviewSet:
    paper_id: str
    reviews: tuple[str, ...]


@dataclass(frozen=True)
class CorpusSplit:
    eval_ids: frozenset[str]
    index_ids: frozenset[str]
    seed: int


@dataclass(frozen=True)
class LoadProblem:
    """One malformed input, reported instead of silently dropped."""

    file: str
    field: str
    message: str


def load_papers(path: str | Path) -> tuple[list[PaperRecord], list[LoadProblem]]:
    """Load every ``*.json`` paper file under ``path``.

    Well-formed files yield one record each; malformed files are collected as
    problems naming the offending file and field. Files are read in sorted
    order, so loading is deterministic and idempotent.
    """
    base = Path(path)
    if not base.exists():
        raise FileNotFoundError(f"paper directory not found: {base}")
    files = sorted(base.glob("*.json"))
    if not files:
        logger.warning("no paper files found in %s", base)
    records: list[PaperRecord] = []
    problems: list[LoadProblem] = []
    seen: set[str] = set()
    for file in files:
        try:
            raw = json.loads(file.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            problems.append(LoadProblem(str(file), "", f"unreadable: {exc}"))
            continue
        record, problem = _parse_paper(raw, str(file))
        if problem is not None:
            problems.append(problem)
            continue
        assert record is not None
        if record.paper_id in seen:
            problems.append(
                LoadProblem(str(file), "paper_id", f"duplicate paper_id {record.paper_id!r}")
            )
            continue
        seen.add(record.paper_id)
        records.append(record)
    for problem in problems:
        logger.warning("skipping %s (%s): %s", problem.file, problem.field or "-", problem.message)
    return records, problems


def _parse_paper(raw: object, file: str) -> tuple[PaperRecord | None, LoadProblem | None]:
    if not isinstance(raw, dict):
        return None, LoadProblem(file, "", "document is not a JSON object")
    for field in ("paper_id", "title", "abstract"):
        if not isinstance(raw.get(field), str):
            return None, LoadProblem(file, field, "missing or non-string field")
    if "sections" not in raw:
        return None, LoadProblem(file, "sections", "missing field")
    if not isinstance(raw["sections"], list) or not raw["sections"]:
        return None, LoadProblem(file, "sections", "must be a non-empty array")
    sections: list[Section] = []
    for i, sec in enumerate(raw["sections"]):
        if not isinstance(sec, dict) or not isinstance(sec.get("heading"), str) or not isinstance(
            sec.get("text"), str
        ):
            return None, LoadProblem(file, f"sections[{i}]", "needs string heading and text")
        if not sec["heading"] and not sec["text"]:
            return None, LoadProblem(file, f"sections[{i}]", "empty text requires a heading")
        sections.append(Section(heading=sec["heading"], text=sec["text"], index=i))
    venue = raw.get("venue", "other")
    if venue not in VENUES:
        venue = "other"
    year = raw.get("year")
    if year is not None and not isinstance(year, int):
        return None, LoadProblem(file, "year", "must be an integer when present")
    return (
        PaperRecord(
            paper_id=raw["paper_id"],
            title=raw["title"],
            abstract=raw["abstract"],
            sections=tuple(sections),
            venue=venue,
            year=year,
        ),
        None,
    )


def load_reviews(
    path: str | Path, known_ids: Iterable[str] | None = None
) -> tuple[list[ReviewSet], list[LoadProblem]]:
    """Load newline-delimited review records, grouped by paper in input order.

    Records referencing a paper_id outside ``known_ids`` (when given) are
    orphans: skipped with a warning. Empty review text is retained.
    """
    file = Path(path)
    if not file.exists():
        raise FileNotFoundError(f"review file not found: {file}")
    known = set(known_ids) if known_ids is not None else None
    grouped: dict[str, list[str]] = {}
    problems: list[LoadProblem] = []
    for lineno, line in enumerate(file.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{file}:{lineno}"
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(LoadProblem(where, "", f"unreadable record: {exc}"))
            continue
        if not isinstance(raw, dict) or not isinstance(raw.get("paper_id"), str):
            problems.append(LoadProblem(where, "paper_id", "missing or non-string field"))
            continue
        if not isinstance(raw.get("review_text"), str):
            problems.append(LoadProblem(where, "review_text", "missing or non-string field"))
            continue
        pid = raw["paper_id"]
        if known is not None and pid not in known:
            problems.append(LoadProblem(where, "paper_id", f"unknown paper {pid!r}, record skipped"))
            continue
        grouped.setdefault(pid, []).append(raw["review_text"])
    for problem in problems:
        logger.warning("review input %s (%s): %s", problem.file, problem.field or "-", problem.message)
    review_sets = [ReviewSet(paper_id=pid, reviews=tuple(texts)) for pid, texts in grouped.items()]
    return review_sets, problems


def split_corpus(papers: Iterable[PaperRecord], index_size: int, seed: int) -> CorpusSplit:
    """Partition papers into a retrieval-index set and an evaluation set.

    The index set is drawn without replacement from the sorted paper ids, so
    the split is a pure function of (ids, index_size, seed).
    """
    ids = sorted({p.paper_id for p in papers})
    if index_size < 0:
        raise ValueError("index_size must be non-negative")
    if index_size > len(ids):
        raise ValueError(f"index_size {index_size} exceeds corpus size {len(ids)}")
    rng = random.Random(seed)
    index_ids = frozenset(rng.sample(ids, index_size))
    eval_ids = frozenset(ids) - index_ids
    if index_size == len(ids) and ids:
        logger.warning("index split consumed the whole corpus; evaluation set is empty")
    return CorpusSplit(eval_ids=eval_ids, index_ids=index_ids, seed=seed)


def strip_future_work(paper: PaperRecord, fw: "FutureWorkRecord") -> PaperRecord:
    """Remove the tool-extracted future-work sentences from a paper.

    Sentences are matched after normalization (lowercase, collapsed
    whitespace, stripped terminal punctuation); the section structure is
    otherwise kept intact.
    """
    if fw.paper_id != paper.paper_id:
        raise ValueError(f"future-work record {fw.paper_id!r} does not match paper {paper.paper_id!r}")
    removal = sentence_set(fw.tool_extracted)
    if not removal:
        return paper
    sections = tuple(
        replace(section, text=_drop_sentences(section.text, removal)) for section in paper.sections
    )
    return replace(paper, abstract=_drop_sentences(paper.abstract, removal), sections=sections)


def _drop_sentences(text: str, removal: set[str]) -> str:
    kept = [s for s in split_sentences(text) if normalize_sentence(s) not in removal]
    return " ".join(kept)


def paper_text(paper: PaperRecord, include_title: bool = True) -> str:
    """Flatten a paper into one text block (title, abstract, then sections)."""
    parts: list[str] = []
    if include_title and paper.title:
        parts.append(paper.title)
    if paper.abstract:
        parts.append(paper.abstract)
    for section in paper.sections:
        if section.heading and section.text:
            parts.append(f"{section.heading}\n{section.text}")
        elif section.text:
            parts.append(section.text)
        elif section.heading:
            parts.append(section.heading)
    return "\n\n".join(parts)
