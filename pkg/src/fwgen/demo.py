"""Synthetic demo corpus generation.

Produces small but structurally realistic paper and review collections:
papers with canonical section headings, future-work text in several
placement styles (dedicated sections, compound headings, implicit
conclusion sentences, or absent), and reviews mixing long-term suggestions
with short-term nits. Deterministic for a given (count, seed).
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .corpus import PaperRecord, ReviewSet, Section

_TOPICS = (
    ("neural machine translation", "parallel corpora", "transformer encoders", "low-resource languages"),
    ("question answering", "web snippets", "dense retrievers", "multi-hop reasoning"),
    ("text summarization", "newswire articles", "pointer networks", "long documents"),
    ("sentiment analysis", "product reviews", "graph convolutions", "code-switched text"),
    ("named entity recognition", "clinical notes", "span classifiers", "cross-lingual transfer"),
    ("dialogue systems", "task-oriented logs", "latent action models", "open-domain chat"),
    ("information extraction", "scientific abstracts", "distant supervision", "temporal relations"),
    ("speech recognition", "broadcast audio", "conformer blocks", "noisy environments"),
    ("fact verification", "claim databases", "evidence rankers", "multilingual claims"),
    ("text classification", "support tickets", "prototype networks", "few-shot settings"),
)

# Future-work placement styles, cycled across papers.
_FW_STYLES = ("section", "compound", "implicit", "limitations", "none")


def synthetic_corpus(count: int, seed: int) -> tuple[list[PaperRecord], dict[str, ReviewSet]]:
    """Build ``count`` synthetic papers with reviews."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = random.Random(seed)
    papers = []
    reviews = {}
    for i in range(count):
        task, data, method, application = _TOPICS[i % len(_TOPICS)]
        style = _FW_STYLES[i % len(_FW_STYLES)]
        paper_id = f"paper{i:03d}"
        papers.append(_make_paper(paper_id, task, data, method, application, style, rng))
        reviews[paper_id] = _make_reviews(paper_id, task, method, application, rng)
    return papers, reviews


def _make_paper(
    paper_id: str,
    task: str,
    data: str,
    method: str,
    application: str,
    style: str,
    rng: random.Random,
) -> PaperRecord:
    gain = rng.randint(2, 9)
    year = rng.randint(2019, 2024)
    abstract = (
        f"We study {task} using {method} trained on {data}. "
        f"Our approach improves over strong baselines by {gain} points on standard benchmarks. "
        f"Analysis shows the gains concentrate in {application}."
    )
    sections = [
        Section(
            heading="Introduction",
            text=(
                f"{task.capitalize()} remains challenging when systems face {application}. "
                f"We revisit the problem with {method} and a careful study of {data}. "
                f"Our contributions include a new training recipe and a detailed error analysis."
            ),
            index=0,
        ),
        Section(
            heading="Related Work",
            text=(
                f"Prior studies of {task} rely on feature engineering over {data}. "
                f"Recent systems adopt {method}, but their behavior on {application} is unexplored. "
                f"Our study complements benchmark surveys of {task}."
            ),
            index=1,
        ),
        Section(
            heading="Methodology",
            text=(
                f"We build {method} with a shared encoder and task-specific heads. "
                f"Training uses curriculum sampling over {data}. "
                f"Hyperparameters were tuned on a held-out split."
            ),
            index=2,
        ),
        Section(
            heading="Experiments",
            text=(
                f"We evaluate on three public benchmarks for {task}. "
                f"Our model outperforms the strongest baseline by {gain} points. "
                f"Ablations confirm that curriculum sampling drives most of the gain."
            ),
            index=3,
        ),
    ]
    conclusion = (
        f"We presented a study of {task} built on {method}. "
        f"The results establish a strong baseline for {application}."
    )
    fw_sentences = (
        f"We plan to extend {method} to {application}. "
        f"Future work will explore larger corpora beyond {data}. "
        f"Another direction is a human study of {task} errors."
    )
    next_index = len(sections)
    if style == "section":
        sections.append(Section(heading="Conclusion", text=conclusion, index=next_index))
        sections.append(Section(heading="Future Work", text=fw_sentences, index=next_index + 1))
    elif style == "compound":
        sections.append(
            Section(
                heading="Conclusion and Future Work",
                text=conclusion + " " + fw_sentences,
                index=next_index,
            )
        )
    elif style == "implicit":
        tail = (
            f" In future work we will adapt {method} to {application}."
            f" This work was supported by a grant from the national research agency."
        )
        sections.append(Section(heading="Conclusion", text=conclusion + tail, index=next_index))
    elif style == "limitations":
        sections.append(Section(heading="Conclusion", text=conclusion, index=next_index))
        sections.append(
            Section(
                heading="Limitations and Future Directions",
                text=(
                    f"Our study covers only {data}. "
                    f"Future directions include scaling {method} and validating on {application}."
                ),
                index=next_index + 1,
            )
        )
    else:
        sections.append(Section(heading="Conclusion", text=conclusion, index=next_index))

    return PaperRecord(
        paper_id=paper_id,
        title=f"Improving {task} with {method}",
        abstract=abstract,
        sections=tuple(sections),
        venue=rng.choice(("ACL", "NeurIPS", "other")),
        year=year,
    )


def _make_reviews(
    paper_id: str,
    task: str,
    method: str,
    application: str,
    rng: random.Random,
) -> ReviewSet:
    substantive = (
        f"The paper is a solid contribution to {task}. "
        f"We suggest the authors explore how {method} behaves under domain shift. "
        f"The evaluation should be extended to {application} in a longer study."
    )
    nitpicking = (
        f"The core idea is sound and the writing is mostly clear. "
        f"There is a minor typo in Section {rng.randint(2, 5)}. "
        f"Please fix the citation formatting in the bibliography."
    )
    return ReviewSet(paper_id=paper_id, reviews=(substantive, nitpicking))


def write_demo_corpus(
    directory: str | Path,
    papers: list[PaperRecord],
    reviews: dict[str, ReviewSet],
) -> tuple[Path, Path]:
    """Write papers and reviews in the loader formats.

    Returns ``(papers_dir, reviews_path)``.
    """
    directory = Path(directory)
    papers_dir = directory / "papers"
    papers_dir.mkdir(parents=True, exist_ok=True)
    for paper in papers:
        payload = {
            "paper_id": paper.paper_id,
            "title": paper.title,
            "abstract": paper.abstract,
            "sections": [{"heading": s.heading, "text": s.text} for s in paper.sections],
            "venue": paper.venue,
            "year": paper.year,
        }
        path = papers_dir / f"{paper.paper_id}.json"
        path.write_text(json.dumps(payload, ensure_ascii=True, indent=2), encoding="utf-8")
    reviews_path = directory / "reviews.jsonl"
    with reviews_path.open("w", encoding="utf-8") as fh:
        for paper_id in sorted(reviews):
            for text in reviews[paper_id].reviews:
                fh.write(json.dumps({"paper_id": paper_id, "review_text": text}) + "\n")
    return papers_dir, reviews_path
