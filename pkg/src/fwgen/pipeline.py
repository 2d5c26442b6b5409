"""Pipeline stages: extract, index, generate, evaluate, report.

Stages form a DAG over files in the run's output directory; each command
consumes only declared predecessor artifacts and is idempotent given the
same inputs and cassettes. All row-oriented artifacts are sorted and
serialized with sorted keys, so replayed runs are byte-identical.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from statistics import mean

from .config import RunConfig, build_gateway
from .corpus import (
    PaperRecord,
    load_papers,
    load_reviews,
    paper_text,
    split_corpus,
    strip_future_work,
)
from .extraction import FutureWorkRecord, build_lineage, read_lineage, write_lineage
from .generation import assemble_prompt, canonical_heading_class, rank_sections
from .judge import (
    aggregate_rates,
    judge_feasibility,
    judge_hallucination,
    judge_novelty,
    judge_quality,
)
from .metrics import evaluate_all, scaled
from .refine import IterationResult, run_refinement_loop
from .retrieval import build_bm25, build_dense, chunk_text, hybrid_retrieve, load_index, save_index

logger = logging.getLogger(__name__)

LINEAGE_FILE = "lineage.jsonl"
SPLIT_FILE = "split.json"
INDEX_FILE = "index.json"

METRIC_FIELDS = ("rouge1", "rouge2", "rougeL", "bleu", "jaccard", "cosine")
QUALITY_FIELDS = ("coherence", "relevance", "readability", "grammar", "overall")


def _out(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _gt_tag(ground_truth: str) -> str:
    return ground_truth.replace("+", "_")


def traces_path(config: RunConfig) -> Path:
    return _out(config) / f"traces_{config.mode}.jsonl"


def evaluation_path(config: RunConfig) -> Path:
    return _out(config) / f"evaluation_{config.mode}_{_gt_tag(config.ground_truth)}.jsonl"


def summary_path(config: RunConfig) -> Path:
    return _out(config) / f"evaluation_summary_{config.mode}_{_gt_tag(config.ground_truth)}.json"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path}; run {producer} first")
    return path


def _load_corpus(config: RunConfig) -> list[PaperRecord]:
    papers, problems = load_papers(config.papers_dir)
    if problems:
        logger.warning("ignored %d malformed paper file(s)", len(problems))
    if not papers:
        raise ValueError(f"no usable papers in {config.papers_dir}")
    return sorted(papers, key=lambda p: p.paper_id)


def cmd_extract(config: RunConfig) -> Path:
    """Build the extraction lineage for every paper in the corpus."""
    config.validate()
    papers = _load_corpus(config)
    review_sets, problems = load_reviews(config.reviews_path, known_ids={p.paper_id for p in papers})
    if problems:
        logger.warning("ignored %d malformed review line(s)", len(problems))
    gateway = build_gateway(config)
    records = build_lineage(papers, {rs.paper_id: rs for rs in review_sets}, gateway)
    path = _out(config) / LINEAGE_FILE
    write_lineage(records, path)
    logger.info("wrote %d lineage records to %s", len(records), path)
    return path


def cmd_index(config: RunConfig) -> Path:
    """Split the corpus and index the held-out papers for retrieval."""
    config.validate()
    papers = _load_corpus(config)
    split = split_corpus(papers, config.index_size, config.seed)
    out = _out(config)
    split_payload = {
        "eval_ids": sorted(split.eval_ids),
        "index_ids": sorted(split.index_ids),
        "seed": split.seed,
    }
    split_file = out / SPLIT_FILE
    split_file.write_text(json.dumps(split_payload, ensure_ascii=True, sort_keys=True), encoding="utf-8")

    if not split.index_ids:
        logger.warning("index_size=0: no retrieval index; generation will run without retrieval")
        return split_file

    by_id = {p.paper_id: p for p in papers}
    chunks = []
    for paper_id in sorted(split.index_ids):
        chunks.extend(
            chunk_text(
                paper_text(by_id[paper_id]),
                config.chunk_size,
                paper_id=paper_id,
                start_id=len(chunks),
            )
        )
    gateway = build_gateway(config)
    bm25 = build_bm25(chunks)
    dense = build_dense(chunks, gateway)
    index_file = out / INDEX_FILE
    save_index(index_file, chunks, bm25, dense)
    logger.info("indexed %d chunks from %d papers", len(chunks), len(split.index_ids))
    return index_file


def _eval_targets(
    config: RunConfig,
    papers: list[PaperRecord],
    lineage: list[FutureWorkRecord],
) -> list[tuple[PaperRecord, FutureWorkRecord, str]]:
    """Eval-split papers with a usable reference: (stripped paper, record,
    reference). Skips flagged records and empty references, with warnings."""
    split_file = _require(Path(config.output_dir) / SPLIT_FILE, "the index command")
    split = json.loads(split_file.read_text(encoding="utf-8"))
    eval_ids = set(split["eval_ids"])
    by_id = {r.paper_id: r for r in lineage}
    targets = []
    for paper in papers:
        if paper.paper_id not in eval_ids:
            continue
        record = by_id.get(paper.paper_id)
        if record is None:
            logger.warning("paper %s: no lineage record, skipping", paper.paper_id)
            continue
        if not record.valid:
            logger.warning("paper %s: flagged lineage (%s), skipping", paper.paper_id, record.flags)
            continue
        reference = record.reference_for(config.ground_truth)
        if not reference.strip():
            logger.warning(
                "paper %s: empty %s reference, skipping", paper.paper_id, config.ground_truth
            )
            continue
        targets.append((strip_future_work(paper, record), record, reference))
    return targets


def _load_retrieval(config: RunConfig):
    split_file = _require(Path(config.output_dir) / SPLIT_FILE, "the index command")
    split = json.loads(split_file.read_text(encoding="utf-8"))
    index_file = Path(config.output_dir) / INDEX_FILE
    if not split["index_ids"]:
        return None
    _require(index_file, "the index command")
    return load_index(index_file)


def cmd_generate(config: RunConfig) -> Path:
    """Rank sections, assemble prompts, and run the refinement loop."""
    config.validate()
    lineage = read_lineage(_require(Path(config.output_dir) / LINEAGE_FILE, "the extract command"))
    papers = _load_corpus(config)
    retrieval = _load_retrieval(config)
    gateway = build_gateway(config)
    targets = _eval_targets(config, papers, lineage)
    if not targets:
        raise ValueError("no eval papers with usable ground truth")

    top_classes: tuple[str, ...] = ()
    if config.mode == "top3_sections":
        ranked = rank_sections(
            [paper for paper, _, _ in targets],
            {record.paper_id: ref for _, record, ref in targets},
            gateway,
        )
        top_classes = tuple(cls for cls, _ in ranked[:3])
        logger.info("section ranking: %s", ranked)

    def run_one(target) -> list[IterationResult]:
        paper, record, reference = target
        retrieved = ()
        if retrieval is not None:
            chunks, bm25, dense = retrieval
            query = _retrieval_query(paper, config.mode, top_classes)
            retrieved = hybrid_retrieve(
                query,
                chunks,
                bm25,
                dense,
                gateway,
                k=config.retrieval_k,
                weight_lexical=config.weight_lexical,
                weight_dense=config.weight_dense,
            )
        bundle = assemble_prompt(
            paper,
            config.mode,
            retrieved,
            budget=config.token_budget,
            top_classes=top_classes,
        )
        return run_refinement_loop(bundle, reference, config.policy(), gateway)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            all_results = list(pool.map(run_one, targets))
    else:
        all_results = [run_one(target) for target in targets]

    path = traces_path(config)
    with path.open("w", encoding="utf-8") as fh:
        for results in all_results:
            for result in results:
                fh.write(json.dumps(_trace_row(config, result), ensure_ascii=True, sort_keys=True) + "\n")
    logger.info("wrote traces for %d papers to %s", len(all_results), path)
    return path


def _retrieval_query(paper: PaperRecord, mode: str, top_classes: tuple[str, ...]) -> str:
    """Query text for retrieval: abstract plus the prompt's sections, no
    instruction boilerplate."""
    parts = [paper.abstract]
    for section in paper.sections:
        if not section.text.strip():
            continue
        if mode == "top3_sections" and canonical_heading_class(section.heading) not in top_classes:
            continue
        parts.append(section.text)
    return "\n\n".join(parts)


def _trace_row(config: RunConfig, result: IterationResult) -> dict:
    trace = result.trace
    return {
        "paper_id": trace.paper_id,
        "iteration": trace.iteration,
        "mode": trace.prompt.mode,
        "prompt_tokens": trace.prompt.token_count(),
        "block_tokens": trace.prompt.block_token_counts(),
        "retrieved_from": [item.chunk.paper_id for item in trace.prompt.retrieved],
        "output_text": trace.output_text,
        "feedback_used": trace.feedback_used,
        "quality": result.scores.as_dict(),
        "novelty": result.novelty.as_dict(),
        "triggered": result.triggered,
        "ground_truth": config.ground_truth,
    }


def cmd_evaluate(config: RunConfig) -> Path:
    """Score traces against the chosen ground truth and aggregate."""
    config.validate()
    out = Path(config.output_dir)
    lineage = read_lineage(_require(out / LINEAGE_FILE, "the extract command"))
    rows = [
        json.loads(line)
        for line in _require(traces_path(config), "the generate command")
        .read_text(encoding="utf-8")
        .splitlines()
        if line.strip()
    ]
    papers = _load_corpus(config)
    gateway = build_gateway(config)
    targets = _eval_targets(config, papers, lineage)
    by_id = {record.paper_id: (paper, record, reference) for paper, record, reference in targets}

    final_iteration = {}
    for row in rows:
        final_iteration[row["paper_id"]] = max(
            final_iteration.get(row["paper_id"], 0), row["iteration"]
        )

    eval_rows = []
    for row in rows:
        target = by_id.get(row["paper_id"])
        if target is None:
            logger.warning("trace paper %s has no usable reference, skipping", row["paper_id"])
            continue
        paper, record, reference = target
        output = row["output_text"]
        report = evaluate_all(output, reference, gateway)
        scores = judge_quality(output, reference, gateway)
        novelty = judge_novelty(output, reference, gateway)
        is_final = row["iteration"] == final_iteration[row["paper_id"]]
        nli_label = None
        hallucinated = None
        feasible = None
        if is_final:
            nli_label, hallucinated = judge_hallucination(
                paper_text(paper), reference, output, gateway
            )
            feasible = judge_feasibility(paper_text(paper), output, gateway).feasible
        eval_rows.append(
            {
                "paper_id": row["paper_id"],
                "iteration": row["iteration"],
                "final": is_final,
                "metrics": {k: _round6(v) for k, v in report.as_dict().items()},
                "quality": scores.as_dict(),
                "novelty": novelty.as_dict(),
                "nli_label": nli_label,
                "hallucinated": hallucinated,
                "feasible": feasible,
            }
        )

    eval_rows.sort(key=lambda r: (r["paper_id"], r["iteration"]))
    path = evaluation_path(config)
    with path.open("w", encoding="utf-8") as fh:
        for row in eval_rows:
            fh.write(json.dumps(row, ensure_ascii=True, sort_keys=True) + "\n")

    summary = _summarize(config, eval_rows, by_id)
    summary_path(config).write_text(
        json.dumps(summary, ensure_ascii=True, sort_keys=True, indent=2), encoding="utf-8"
    )
    logger.info("wrote %d evaluation rows to %s", len(eval_rows), path)
    return path


def _round6(value):
    return None if value is None else round(value, 6)


def _metric_means(reports: list[dict]) -> dict:
    means = {}
    for name in METRIC_FIELDS:
        values = [r[name] for r in reports if r[name] is not None]
        means[name] = _round6(mean(values)) if values else None
    return means


def _summarize(config: RunConfig, eval_rows: list[dict], by_id: dict) -> dict:
    per_iteration = {}
    for row in eval_rows:
        per_iteration.setdefault(row["iteration"], []).append(row)
    iteration_summary = {}
    for iteration, rows in sorted(per_iteration.items()):
        iteration_summary[str(iteration)] = {
            "papers": len(rows),
            "metrics": _metric_means([r["metrics"] for r in rows]),
            "quality": {
                name: _round6(mean(r["quality"][name] for r in rows)) for name in QUALITY_FIELDS
            },
            "novelty": _round6(mean(r["novelty"]["score"] for r in rows)),
        }

    final_rows = [r for r in eval_rows if r["final"]]
    rates = aggregate_rates(
        [r["hallucinated"] for r in final_rows],
        [r["feasible"] for r in final_rows],
    ) if final_rows else {}

    # Extraction quality: the rule-based and refined texts as candidates
    # against the same reference the generations were scored on.
    tool_reports = []
    refined_reports = []
    for paper, record, reference in by_id.values():
        if record.tool_extracted.strip():
            tool_reports.append(evaluate_all(record.tool_extracted, reference).as_dict())
        if record.llm_extracted.strip():
            refined_reports.append(evaluate_all(record.llm_extracted, reference).as_dict())

    return {
        "mode": config.mode,
        "ground_truth": config.ground_truth,
        "papers": len({r["paper_id"] for r in eval_rows}),
        "iterations": iteration_summary,
        "final": {
            "papers": len(final_rows),
            "metrics": _metric_means([r["metrics"] for r in final_rows]),
        },
        "rates": rates,
        "extraction": {
            "tool": {"papers": len(tool_reports), "metrics": _metric_means(tool_reports)},
            "refined": {"papers": len(refined_reports), "metrics": _metric_means(refined_reports)},
        },
    }


def cmd_report(config: RunConfig) -> Path:
    """Format every evaluation summary in the run directory into tables.

    Pure formatting: no gateway, no model calls, byte-identical output for
    identical inputs. Metric columns are scaled by 100 with 2 decimals;
    judge scores stay on their native scales with 2 decimals.
    """
    out = _out(config)
    summaries = []
    for path in sorted(out.glob("evaluation_summary_*.json")):
        summaries.append(json.loads(path.read_text(encoding="utf-8")))
    if not summaries:
        raise FileNotFoundError(f"no evaluation summaries in {out}; run the evaluate command first")

    gen_lines = ["mode\tground_truth\titeration\tpapers\t" + "\t".join(METRIC_FIELDS)
                 + "\t" + "\t".join(QUALITY_FIELDS) + "\tnovelty"]
    for s in summaries:
        for iteration, block in sorted(s["iterations"].items()):
            cells = [s["mode"], s["ground_truth"], iteration, str(block["papers"])]
            cells += [_fmt(scaled(block["metrics"][name])) for name in METRIC_FIELDS]
            cells += [_fmt(block["quality"][name]) for name in QUALITY_FIELDS]
            cells.append(_fmt(block["novelty"]))
            gen_lines.append("\t".join(cells))
    (out / "report_generation.tsv").write_text("\n".join(gen_lines) + "\n", encoding="utf-8")

    ext_lines = ["mode\tground_truth\tsource\tpapers\t" + "\t".join(METRIC_FIELDS)]
    for s in summaries:
        for source in ("tool", "refined"):
            block = s["extraction"][source]
            cells = [s["mode"], s["ground_truth"], source, str(block["papers"])]
            cells += [_fmt(scaled(block["metrics"][name])) for name in METRIC_FIELDS]
            ext_lines.append("\t".join(cells))
    (out / "report_extraction.tsv").write_text("\n".join(ext_lines) + "\n", encoding="utf-8")

    rate_lines = ["mode\tground_truth\thallucination_rate\tfeasibility_rate"]
    for s in summaries:
        rates = s["rates"]
        rate_lines.append(
            "\t".join(
                [
                    s["mode"],
                    s["ground_truth"],
                    _fmt(rates.get("hallucination_rate")),
                    _fmt(rates.get("feasibility_rate")),
                ]
            )
        )
    (out / "report_rates.tsv").write_text("\n".join(rate_lines) + "\n", encoding="utf-8")

    summary_file = out / "report_summary.json"
    summary_file.write_text(
        json.dumps({"runs": summaries}, ensure_ascii=True, sort_keys=True, indent=2),
        encoding="utf-8",
    )
    logger.info("wrote reports to %s", out)
    return summary_file


def _fmt(value) -> str:
    return "-" if value is None else f"{value:.2f}"
