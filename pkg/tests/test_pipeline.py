"""Pipeline stages over a synthetic corpus with the offline provider."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from fwgen.cli import build_parser, main, resolve_config
from fwgen.config import RunConfig
from fwgen.demo import synthetic_corpus, write_demo_corpus
from fwgen.extraction import read_lineage
from fwgen.judge import NLI_LABELS
from fwgen.pipeline import (
    INDEX_FILE,
    LINEAGE_FILE,
    METRIC_FIELDS,
    QUALITY_FIELDS,
    SPLIT_FILE,
    cmd_evaluate,
    cmd_extract,
    cmd_generate,
    cmd_index,
    cmd_report,
    evaluation_path,
    summary_path,
    traces_path,
)
from fwgen.retrieval import load_index


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    papers, reviews = synthetic_corpus(count=8, seed=5)
    papers_dir, reviews_path = write_demo_corpus(
        tmp_path_factory.mktemp("corpus"), papers, reviews
    )
    return papers_dir, reviews_path


def make_config(corpus, output_dir: Path, **overrides) -> RunConfig:
    papers_dir, reviews_path = corpus
    values = dict(
        papers_dir=str(papers_dir),
        reviews_path=str(reviews_path),
        output_dir=str(output_dir),
        seed=11,
        index_size=2,
        chunk_size=64,
        retrieval_k=2,
        provider="offline",
        max_refinements=1,
    )
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture(scope="module")
def full_run(corpus, tmp_path_factory):
    """One complete extract/index/generate/evaluate/report run."""
    out = tmp_path_factory.mktemp("run")
    config = make_config(corpus, out)
    cmd_extract(config)
    cmd_index(config)
    cmd_generate(config)
    cmd_evaluate(config)
    cmd_report(config)
    return config, out


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


class TestStagePreconditions:
    def test_generate_requires_extraction(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "fresh")
        with pytest.raises(FileNotFoundError, match="extract"):
            cmd_generate(config)

    def test_generate_requires_index(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "fresh")
        cmd_extract(config)
        with pytest.raises(FileNotFoundError, match="index"):
            cmd_generate(config)

    def test_evaluate_requires_traces(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "fresh")
        cmd_extract(config)
        cmd_index(config)
        with pytest.raises(FileNotFoundError, match="generate"):
            cmd_evaluate(config)

    def test_report_requires_summaries(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "fresh")
        with pytest.raises(FileNotFoundError, match="evaluate"):
            cmd_report(config)


class TestExtractStage:
    def test_one_lineage_record_per_paper_in_id_order(self, full_run):
        config, out = full_run
        records = read_lineage(out / LINEAGE_FILE)
        assert len(records) == 8
        assert [r.paper_id for r in records] == sorted(r.paper_id for r in records)

    def test_lineage_subset_invariants_hold(self, full_run):
        config, out = full_run
        for record in read_lineage(out / LINEAGE_FILE):
            assert record.valid, record.flags


class TestIndexStage:
    def test_split_is_sorted_and_disjoint(self, full_run):
        config, out = full_run
        split = json.loads((out / SPLIT_FILE).read_text(encoding="utf-8"))
        assert split["eval_ids"] == sorted(split["eval_ids"])
        assert split["index_ids"] == sorted(split["index_ids"])
        assert len(split["index_ids"]) == 2
        assert not set(split["eval_ids"]) & set(split["index_ids"])
        assert split["seed"] == config.seed

    def test_index_chunks_come_only_from_index_papers(self, full_run):
        config, out = full_run
        split = json.loads((out / SPLIT_FILE).read_text(encoding="utf-8"))
        chunks, bm25, dense = load_index(out / INDEX_FILE)
        assert chunks
        assert {c.paper_id for c in chunks} <= set(split["index_ids"])
        assert all(c.token_count <= config.chunk_size for c in chunks)

    def test_index_size_zero_runs_without_retrieval(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "noindex", index_size=0)
        cmd_extract(config)
        cmd_index(config)
        assert not (tmp_path / "noindex" / INDEX_FILE).exists()
        cmd_generate(config)
        rows = read_jsonl(traces_path(config))
        assert rows
        assert all(row["retrieved_from"] == [] for row in rows)


class TestGenerateStage:
    def test_iterations_are_contiguous_and_bounded(self, full_run):
        config, out = full_run
        per_paper: dict[str, list[int]] = {}
        for row in read_jsonl(traces_path(config)):
            per_paper.setdefault(row["paper_id"], []).append(row["iteration"])
        assert per_paper
        for paper_id, iterations in per_paper.items():
            assert iterations == list(range(1, len(iterations) + 1))
            assert len(iterations) <= config.max_refinements + 1

    def test_trace_rows_have_budgeted_prompts(self, full_run):
        config, _ = full_run
        for row in read_jsonl(traces_path(config)):
            assert row["prompt_tokens"] <= config.token_budget
            assert row["mode"] == config.mode
            assert row["ground_truth"] == config.ground_truth
            assert isinstance(row["block_tokens"], dict)
            assert row["output_text"].strip()

    def test_first_iterations_carry_no_feedback(self, full_run):
        config, _ = full_run
        for row in read_jsonl(traces_path(config)):
            if row["iteration"] == 1:
                assert row["feedback_used"] is None
            else:
                assert row["feedback_used"].strip()

    def test_retrieved_chunks_come_from_index_papers(self, full_run):
        config, out = full_run
        split = json.loads((out / SPLIT_FILE).read_text(encoding="utf-8"))
        for row in read_jsonl(traces_path(config)):
            assert set(row["retrieved_from"]) <= set(split["index_ids"])
            assert len(row["retrieved_from"]) <= config.retrieval_k

    def test_all_sections_mode_skips_ranking(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "allmode", mode="all_sections")
        cmd_extract(config)
        cmd_index(config)
        cmd_generate(config)
        rows = read_jsonl(traces_path(config))
        assert rows
        assert all(row["mode"] == "all_sections" for row in rows)

    def test_all_index_papers_means_no_targets(self, corpus, tmp_path):
        config = make_config(corpus, tmp_path / "allindex", index_size=8)
        cmd_extract(config)
        cmd_index(config)
        with pytest.raises(ValueError, match="no eval papers"):
            cmd_generate(config)

    def test_parallel_generation_matches_serial(self, corpus, tmp_path):
        serial = make_config(corpus, tmp_path / "serial", workers=1)
        parallel = make_config(corpus, tmp_path / "parallel", workers=4)
        for config in (serial, parallel):
            cmd_extract(config)
            cmd_index(config)
            cmd_generate(config)
        assert (
            traces_path(serial).read_text(encoding="utf-8")
            == traces_path(parallel).read_text(encoding="utf-8")
        )


class TestEvaluateStage:
    def test_rows_sorted_with_one_final_per_paper(self, full_run):
        config, _ = full_run
        rows = read_jsonl(evaluation_path(config))
        assert rows == sorted(rows, key=lambda r: (r["paper_id"], r["iteration"]))
        by_paper: dict[str, list[dict]] = {}
        for row in rows:
            by_paper.setdefault(row["paper_id"], []).append(row)
        for paper_id, paper_rows in by_paper.items():
            finals = [r for r in paper_rows if r["final"]]
            assert len(finals) == 1
            assert finals[0]["iteration"] == max(r["iteration"] for r in paper_rows)

    def test_verdicts_only_on_final_iterations(self, full_run):
        config, _ = full_run
        for row in read_jsonl(evaluation_path(config)):
            if row["final"]:
                assert row["nli_label"] in NLI_LABELS
                assert isinstance(row["hallucinated"], bool)
                assert isinstance(row["feasible"], bool)
            else:
                assert row["nli_label"] is None
                assert row["hallucinated"] is None
                assert row["feasible"] is None

    def test_metric_values_in_range(self, full_run):
        config, _ = full_run
        for row in read_jsonl(evaluation_path(config)):
            for name in METRIC_FIELDS:
                value = row["metrics"][name]
                assert value is not None
                assert 0.0 <= value <= 1.0

    def test_summary_shape(self, full_run):
        config, _ = full_run
        summary = json.loads(summary_path(config).read_text(encoding="utf-8"))
        rows = read_jsonl(evaluation_path(config))
        assert summary["mode"] == config.mode
        assert summary["ground_truth"] == config.ground_truth
        assert summary["papers"] == len({r["paper_id"] for r in rows})
        for block in summary["iterations"].values():
            assert set(block["metrics"]) == set(METRIC_FIELDS)
            assert set(block["quality"]) == set(QUALITY_FIELDS)
        assert set(summary["rates"]) == {"hallucination_rate", "feasibility_rate"}
        assert summary["final"]["papers"] == summary["papers"]
        for source in ("tool", "refined"):
            assert set(summary["extraction"][source]["metrics"]) == set(METRIC_FIELDS)


class TestReportStage:
    def report_files(self, out: Path) -> list[Path]:
        return [
            out / "report_generation.tsv",
            out / "report_extraction.tsv",
            out / "report_rates.tsv",
            out / "report_summary.json",
        ]

    def test_tables_are_rectangular(self, full_run):
        _, out = full_run
        for path in self.report_files(out)[:3]:
            lines = path.read_text(encoding="utf-8").splitlines()
            assert len(lines) >= 2
            width = len(lines[0].split("\t"))
            for line in lines[1:]:
                assert len(line.split("\t")) == width

    def test_cells_are_formatted_numbers_or_dashes(self, full_run):
        _, out = full_run
        lines = (out / "report_generation.tsv").read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        for line in lines[1:]:
            row = dict(zip(header, line.split("\t")))
            for name in METRIC_FIELDS:
                assert row[name] == "-" or float(row[name]) >= 0.0

    def test_report_is_deterministic(self, full_run):
        config, out = full_run
        before = [p.read_bytes() for p in self.report_files(out)]
        cmd_report(config)
        after = [p.read_bytes() for p in self.report_files(out)]
        assert before == after


class TestCli:
    def write_config(self, corpus, tmp_path: Path, **overrides) -> Path:
        config = make_config(corpus, tmp_path / "cli_run", **overrides)
        path = tmp_path / "run.yaml"
        payload = {
            "papers_dir": config.papers_dir,
            "reviews_path": config.reviews_path,
            "output_dir": config.output_dir,
            "seed": config.seed,
            "index_size": config.index_size,
            "chunk_size": config.chunk_size,
            "retrieval_k": config.retrieval_k,
            "provider": config.provider,
            "max_refinements": config.max_refinements,
        }
        path.write_text(
            "\n".join(f"{key}: {value}" for key, value in payload.items()) + "\n",
            encoding="utf-8",
        )
        return path

    def test_run_command_executes_all_stages(self, corpus, tmp_path):
        config_path = self.write_config(corpus, tmp_path)
        assert main(["run", "--config", str(config_path), "--mode", "top3"]) == 0
        out = tmp_path / "cli_run"
        for name in (LINEAGE_FILE, SPLIT_FILE, INDEX_FILE, "report_summary.json"):
            assert (out / name).exists()

    def test_invalid_config_exits_nonzero(self, corpus, tmp_path, capsys):
        config_path = self.write_config(corpus, tmp_path, index_size=100)
        assert main(["index", "--config", str(config_path)]) == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_flag_overrides(self, corpus, tmp_path):
        config_path = self.write_config(corpus, tmp_path)
        args = build_parser().parse_args(
            [
                "generate",
                "--config",
                str(config_path),
                "--mode",
                "all",
                "--ground-truth",
                "fw",
                "--seed",
                "99",
                "--max-refinements",
                "0",
                "--workers",
                "3",
            ]
        )
        config = resolve_config(args)
        assert config.mode == "all_sections"
        assert config.ground_truth == "fw"
        assert config.seed == 99
        assert config.max_refinements == 0
        assert config.workers == 3

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["frobnicate"])
