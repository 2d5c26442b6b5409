"""Reference-based text similarity metrics.

ROUGE-1/2/L, sentence-level BLEU, Jaccard similarity, and embedding cosine
similarity, all over one shared word tokenizer. Scores live in [0, 1];
reports scale them by 100 with two decimals to match common table formats.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gateway import LlmGateway
from .textutil import tokenize

logger = logging.getLogger(__name__)

BLEU_MAX_ORDER = 4


@dataclass(frozen=True)
class MetricReport:
    """One candidate-vs-reference evaluation; cosine is None without an
    embedding provider."""

    rouge1: float
    rouge2: float
    rougeL: float
    bleu: float
    jaccard: float
    cosine: float | None = None

    def as_dict(self) -> dict:
        return {
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "bleu": self.bleu,
            "jaccard": self.jaccard,
            "cosine": self.cosine,
        }


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n(candidate: str, reference: str, n: int) -> float:
    """ROUGE-N F1 with clipped n-gram counts; 0 when either side has no
    n-grams of order n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _f1(overlap / cand_total, overlap / ref_total)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Rolling one-row DP; O(len(a) * len(b)) time, O(len(b)) space.
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """ROUGE-L F1 from the longest common subsequence of word tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    return _f1(lcs / len(cand), lcs / len(ref))


def bleu(candidate: str, reference: str) -> float:
    """Sentence-level BLEU, orders 1 to 4, single reference.

    Add-one smoothing applies to orders 2 to 4 only, so zero unigram
    overlap still scores 0. Brevity penalty exp(1 - r/c) applies when the
    candidate is shorter than the reference.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, BLEU_MAX_ORDER + 1):
        cand_grams = _ngrams(cand, n)
        ref_grams = _ngrams(ref, n)
        total = sum(cand_grams.values())
        overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
        if n == 1:
            if overlap == 0:
                return 0.0
            p = overlap / total
        else:
            p = (overlap + 1.0) / (total + 1.0)
        log_sum += math.log(p)
    geo_mean = math.exp(log_sum / BLEU_MAX_ORDER)
    if len(cand) < len(ref):
        bp = math.exp(1.0 - len(ref) / len(cand))
    else:
        bp = 1.0
    return bp * geo_mean


def jaccard(candidate: str, reference: str) -> float:
    """Jaccard similarity over lowercase token sets.

    Two empty texts count as identical (1.0); exactly one empty is fully
    dissimilar (0.0).
    """
    a = set(tokenize(candidate))
    b = set(tokenize(reference))
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def cosine_sim(candidate: str, reference: str, gateway: LlmGateway) -> float:
    """Cosine of the two text embeddings, clamped to [0, 1]."""
    vectors = gateway.embed([candidate, reference])
    return cosine_of_vectors(vectors[0], vectors[1])


def cosine_of_vectors(a: Sequence[float], b: Sequence[float]) -> float:
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    value = float(np.dot(va, vb) / (na * nb))
    return min(1.0, max(0.0, value))


def evaluate_all(candidate: str, reference: str, gateway: LlmGateway | None = None) -> MetricReport:
    """Compute the full metric suite for one candidate/reference pair."""
    return MetricReport(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
        bleu=bleu(candidate, reference),
        jaccard=jaccard(candidate, reference),
        cosine=None if gateway is None else cosine_sim(candidate, reference, gateway),
    )


def scaled(value: float | None) -> float | None:
    """Report form: ×100, two decimals. None passes through."""
    if value is None:
        return None
    return round(value * 100.0, 2)
