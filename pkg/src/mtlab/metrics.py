"""Corpus-level BLEU and chrF, implemented from their definitions.

BLEU: whitespace tokens, clipped n-gram precisions pooled over the corpus,
add-one smoothing on orders >= 2 whose match count is zero, brevity penalty
exp(1 - r/c) when the hypothesis is not longer than the reference.

chrF: per-sentence character n-grams (whitespace removed), precision/recall
averaged over orders 1..6, F-beta with beta favouring recall, corpus score as
the arithmetic mean over sentences.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyInput, LengthMismatch


@dataclass(frozen=True)
class BleuResult:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


@dataclass(frozen=True)
class EvaluationReport:
    bleu: float
    chrf: float
    per_sentence_chrf: tuple[float, ...]
    ngram_precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def to_tsv(self) -> str:
        lines = [
            f"BLEU\t{self.bleu:.4f}",
            f"chrF\t{self.chrf:.4f}",
            "ngram_precisions\t" + " ".join(f"{p:.4f}" for p in self.ngram_precisions),
            f"brevity_penalty\t{self.brevity_penalty:.4f}",
            f"hyp_len\t{self.hyp_len}",
            f"ref_len\t{self.ref_len}",
        ]
        return "\n".join(lines) + "\n"

    def pretty(self) -> str:
        return f"BLEU = {self.bleu:.4f}\nchrF = {self.chrf:.4f}\n"


def _check_pairs(references, hypotheses) -> None:
    if len(references) != len(hypotheses):
        raise LengthMismatch(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    if not references:
        raise EmptyInput("need at least one reference/hypothesis pair")


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(references, hypotheses, max_n: int = 4) -> BleuResult:
    """Corpus BLEU in [0, 100] over whitespace tokens."""
    _check_pairs(references, hypotheses)
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for ref, hyp in zip(references, hypotheses):
        ref_tokens = ref.split()
        hyp_tokens = hyp.split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_n + 1):
            hyp_counts = _ngrams(hyp_tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref_tokens, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if hyp_len == 0:
        if ref_len == 0:  # nothing to translate, translated as nothing
            return BleuResult(100.0, tuple(1.0 for _ in range(max_n)), 1.0, 0, 0)
        return BleuResult(0.0, tuple(0.0 for _ in range(max_n)), 0.0, 0, ref_len)

    precisions = []
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2 and m == 0:
            m, t = m + 1, t + 1  # smoothing keeps tiny corpora off the floor
        precisions.append(m / t if t > 0 else 0.0)

    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) <= 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score, tuple(precisions), bp, hyp_len, ref_len)


def _sentence_chrf(ref: str, hyp: str, char_n: int, beta: float) -> float:
    r = "".join(ref.split())
    h = "".join(hyp.split())
    if not r and not h:
        return 1.0  # identical empties
    orders = [n for n in range(1, char_n + 1) if max(len(r), len(h)) >= n]
    p_sum = 0.0
    r_sum = 0.0
    for n in orders:
        ref_counts = _ngrams(r, n)
        hyp_counts = _ngrams(h, n)
        matched = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        hyp_total = sum(hyp_counts.values())
        ref_total = sum(ref_counts.values())
        p_sum += matched / hyp_total if hyp_total else 0.0
        r_sum += matched / ref_total if ref_total else 0.0
    precision = p_sum / len(orders)
    recall = r_sum / len(orders)
    if precision + recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def chrf(references, hypotheses, char_n: int = 6, beta: float = 2.0):
    """Corpus chrF in [0, 1] plus per-sentence scores."""
    _check_pairs(references, hypotheses)
    per_sentence = [_sentence_chrf(r, h, char_n, beta) for r, h in zip(references, hypotheses)]
    return sum(per_sentence) / len(per_sentence), per_sentence


def evaluate_corpus(references, hypotheses, max_n: int = 4, char_n: int = 6, beta: float = 2.0) -> EvaluationReport:
    b = bleu(references, hypotheses, max_n=max_n)
    c, per_sentence = chrf(references, hypotheses, char_n=char_n, beta=beta)
    return EvaluationReport(
        bleu=b.score,
        chrf=c,
        per_sentence_chrf=tuple(per_sentence),
        ngram_precisions=b.precisions,
        brevity_penalty=b.brevity_penalty,
        hyp_len=b.hyp_len,
        ref_len=b.ref_len,
    )
