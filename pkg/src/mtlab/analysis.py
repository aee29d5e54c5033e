"""Diagnostic corpus analyses: word-level length statistics and
prefix-variant counting for non-standard orthography."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import LengthMismatch


@dataclass(frozen=True)
class LengthStats:
    """Whitespace-word statistics; word averages are weighted by word count."""

    avg_sent_len_gold: float
    avg_sent_len_pred: float
    avg_word_len_gold: float
    avg_word_len_pred: float

    def to_tsv(self) -> str:
        return (
            f"avg_sent_len_gold\t{self.avg_sent_len_gold!r}\n"
            f"avg_sent_len_pred\t{self.avg_sent_len_pred!r}\n"
            f"avg_word_len_gold\t{self.avg_word_len_gold!r}\n"
            f"avg_word_len_pred\t{self.avg_word_len_pred!r}\n"
        )

    def pretty(self) -> str:
        rows = [
            ("sentence length", self.avg_sent_len_gold, self.avg_sent_len_pred),
            ("word length", self.avg_word_len_gold, self.avg_word_len_pred),
        ]
        lines = [f"{'':16s} {'gold':>8s} {'pred':>8s}"]
        lines += [f"{name:16s} {g:8.2f} {p:8.2f}" for name, g, p in rows]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class VariantReport:
    stem: str
    count: int
    matched_forms: dict[str, int]

    def to_tsv(self) -> str:
        lines = [f"stem\t{self.stem}", f"count\t{self.count}"]
        lines += [f"form:{form}\t{n}" for form, n in sorted(self.matched_forms.items())]
        return "\n".join(lines) + "\n"


def _side_lengths(sentences) -> tuple[float, float]:
    total_words = 0
    total_chars = 0
    for s in sentences:
        words = s.split()
        total_words += len(words)
        total_chars += sum(len(w) for w in words)
    n = len(sentences)
    avg_sent = total_words / n if n else 0.0
    avg_word = total_chars / total_words if total_words else 0.0
    return avg_sent, avg_word


def length_stats(gold, pred) -> LengthStats:
    """Average words per sentence and characters per word, gold vs prediction."""
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted sentences")
    sent_g, word_g = _side_lengths(gold)
    sent_p, word_p = _side_lengths(pred)
    return LengthStats(sent_g, sent_p, word_g, word_p)


def variant_count(corpus_side, stem: str) -> VariantReport:
    """Count whitespace-delimited words starting with `stem`, byte-exact.

    No normalization is applied anywhere: orthographic variants that differ
    in a single code point are distinct forms."""
    if not stem:
        raise ValueError("stem must be non-empty")
    forms: Counter = Counter()
    for sentence in corpus_side:
        for word in sentence.split():
            if word.startswith(stem):
                forms[word] += 1
    return VariantReport(stem, sum(forms.values()), dict(forms))
