"""Subword vocabularies with a word-initial marker, trained by greedy pair merging.

A vocabulary trained on a parent language pair can be applied verbatim to a
child pair: child words built from parent-seen characters always encode
(typically into many short pieces), and truly unseen characters become UNK.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import ParallelCorpus
from .errors import UnknownId, VocabTooSmall

MARKER = "▁"

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_PIECES = ("<pad>", "<s>", "</s>", "<unk>")
_DROP_ON_DECODE = frozenset({PAD, BOS, EOS})

_HEADER = "subword-vocab v1"


@dataclass(frozen=True)
class TokenizedSentence:
    ids: tuple[int, ...]
    pieces: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class TokenizationStats:
    """Corpus-level token statistics, cleaned of specials and the marker.

    Token length is token-weighted: total characters over all cleaned tokens
    divided by the total token count, not a per-sentence average.
    """

    avg_sentence_length_source: float
    avg_sentence_length_target: float
    avg_token_length_source: float
    avg_token_length_target: float
    sentences: int


def _decompose(word: str) -> list[str]:
    """Initial symbol sequence of a word: marker fused onto the first character."""
    return [MARKER + word[0]] + list(word[1:])


class SubwordVocabulary:
    """Ordered piece inventory plus ranked merge rules. Immutable once built."""

    def __init__(self, pieces, merges):
        self.pieces: tuple[str, ...] = tuple(pieces)
        self.merges: tuple[tuple[str, str], ...] = tuple((l, r) for l, r in merges)
        if self.pieces[: len(SPECIAL_PIECES)] != SPECIAL_PIECES:
            raise ValueError("first four pieces must be the special tokens")
        self.piece_to_id = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_to_id) != len(self.pieces):
            raise ValueError("duplicate pieces")
        self._word_cache: dict[str, list[str]] = {}

    def __len__(self) -> int:
        return len(self.pieces)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SubwordVocabulary)
            and self.pieces == other.pieces
            and self.merges == other.merges
        )

    def segment_word(self, word: str) -> list[str]:
        """Split one word into subword surface strings by replaying the merges."""
        cached = self._word_cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = _decompose(word)
        for left, right in self.merges:
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == left and symbols[i + 1] == right:
                    symbols[i : i + 2] = [left + right]
                else:
                    i += 1
        self._word_cache[word] = list(symbols)
        return symbols

    def to_text(self) -> str:
        lines = [f"{_HEADER} {len(self.pieces)}"]
        lines += [f"{p}\t{i}" for i, p in enumerate(self.pieces)]
        lines.append("#merges")
        lines += [f"{l}\t{r}\t{rank}" for rank, (l, r) in enumerate(self.merges)]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_text().encode("utf-8"))

    @classmethod
    def from_text(cls, text: str) -> "SubwordVocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        head = lines[0].rsplit(" ", 1)
        if len(head) != 2 or head[0] != _HEADER:
            raise ValueError(f"bad vocabulary header: {lines[0]!r}")
        n = int(head[1])
        pieces = []
        for i, line in enumerate(lines[1 : 1 + n]):
            piece, id_str = line.split("\t")
            if int(id_str) != i:
                raise ValueError(f"non-dense piece id at line {i + 2}")
            pieces.append(piece)
        if len(pieces) != n or lines[1 + n] != "#merges":
            raise ValueError("truncated vocabulary file")
        merges = []
        for rank, line in enumerate(lines[2 + n :]):
            left, right, rank_str = line.split("\t")
            if int(rank_str) != rank:
                raise ValueError(f"non-sequential merge rank {rank_str}")
            merges.append((left, right))
        return cls(pieces, merges)

    @classmethod
    def load(cls, path) -> "SubwordVocabulary":
        return cls.from_text(Path(path).read_bytes().decode("utf-8"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _word_frequencies(corpus: ParallelCorpus) -> Counter:
    freqs: Counter = Counter()
    for side in (corpus.source, corpus.target):
        for sentence in side:
            freqs.update(sentence.split())
    return freqs


def train_vocab(corpus: ParallelCorpus, vocab_size: int) -> SubwordVocabulary:
    """Learn merges greedily: highest adjacent-pair frequency first, ties broken
    by lexicographic order of the merged string. Stops at vocab_size pieces or
    when no pair occurs twice.
    """
    word_freqs = _word_frequencies(corpus)
    chars = sorted({c for w in word_freqs for c in w})
    if not chars:
        raise VocabTooSmall("corpus contains no text to train on")
    base = list(SPECIAL_PIECES) + chars + [MARKER + c for c in chars]
    if vocab_size < len(base):
        raise VocabTooSmall(
            f"vocab_size {vocab_size} < {len(base)} (character inventory plus specials)"
        )

    splits = {w: _decompose(w) for w in word_freqs}
    pieces = list(base)
    piece_set = set(base)
    merges: list[tuple[str, str]] = []
    while len(pieces) < vocab_size:
        pair_freqs: Counter = Counter()
        for word, freq in word_freqs.items():
            symbols = splits[word]
            for i in range(len(symbols) - 1):
                pair_freqs[(symbols[i], symbols[i + 1])] += freq
        repeated = [(pair, freq) for pair, freq in pair_freqs.items() if freq >= 2]
        if not repeated:
            break
        # highest frequency wins; ties by merged string, then by the pair itself
        best_pair, _ = min(repeated, key=lambda kv: (-kv[1], kv[0][0] + kv[0][1], kv[0]))
        left, right = best_pair
        for symbols in splits.values():
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == left and symbols[i + 1] == right:
                    symbols[i : i + 2] = [left + right]
                else:
                    i += 1
        merges.append(best_pair)
        merged = left + right
        if merged not in piece_set:
            pieces.append(merged)
            piece_set.add(merged)
    return SubwordVocabulary(pieces, merges)


def encode(vocab: SubwordVocabulary, text: str) -> TokenizedSentence:
    """Tokenize one sentence. Unknown characters keep their surface form in
    `pieces` but map to the UNK id, so the surface stream stays lossless."""
    ids: list[int] = []
    pieces: list[str] = []
    for word in text.split():
        for symbol in vocab.segment_word(word):
            ids.append(vocab.piece_to_id.get(symbol, UNK))
            pieces.append(symbol)
    return TokenizedSentence(tuple(ids), tuple(pieces))


def decode(vocab: SubwordVocabulary, tokens) -> str:
    """Rebuild a sentence from a TokenizedSentence (lossless) or an id list
    (UNK-lossy). PAD/BOS/EOS are dropped."""
    if isinstance(tokens, TokenizedSentence):
        kept = [p for i, p in zip(tokens.ids, tokens.pieces) if i not in _DROP_ON_DECODE]
    else:
        kept = []
        for i in tokens:
            i = int(i)
            if not 0 <= i < len(vocab.pieces):
                raise UnknownId(f"id {i} outside vocabulary of size {len(vocab.pieces)}")
            if i not in _DROP_ON_DECODE:
                kept.append(vocab.pieces[i])
    return "".join(kept).replace(MARKER, " ").strip()


def _side_stats(sentences, vocab: SubwordVocabulary) -> tuple[float, float]:
    total_tokens = 0
    total_chars = 0
    for sentence in sentences:
        tok = encode(vocab, sentence)
        cleaned = [p.replace(MARKER, "") for i, p in zip(tok.ids, tok.pieces) if i not in _DROP_ON_DECODE]
        total_tokens += len(cleaned)
        total_chars += sum(len(t) for t in cleaned)
    n = len(sentences)
    avg_sent = total_tokens / n if n else 0.0
    avg_tok = total_chars / total_tokens if total_tokens else 0.0
    return avg_sent, avg_tok


def tokenization_stats(corpus: ParallelCorpus, vocab: SubwordVocabulary) -> TokenizationStats:
    """Sentence/token length statistics after removing specials and the marker."""
    src_sent, src_tok = _side_stats(corpus.source, vocab)
    tgt_sent, tgt_tok = _side_stats(corpus.target, vocab)
    return TokenizationStats(src_sent, tgt_sent, src_tok, tgt_tok, len(corpus))
