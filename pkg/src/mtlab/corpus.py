"""Line-aligned parallel corpora: loading, saving and train/dev split construction.

Files follow the shared-task distribution format: plain UTF-8 text, one
sentence per line, LF line endings, source and target aligned by line number.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidEncoding, LineCountMismatch


class Track(enum.Enum):
    TRACK_ONE = "one"  # a seeded portion of dev is folded into train
    TRACK_TWO = "two"  # train contains no dev data


@dataclass(frozen=True)
class ParallelCorpus:
    """Aligned source/target sentences for one language pair."""

    pair_id: str
    source: tuple[str, ...]
    target: tuple[str, ...]

    def __post_init__(self):
        if len(self.source) != len(self.target):
            raise LineCountMismatch(
                f"{self.pair_id}: {len(self.source)} source vs {len(self.target)} target sentences"
            )
        for side in (self.source, self.target):
            for s in side:
                if "\n" in s or "\r" in s:
                    raise ValueError(f"sentence contains a line break: {s!r}")

    def __len__(self) -> int:
        return len(self.source)

    def pairs(self) -> list[tuple[str, str]]:
        return list(zip(self.source, self.target))

    def subset(self, indices) -> "ParallelCorpus":
        return ParallelCorpus(
            self.pair_id,
            tuple(self.source[i] for i in indices),
            tuple(self.target[i] for i in indices),
        )

    def concat(self, other: "ParallelCorpus") -> "ParallelCorpus":
        return ParallelCorpus(self.pair_id, self.source + other.source, self.target + other.target)


@dataclass(frozen=True)
class SplitSet:
    """Train/dev/test corpora plus the track they were built under."""

    train: ParallelCorpus
    dev: ParallelCorpus
    test: ParallelCorpus
    track: Track = Track.TRACK_TWO

    def overlapping_pairs(self) -> set[tuple[str, str]]:
        """Sentence pairs shared by more than one split (empty for a clean split)."""
        a, b, c = (set(s.pairs()) for s in (self.train, self.dev, self.test))
        return (a & b) | (a & c) | (b & c)


def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise InvalidEncoding(f"{path}: {e}") from None
    lines = text.split("\n")
    # a single final newline produces one empty trailing element; drop it
    if lines and lines[-1] == "":
        lines.pop()
    return [line.rstrip() for line in lines]


def load_parallel(source_path, target_path, pair_id: str) -> ParallelCorpus:
    """Load a pair of one-sentence-per-line files aligned by line number.

    Trailing whitespace (including CR) is stripped from every line; interior
    empty lines are kept as legal empty sentences.
    """
    src = _read_lines(Path(source_path))
    tgt = _read_lines(Path(target_path))
    if len(src) != len(tgt):
        raise LineCountMismatch(
            f"{pair_id}: {source_path} has {len(src)} lines, {target_path} has {len(tgt)}"
        )
    return ParallelCorpus(pair_id, tuple(src), tuple(tgt))


def save_parallel(corpus: ParallelCorpus, source_path, target_path) -> None:
    """Write the corpus back out in the same one-sentence-per-line format."""
    for path, lines in ((source_path, corpus.source), (target_path, corpus.target)):
        data = "".join(s + "\n" for s in lines)
        Path(path).write_bytes(data.encode("utf-8"))


def make_track_one(
    train: ParallelCorpus,
    dev: ParallelCorpus,
    fraction: float = 0.9,
    seed: int = 0,
) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Fold floor(fraction * len(dev)) dev pairs into train.

    The moved pairs are chosen by a seeded uniform shuffle; both outputs keep
    the original corpus order. fraction 0 and 1 are degenerate but legal.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    k = int(fraction * len(dev))
    indices = list(range(len(dev)))
    random.Random(seed).shuffle(indices)
    moved = sorted(indices[:k])
    kept = sorted(indices[k:])
    return train.concat(dev.subset(moved)), dev.subset(kept)


def make_track_two(
    train: ParallelCorpus, dev: ParallelCorpus
) -> tuple[ParallelCorpus, ParallelCorpus]:
    """Identity pass-through: train keeps no dev data."""
    return train, dev
