"""Synthetic character-substitution translation tasks.

Source sentences are random words over a small alphabet; the target side
applies a fixed character permutation. Two tasks sharing the script but using
different permutations give a controlled parent/child pair: the copy-like
structure transfers while the output mapping must be relearned.
"""

from __future__ import annotations

import random

from .corpus import ParallelCorpus

ALPHABET = "abcdefghijkl"


def permutation_mapping(seed: int, alphabet: str = ALPHABET) -> dict[str, str]:
    """A seeded random permutation of the alphabet."""
    shuffled = list(alphabet)
    random.Random(seed).shuffle(shuffled)
    return dict(zip(alphabet, shuffled))


def apply_mapping(sentence: str, mapping: dict[str, str]) -> str:
    return "".join(mapping.get(c, c) for c in sentence)


def cipher_corpus(
    pair_id: str,
    size: int,
    seed: int,
    mapping: dict[str, str],
    alphabet: str = ALPHABET,
    words_per_sentence: tuple[int, int] = (2, 4),
    word_length: tuple[int, int] = (3, 6),
) -> ParallelCorpus:
    """Random sentences with their character-mapped translations."""
    rng = random.Random(seed)
    source = []
    for _ in range(size):
        n_words = rng.randint(*words_per_sentence)
        words = [
            "".join(rng.choice(alphabet) for _ in range(rng.randint(*word_length)))
            for _ in range(n_words)
        ]
        source.append(" ".join(words))
    target = [apply_mapping(s, mapping) for s in source]
    return ParallelCorpus(pair_id, tuple(source), tuple(target))
