"""Beam-search translation over a frozen checkpoint."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import VocabMismatch
from .model import TranslationModel, decode_step, encode_source
from .subword import BOS, EOS, PAD, SubwordVocabulary, decode, encode
from .training import Checkpoint


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 6
    max_len: int = 64
    length_norm_alpha: float = 0.0

    def __post_init__(self):
        if self.beam_size < 1 or self.max_len < 1:
            raise ValueError("beam_size and max_len must be >= 1")
        if not 0.0 <= self.length_norm_alpha <= 1.0:
            raise ValueError("length_norm_alpha must be in [0, 1]")


def _normalized(score: float, ids: tuple[int, ...], alpha: float) -> float:
    # generated length excludes the BOS seed
    return score / (len(ids) - 1) ** alpha if alpha else score


def _repeat_rows(t: nm.Tensor, n: int) -> nm.Tensor:
    return t if n == 1 and t.shape[0] == 1 else nm.Tensor(np.repeat(t.data, n, axis=0))


def search_ids(model: TranslationModel, src_ids: np.ndarray, cfg: BeamConfig):
    """Beam search over token ids; returns (ids without BOS, selection score).

    Hypotheses that emit EOS are frozen and compared at the end against any
    beams still active when the length cap is hit. Exact score ties break
    toward the lexicographically smaller id sequence.
    """
    memory, src_mask = encode_source(model, np.asarray(src_ids, dtype=np.int64).reshape(1, -1))
    cap = min(cfg.max_len, model.config.max_len - 1)
    active: list[tuple[tuple[int, ...], float]] = [((BOS,), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []

    for _ in range(cap):
        if not active:
            break
        prefixes = np.array([ids for ids, _ in active], dtype=np.int64)
        logps = decode_step(
            model, _repeat_rows(memory, len(active)), _repeat_rows(src_mask, len(active)), prefixes
        )
        logps[:, PAD] = -math.inf
        logps[:, BOS] = -math.inf
        candidates = [
            (ids + (tok,), score + float(logps[i, tok]))
            for i, (ids, score) in enumerate(active)
            for tok in range(logps.shape[1])
            if logps[i, tok] > -math.inf
        ]
        candidates.sort(key=lambda c: (-c[1], c[0]))
        top = candidates[: cfg.beam_size]
        active = []
        for ids, score in top:
            if ids[-1] == EOS:
                finished.append((ids, score))
            else:
                active.append((ids, score))

    finished.extend(active)  # beams cut off at the cap compete as-is
    alpha = cfg.length_norm_alpha
    best_ids, best_score = min(finished, key=lambda c: (-_normalized(c[1], c[0], alpha), c[0]))
    return best_ids[1:], _normalized(best_score, best_ids, alpha)


def beam_search(
    checkpoint: Checkpoint, source: str, vocab: SubwordVocabulary, cfg: BeamConfig
) -> tuple[str, float]:
    """Translate one sentence; returns (text, selection score)."""
    _check_vocab(checkpoint, vocab)
    model = checkpoint.to_model()
    ids, score = search_ids(model, np.array(encode(vocab, source).ids, dtype=np.int64), cfg)
    return decode(vocab, list(ids)), score


def translate_corpus(
    checkpoint: Checkpoint, sentences, vocab: SubwordVocabulary, cfg: BeamConfig
) -> list[str]:
    """Translate sentences in order; equivalent to per-sentence beam_search."""
    _check_vocab(checkpoint, vocab)
    model = checkpoint.to_model()
    out = []
    for sentence in sentences:
        ids, _ = search_ids(model, np.array(encode(vocab, sentence).ids, dtype=np.int64), cfg)
        out.append(decode(vocab, list(ids)))
    return out


def _check_vocab(checkpoint: Checkpoint, vocab: SubwordVocabulary) -> None:
    if vocab.fingerprint() != checkpoint.vocab_fingerprint:
        raise VocabMismatch("checkpoint was trained with a different vocabulary")
