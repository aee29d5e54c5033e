"""Training regimes: parent training, direct fine-tuning, and the two-stage
curriculum schedule, with periodic dev validation and lowest-dev-loss
checkpoint selection.

A step is one optimizer update on one batch. Fine-tuning starts from the
parent's parameters with a fresh optimizer state; the tokenizer must be the
parent's own vocabulary (fingerprint-checked), which is what makes the
transfer "direct".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nm
from .corpus import ParallelCorpus
from .errors import DivergedLoss, EmptyCorpus, VocabMismatch
from .model import ModelConfig, TranslationModel, forward_loss, parameter_shapes
from .subword import BOS, EOS, PAD, SubwordVocabulary, encode

CKPT_HEADER = "mtlab-ckpt v1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.98
ADAM_EPS = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int = 2000
    validate_every: int = 100
    batch_size: int = 15
    learning_rate: float = 5e-4
    warmup_steps: int = 400
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if min(self.validate_every, self.batch_size, self.warmup_steps) < 1:
            raise ValueError("validate_every, batch_size and warmup_steps must be positive")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if self.max_steps > 0 and self.validate_every > self.max_steps:
            raise ValueError("validate_every must not exceed max_steps")


@dataclass(frozen=True)
class CurriculumStage:
    config: TrainConfig
    train: ParallelCorpus
    dev: ParallelCorpus


@dataclass(frozen=True)
class CurriculumConfig:
    stage1: CurriculumStage  # easier intermediate pair first
    stage2: CurriculumStage  # the hard child pair


@dataclass(frozen=True)
class LogRecord:
    stage: str
    step: int
    train_loss: float
    dev_loss: float


@dataclass
class TrainLog:
    records: list[LogRecord] = field(default_factory=list)
    selected_step: int = 0
    selected_stage: str = "train"

    def to_tsv(self) -> str:
        return "".join(
            f"{r.stage}\t{r.step}\t{float(r.train_loss)!r}\t{float(r.dev_loss)!r}\n"
            for r in self.records
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_tsv().encode("utf-8"))

    def stage_records(self, stage: str) -> list[LogRecord]:
        return [r for r in self.records if r.stage == stage]


def select_best(records: list[LogRecord]) -> LogRecord:
    """The record with minimal dev loss; the earliest step wins ties."""
    if not records:
        raise ValueError("no validation records to select from")
    best = records[0]
    for r in records[1:]:
        if r.dev_loss < best.dev_loss:
            best = r
    return best


@dataclass(frozen=True)
class Checkpoint:
    step: int
    dev_loss: float
    parameters: dict[str, np.ndarray]
    config: ModelConfig
    vocab_fingerprint: str

    def to_model(self, dtype=np.float32) -> TranslationModel:
        params = {n: nm.parameter(a.copy(), dtype=dtype) for n, a in self.parameters.items()}
        return TranslationModel(self.config, params)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        cfg = self.config
        lines = [CKPT_HEADER]
        lines += [
            f"vocab_size={cfg.vocab_size}",
            f"layers={cfg.layers}",
            f"heads={cfg.heads}",
            f"d_model={cfg.d_model}",
            f"d_ff={cfg.d_ff}",
            f"max_len={cfg.max_len}",
            f"dropout={cfg.dropout!r}",
            f"label_smoothing={cfg.label_smoothing!r}",
            f"seed={cfg.seed}",
            f"step={self.step}",
            f"dev_loss={float(self.dev_loss)!r}",
            f"vocab_fingerprint={self.vocab_fingerprint}",
            f"params={len(self.parameters)}",
        ]
        blobs = []
        for name, arr in self.parameters.items():
            shape = ",".join(str(d) for d in arr.shape)
            lines.append(f"{name}\t{shape}")
            blobs.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        lines.append("#blob")
        return "\n".join(lines).encode("utf-8") + b"\n" + b"".join(blobs)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        head, _, blob = data.partition(b"#blob\n")
        lines = head.decode("utf-8").split("\n")
        if lines[0] != CKPT_HEADER:
            raise ValueError(f"bad checkpoint header: {lines[0]!r}")
        kv = {}
        i = 1
        while "=" in lines[i]:
            key, _, value = lines[i].partition("=")
            kv[key] = value
            i += 1
        config = ModelConfig(
            vocab_size=int(kv["vocab_size"]),
            layers=int(kv["layers"]),
            heads=int(kv["heads"]),
            d_model=int(kv["d_model"]),
            d_ff=int(kv["d_ff"]),
            max_len=int(kv["max_len"]),
            dropout=float(kv["dropout"]),
            label_smoothing=float(kv["label_smoothing"]),
            seed=int(kv["seed"]),
        )
        n_params = int(kv["params"])
        index = []
        for line in lines[i : i + n_params]:
            name, _, shape_str = line.partition("\t")
            shape = tuple(int(d) for d in shape_str.split(",")) if shape_str else ()
            index.append((name, shape))
        expected = parameter_shapes(config)
        params: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in index:
            if expected.get(name) != shape:
                raise ValueError(f"unexpected parameter {name} with shape {shape}")
            size = int(np.prod(shape)) * 4
            params[name] = np.frombuffer(blob[offset : offset + size], dtype="<f4").reshape(shape).copy()
            offset += size
        if offset != len(blob) or len(params) != len(expected):
            raise ValueError("checkpoint blob size does not match its index")
        return cls(int(kv["step"]), float(kv["dev_loss"]), params, config, kv["vocab_fingerprint"])

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())


# ------------------------------------------------------------------ batching


def encode_pairs(corpus: ParallelCorpus, vocab: SubwordVocabulary):
    """Tokenize a corpus: plain source ids, targets wrapped in BOS ... EOS."""
    pairs = []
    for s, t in zip(corpus.source, corpus.target):
        src = np.array(encode(vocab, s).ids, dtype=np.int64)
        tgt = np.array([BOS] + list(encode(vocab, t).ids) + [EOS], dtype=np.int64)
        pairs.append((src, tgt))
    return pairs


def pad_batch(items) -> tuple[np.ndarray, np.ndarray]:
    src_len = max(1, max(len(s) for s, _ in items))
    tgt_len = max(2, max(len(t) for _, t in items))
    src = np.full((len(items), src_len), PAD, dtype=np.int64)
    tgt = np.full((len(items), tgt_len), PAD, dtype=np.int64)
    for i, (s, t) in enumerate(items):
        src[i, : len(s)] = s
        tgt[i, : len(t)] = t
    return src, tgt


class _BatchSampler:
    """Seeded shuffled batching; epochs wrap around with a reshuffle so every
    batch has exactly batch_size sentences."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self.order: list[int] = []
        self.pos = 0

    def next_indices(self) -> list[int]:
        out: list[int] = []
        while len(out) < self.batch_size:
            if self.pos >= len(self.order):
                perm = np.arange(self.n)
                self.rng.shuffle(perm)
                self.order = [int(i) for i in perm]
                self.pos = 0
            out.append(self.order[self.pos])
            self.pos += 1
        return out


# ----------------------------------------------------------------- optimizer


class Adam:
    """Adaptive-moment optimizer with bias correction and inverse-sqrt schedule."""

    def __init__(self, params: dict[str, nm.Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def learning_rate(self, step: int) -> float:
        w = self.cfg.warmup_steps
        return self.cfg.learning_rate * min(step / w, math.sqrt(w / step))

    def step(self) -> None:
        self.t += 1
        lr = self.learning_rate(self.t)
        c1 = 1.0 - ADAM_BETA1**self.t
        c2 = 1.0 - ADAM_BETA2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def clip_gradients(params: dict[str, nm.Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the post-clip norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.square(p.grad.astype(np.float64)).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
        return max_norm
    return norm


# ------------------------------------------------------------------ training


def evaluate_dev(model: TranslationModel, dev_batches) -> float:
    """Mean token-level cross-entropy over the full dev set (dropout off)."""
    total_loss = 0.0
    total_tokens = 0
    for src, tgt in dev_batches:
        n_tokens = int((tgt[:, 1:] != PAD).sum())
        loss = forward_loss(model, src, tgt, train=False)
        total_loss += float(loss.data) * n_tokens
        total_tokens += n_tokens
    return total_loss / total_tokens


def _dev_batches(corpus: ParallelCorpus, vocab: SubwordVocabulary, batch_size: int):
    pairs = encode_pairs(corpus, vocab)
    return [pad_batch(pairs[i : i + batch_size]) for i in range(0, len(pairs), batch_size)]


def _snapshot(model: TranslationModel) -> dict[str, np.ndarray]:
    return {n: np.asarray(p.data, dtype=np.float32).copy() for n, p in model.params.items()}


def _run(
    model: TranslationModel,
    train_corpus: ParallelCorpus,
    dev_corpus: ParallelCorpus,
    vocab: SubwordVocabulary,
    cfg: TrainConfig,
    stage: str,
) -> tuple[Checkpoint, TrainLog]:
    if len(train_corpus) == 0 or len(dev_corpus) == 0:
        raise EmptyCorpus(f"{stage}: train and dev corpora must be non-empty")
    fingerprint = vocab.fingerprint()
    dev_batches = _dev_batches(dev_corpus, vocab, cfg.batch_size)
    log = TrainLog(records=[], selected_step=0, selected_stage=stage)

    if cfg.max_steps == 0:
        dev_loss = evaluate_dev(model, dev_batches)
        log.records.append(LogRecord(stage, 0, float("nan"), dev_loss))
        ckpt = Checkpoint(0, dev_loss, _snapshot(model), model.config, fingerprint)
        return ckpt, log

    train_pairs = encode_pairs(train_corpus, vocab)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    sampler = _BatchSampler(len(train_pairs), cfg.batch_size, rng)
    optimizer = Adam(model.params, cfg)

    best_params: dict[str, np.ndarray] | None = None
    best_loss = math.inf
    best_step = 0
    window_losses: list[float] = []

    for step in range(1, cfg.max_steps + 1):
        batch = pad_batch([train_pairs[i] for i in sampler.next_indices()])
        for p in model.params.values():
            p.zero_grad()
        with nm.Tape():
            loss = forward_loss(model, batch[0], batch[1], train=True, rng=rng)
            train_loss = float(loss.data)
            if not math.isfinite(train_loss):
                raise DivergedLoss(f"{stage}: non-finite training loss at step {step}")
            nm.backward(loss)
        clip_gradients(model.params, cfg.grad_clip)
        optimizer.step()
        window_losses.append(train_loss)

        if step % cfg.validate_every == 0:
            dev_loss = evaluate_dev(model, dev_batches)
            if not math.isfinite(dev_loss):
                raise DivergedLoss(f"{stage}: non-finite dev loss at step {step}")
            log.records.append(
                LogRecord(stage, step, sum(window_losses) / len(window_losses), dev_loss)
            )
            window_losses = []
            if dev_loss < best_loss:
                best_loss = dev_loss
                best_step = step
                best_params = _snapshot(model)

    assert best_params is not None
    log.selected_step = best_step
    ckpt = Checkpoint(best_step, best_loss, best_params, model.config, fingerprint)
    return ckpt, log


def train(
    model: TranslationModel,
    train_corpus: ParallelCorpus,
    dev_corpus: ParallelCorpus,
    vocab: SubwordVocabulary,
    cfg: TrainConfig,
) -> tuple[Checkpoint, TrainLog]:
    """Train from the model's current parameters; returns the lowest-dev-loss
    checkpoint and the validation log. The model is updated in place."""
    return _run(model, train_corpus, dev_corpus, vocab, cfg, stage="train")


def finetune(
    parent: Checkpoint,
    child_train: ParallelCorpus,
    child_dev: ParallelCorpus,
    vocab: SubwordVocabulary,
    cfg: TrainConfig,
    stage: str = "finetune",
) -> tuple[Checkpoint, TrainLog]:
    """Continue from the parent's parameters on a child pair, tokenized with
    the parent's own vocabulary. Optimizer state starts fresh."""
    if vocab.fingerprint() != parent.vocab_fingerprint:
        raise VocabMismatch("vocabulary differs from the one the parent was trained with")
    model = parent.to_model()
    return _run(model, child_train, child_dev, vocab, cfg, stage=stage)


def curriculum_finetune(
    parent: Checkpoint, cc: CurriculumConfig, vocab: SubwordVocabulary
) -> tuple[Checkpoint, TrainLog]:
    """Two-stage schedule: fine-tune on the easier intermediate pair, take the
    lowest-dev-loss checkpoint, then fine-tune that on the child pair."""
    ckpt1, log1 = finetune(parent, cc.stage1.train, cc.stage1.dev, vocab, cc.stage1.config, stage="stage1")
    ckpt2, log2 = finetune(ckpt1, cc.stage2.train, cc.stage2.dev, vocab, cc.stage2.config, stage="stage2")
    log = TrainLog(
        records=log1.records + log2.records,
        selected_step=log2.selected_step,
        selected_stage="stage2",
    )
    return ckpt2, log
