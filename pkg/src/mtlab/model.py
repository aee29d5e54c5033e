"""A compact encoder-decoder transformer with teacher-forced training loss.

Post-norm residual blocks, sinusoidal positions, tied input/output embeddings.
The desk-scale default (2 layers, 4 heads, d_model 128) trains in minutes on
one CPU core; larger shapes are plain config changes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .errors import EmptyBatch, IdOutOfRange, InvalidConfig, SequenceTooLong
from .subword import BOS, PAD

NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    d_model: int = 128
    d_ff: int = 256
    max_len: int = 64
    dropout: float = 0.1
    label_smoothing: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 5:
            raise InvalidConfig(f"vocab_size must be >= 5, got {self.vocab_size}")
        if min(self.layers, self.heads, self.d_model, self.d_ff, self.max_len) < 1:
            raise InvalidConfig("layers, heads, d_model, d_ff and max_len must be positive")
        if self.d_model % self.heads != 0:
            raise InvalidConfig(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise InvalidConfig(f"label_smoothing must be in [0, 1), got {self.label_smoothing}")


class TranslationModel:
    """Config plus a named parameter map; mutable only by its training thread."""

    def __init__(self, config: ModelConfig, params: dict[str, nm.Tensor]):
        self.config = config
        self.params = params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def assert_finite(self) -> None:
        for name, p in self.params.items():
            if not np.isfinite(p.data).all():
                raise FloatingPointError(f"non-finite values in parameter {name}")


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Deterministic name -> shape map; also fixes the checkpoint blob order."""
    d, f = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {"embed": (config.vocab_size, d)}
    for i in range(config.layers):
        for sub in (f"enc.{i}.attn",):
            for w in ("wq", "wk", "wv", "wo"):
                shapes[f"{sub}.{w}"] = (d, d)
            for b in ("bq", "bk", "bv", "bo"):
                shapes[f"{sub}.{b}"] = (d,)
        shapes[f"enc.{i}.ln1.gain"] = (d,)
        shapes[f"enc.{i}.ln1.bias"] = (d,)
        shapes[f"enc.{i}.ffn.w1"] = (d, f)
        shapes[f"enc.{i}.ffn.b1"] = (f,)
        shapes[f"enc.{i}.ffn.w2"] = (f, d)
        shapes[f"enc.{i}.ffn.b2"] = (d,)
        shapes[f"enc.{i}.ln2.gain"] = (d,)
        shapes[f"enc.{i}.ln2.bias"] = (d,)
    for i in range(config.layers):
        for sub in (f"dec.{i}.self", f"dec.{i}.cross"):
            for w in ("wq", "wk", "wv", "wo"):
                shapes[f"{sub}.{w}"] = (d, d)
            for b in ("bq", "bk", "bv", "bo"):
                shapes[f"{sub}.{b}"] = (d,)
        shapes[f"dec.{i}.ln1.gain"] = (d,)
        shapes[f"dec.{i}.ln1.bias"] = (d,)
        shapes[f"dec.{i}.ln2.gain"] = (d,)
        shapes[f"dec.{i}.ln2.bias"] = (d,)
        shapes[f"dec.{i}.ffn.w1"] = (d, f)
        shapes[f"dec.{i}.ffn.b1"] = (f,)
        shapes[f"dec.{i}.ffn.w2"] = (f, d)
        shapes[f"dec.{i}.ffn.b2"] = (d,)
        shapes[f"dec.{i}.ln3.gain"] = (d,)
        shapes[f"dec.{i}.ln3.bias"] = (d,)
    return shapes


def init_model(config: ModelConfig, dtype=np.float32) -> TranslationModel:
    """Seeded Xavier-uniform weights; layer-norm gains 1, all biases 0."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params: dict[str, nm.Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if len(shape) == 2:
            fan_in, fan_out = shape
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        elif name.endswith(".gain"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        params[name] = nm.parameter(data, dtype=dtype)
    return TranslationModel(config, params)


@functools.lru_cache(maxsize=8)
def _position_table(length: int, d_model: int, dtype_name: str) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, i / d_model)
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return table.astype(dtype_name)


def _check_ids(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise IdOutOfRange(f"token ids must lie in [0, {vocab_size})")
    return ids


def _linear(x: nm.Tensor, w: nm.Tensor, b: nm.Tensor) -> nm.Tensor:
    return nm.add(nm.matmul(x, w), b)


def _affine_norm(x: nm.Tensor, gain: nm.Tensor, bias: nm.Tensor) -> nm.Tensor:
    return nm.add(nm.mul(nm.layer_norm(x), gain), bias)


def _maybe_dropout(x: nm.Tensor, model: TranslationModel, train: bool, rng) -> nm.Tensor:
    if train and model.config.dropout > 0.0:
        if rng is None:
            raise ValueError("training forward pass needs an rng for dropout")
        return nm.dropout(x, model.config.dropout, rng)
    return x


def _split_heads(x: nm.Tensor, b: int, t: int, heads: int) -> nm.Tensor:
    dh = x.shape[-1] // heads
    return nm.transpose(nm.reshape(x, (b, t, heads, dh)), (0, 2, 1, 3))


def _attention(model, prefix, x_q, x_kv, mask, train, rng) -> nm.Tensor:
    p = model.params
    heads = model.config.heads
    d = model.config.d_model
    b, tq, _ = x_q.shape
    tk = x_kv.shape[1]
    q2, kv2 = nm.reshape(x_q, (b * tq, d)), nm.reshape(x_kv, (b * tk, d))
    q = _split_heads(nm.reshape(_linear(q2, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), (b, tq, d)), b, tq, heads)
    k = _split_heads(nm.reshape(_linear(kv2, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), (b, tk, d)), b, tk, heads)
    v = _split_heads(nm.reshape(_linear(kv2, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), (b, tk, d)), b, tk, heads)
    scores = nm.scale(nm.matmul(q, nm.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d // heads))
    if mask is not None:
        scores = nm.add(scores, mask)
    ctx = nm.matmul(nm.softmax(scores), v)
    ctx = nm.reshape(nm.transpose(ctx, (0, 2, 1, 3)), (b * tq, d))
    out = _linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"])
    return nm.reshape(out, (b, tq, d))


def _ffn(model, prefix, x) -> nm.Tensor:
    p = model.params
    b, t, d = x.shape
    h = nm.relu(_linear(nm.reshape(x, (b * t, d)), p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    return nm.reshape(_linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"]), (b, t, d))


def _sublayer(model, x, out, ln_prefix, train, rng) -> nm.Tensor:
    p = model.params
    residual = nm.add(x, _maybe_dropout(out, model, train, rng))
    return _affine_norm(residual, p[f"{ln_prefix}.gain"], p[f"{ln_prefix}.bias"])


def _embed(model: TranslationModel, ids: np.ndarray, train: bool, rng) -> nm.Tensor:
    cfg = model.config
    t = ids.shape[1]
    if t > cfg.max_len:
        raise SequenceTooLong(f"sequence length {t} exceeds max_len {cfg.max_len}")
    dtype = model.params["embed"].dtype
    emb = nm.scale(nm.embedding_lookup(model.params["embed"], ids), math.sqrt(cfg.d_model))
    pos = nm.Tensor(_position_table(cfg.max_len, cfg.d_model, dtype.name)[:t])
    return _maybe_dropout(nm.add(emb, pos), model, train, rng)


def _source_mask(src_ids: np.ndarray, dtype) -> nm.Tensor:
    # (B, 1, 1, S): PAD keys excluded from every attention row
    m = np.where(src_ids == PAD, NEG_INF, 0.0).astype(dtype)
    return nm.Tensor(m[:, None, None, :])


def _causal_mask(t: int, dtype) -> nm.Tensor:
    m = np.triu(np.full((t, t), NEG_INF), k=1).astype(dtype)
    return nm.Tensor(m[None, None, :, :])


def encode_source(model: TranslationModel, src_ids: np.ndarray, train: bool = False, rng=None):
    """Run the encoder stack; returns (memory, source attention mask)."""
    src_ids = _check_ids(src_ids, model.config.vocab_size)
    if src_ids.ndim != 2 or src_ids.shape[0] == 0:
        raise EmptyBatch("source batch must be 2-d and non-empty")
    dtype = model.params["embed"].dtype
    mask = _source_mask(src_ids, dtype)
    x = _embed(model, src_ids, train, rng)
    for i in range(model.config.layers):
        attn = _attention(model, f"enc.{i}.attn", x, x, mask, train, rng)
        x = _sublayer(model, x, attn, f"enc.{i}.ln1", train, rng)
        x = _sublayer(model, x, _ffn(model, f"enc.{i}.ffn", x), f"enc.{i}.ln2", train, rng)
    return x, mask


def decoder_logits(
    model: TranslationModel,
    memory: nm.Tensor,
    src_mask: nm.Tensor,
    tgt_in: np.ndarray,
    train: bool = False,
    rng=None,
) -> nm.Tensor:
    """Teacher-forced logits (B, T, vocab) for a decoder input batch."""
    cfg = model.config
    tgt_in = _check_ids(tgt_in, cfg.vocab_size)
    b, t = tgt_in.shape
    dtype = model.params["embed"].dtype
    causal = _causal_mask(t, dtype)
    x = _embed(model, tgt_in, train, rng)
    for i in range(cfg.layers):
        self_attn = _attention(model, f"dec.{i}.self", x, x, causal, train, rng)
        x = _sublayer(model, x, self_attn, f"dec.{i}.ln1", train, rng)
        cross = _attention(model, f"dec.{i}.cross", x, memory, src_mask, train, rng)
        x = _sublayer(model, x, cross, f"dec.{i}.ln2", train, rng)
        x = _sublayer(model, x, _ffn(model, f"dec.{i}.ffn", x), f"dec.{i}.ln3", train, rng)
    flat = nm.reshape(x, (b * t, cfg.d_model))
    logits = nm.matmul(flat, nm.transpose(model.params["embed"], (1, 0)))
    return nm.reshape(logits, (b, t, cfg.vocab_size))


def forward_loss(
    model: TranslationModel,
    src_ids: np.ndarray,
    tgt_ids: np.ndarray,
    train: bool = False,
    rng=None,
) -> nm.Tensor:
    """Teacher-forced cross-entropy over next-token predictions, PAD ignored.

    Label smoothing (from the model config) applies only when train=True, so
    validation losses stay interpretable as perplexities.
    """
    cfg = model.config
    tgt_ids = _check_ids(tgt_ids, cfg.vocab_size)
    if tgt_ids.ndim != 2 or tgt_ids.shape[0] == 0 or tgt_ids.shape[1] < 2:
        raise EmptyBatch("target batch needs at least BOS plus one token per row")
    labels = tgt_ids[:, 1:]
    if (labels == PAD).all():
        raise EmptyBatch("all target positions are PAD")
    memory, src_mask = encode_source(model, src_ids, train, rng)
    logits = decoder_logits(model, memory, src_mask, tgt_ids[:, :-1], train, rng)
    b, t, v = logits.shape
    smoothing = cfg.label_smoothing if train else 0.0
    return nm.cross_entropy(
        nm.reshape(logits, (b * t, v)), labels.reshape(-1), ignore_id=PAD, label_smoothing=smoothing
    )


def _log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def decode_step(
    model: TranslationModel, memory: nm.Tensor, src_mask: nm.Tensor, prefixes: np.ndarray
) -> np.ndarray:
    """Next-token log-probabilities (N, vocab) for a batch of target prefixes."""
    logits = decoder_logits(model, memory, src_mask, prefixes)
    return _log_softmax(logits.data[:, -1, :])


def logits_step(model: TranslationModel, src_ids, prefix_ids) -> np.ndarray:
    """Log-probability distribution over the vocabulary for the next token."""
    prefix = np.asarray(prefix_ids, dtype=np.int64)
    if prefix.ndim != 1 or prefix.size == 0 or prefix[0] != BOS:
        raise ValueError("prefix must be a 1-d id sequence starting with BOS")
    src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
    memory, src_mask = encode_source(model, src)
    if memory.shape[0] == 0:
        raise EmptyBatch("empty source")
    return decode_step(model, memory, src_mask, prefix.reshape(1, -1))[0]
