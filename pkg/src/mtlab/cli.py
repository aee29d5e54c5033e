"""Command-line interface exposing the full pipeline as subcommands.

Corpus directories hold two aligned files named `src` and `tgt`, one sentence
per line; `split` produces a directory with `train/` and `dev/` subdirectories
in that layout. Run directories are append-only: manifest, vocabulary copy,
checkpoint and training log.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import numerics as nm
from .analysis import length_stats, variant_count
from .corpus import load_parallel, make_track_one, make_track_two, save_parallel
from .decoding import BeamConfig, translate_corpus
from .errors import MtlabError
from .metrics import evaluate_corpus
from .model import ModelConfig, init_model
from .subword import SubwordVocabulary, encode, tokenization_stats, train_vocab
from .training import Checkpoint, CurriculumConfig, CurriculumStage, TrainConfig, curriculum_finetune, finetune, train


class UsageError(Exception):
    pass


MODEL_KEYS = {
    "layers": int,
    "heads": int,
    "d_model": int,
    "d_ff": int,
    "max_len": int,
    "dropout": float,
    "label_smoothing": float,
}
TRAIN_KEYS = {
    "max_steps": int,
    "validate_every": int,
    "batch_size": int,
    "learning_rate": float,
    "warmup_steps": int,
    "grad_clip": float,
    "seed": int,
}


def parse_config_file(path) -> dict:
    """`key = value` lines; blank lines and # comments ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        caster = MODEL_KEYS.get(key) or TRAIN_KEYS.get(key)
        if caster is None:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = caster(value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def resolve_configs(args, vocab_size: int) -> tuple[ModelConfig, TrainConfig]:
    values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for flag in ("seed", "max_steps", "validate_every", "batch_size"):
        if getattr(args, flag, None) is not None:
            values[flag] = getattr(args, flag)
    model_kwargs = {k: v for k, v in values.items() if k in MODEL_KEYS}
    train_kwargs = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    model_kwargs["seed"] = train_kwargs.get("seed", 0)
    try:
        return ModelConfig(vocab_size=vocab_size, **model_kwargs), TrainConfig(**train_kwargs)
    except (ValueError, MtlabError) as e:
        raise UsageError(str(e)) from None


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(run_dir: Path, subcommand: str, resolved: dict, inputs: list) -> None:
    lines = [
        f"mtlab-manifest v1",
        f"version={__version__}",
        f"subcommand={subcommand}",
        f"run_dir={run_dir}",
    ]
    lines += [f"config.{k}={v}" for k, v in sorted(resolved.items())]
    lines += [f"input.{Path(p)}={_sha256(p)}" for p in inputs]
    (run_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prepare_run_dir(out) -> Path:
    run_dir = Path(out)
    if run_dir.exists() and any(run_dir.iterdir()):
        raise UsageError(f"run directory {run_dir} already exists and is not empty")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _load_corpus_dir(path, pair_id: str):
    d = Path(path)
    return load_parallel(d / "src", d / "tgt", pair_id)


def _resolved_dict(model_cfg: ModelConfig, train_cfg: TrainConfig) -> dict:
    out = dataclasses.asdict(train_cfg)
    out.update(dataclasses.asdict(model_cfg))
    return out


def _finish_run(run_dir: Path, vocab: SubwordVocabulary, ckpt, log) -> None:
    vocab.save(run_dir / "vocab.txt")
    ckpt.save(run_dir / "model.ckpt")
    log.save(run_dir / "train.log")
    print(f"selected_step\t{ckpt.step}")
    print(f"selected_dev_loss\t{ckpt.dev_loss!r}")
    print(f"checkpoint\t{run_dir / 'model.ckpt'}")


def _vocab_for_parent(args) -> SubwordVocabulary:
    if getattr(args, "vocab", None):
        return SubwordVocabulary.load(args.vocab)
    sibling = Path(args.parent).parent / "vocab.txt"
    if sibling.exists():
        return SubwordVocabulary.load(sibling)
    raise UsageError("no --vocab given and no vocab.txt next to the parent checkpoint")


# --------------------------------------------------------------- subcommands


def cmd_vocab_train(args) -> int:
    corpus = load_parallel(args.src, args.tgt, args.pair)
    vocab = train_vocab(corpus, args.size)
    vocab.save(args.out)
    print(f"pieces\t{len(vocab)}")
    print(f"merges\t{len(vocab.merges)}")
    print(f"fingerprint\t{vocab.fingerprint()}")
    return 0


def cmd_tokenize(args) -> int:
    vocab = SubwordVocabulary.load(args.vocab)
    with open(args.infile, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    out = "".join(" ".join(encode(vocab, line).pieces) + "\n" for line in lines)
    Path(args.out).write_text(out, encoding="utf-8")
    return 0


def cmd_stats(args) -> int:
    vocab = SubwordVocabulary.load(args.vocab)
    corpus = load_parallel(args.src, args.tgt, args.pair)
    stats = tokenization_stats(corpus, vocab)
    print(f"source_avg_sentence_length\t{stats.avg_sentence_length_source:.2f}")
    print(f"target_avg_sentence_length\t{stats.avg_sentence_length_target:.2f}")
    print(f"source_avg_token_length\t{stats.avg_token_length_source:.2f}")
    print(f"target_avg_token_length\t{stats.avg_token_length_target:.2f}")
    print(f"sentences\t{stats.sentences}")
    return 0


def cmd_split(args) -> int:
    train_c = load_parallel(args.train_src, args.train_tgt, args.pair)
    dev_c = load_parallel(args.dev_src, args.dev_tgt, args.pair)
    if args.track == "one":
        train_out, dev_out = make_track_one(train_c, dev_c, args.fraction, args.seed)
    else:
        train_out, dev_out = make_track_two(train_c, dev_c)
    out = Path(args.out)
    for name, corpus in (("train", train_out), ("dev", dev_out)):
        (out / name).mkdir(parents=True, exist_ok=True)
        save_parallel(corpus, out / name / "src", out / name / "tgt")
    print(f"train_pairs\t{len(train_out)}")
    print(f"dev_pairs\t{len(dev_out)}")
    return 0


def cmd_train(args) -> int:
    vocab = SubwordVocabulary.load(args.vocab)
    model_cfg, train_cfg = resolve_configs(args, vocab_size=len(vocab))
    train_c = _load_corpus_dir(args.train, args.pair)
    dev_c = _load_corpus_dir(args.dev, args.pair)
    run_dir = _prepare_run_dir(args.out)
    inputs = [args.vocab, Path(args.train) / "src", Path(args.train) / "tgt",
              Path(args.dev) / "src", Path(args.dev) / "tgt"]
    write_manifest(run_dir, "train", _resolved_dict(model_cfg, train_cfg), inputs)
    model = init_model(model_cfg)
    ckpt, log = train(model, train_c, dev_c, vocab, train_cfg)
    _finish_run(run_dir, vocab, ckpt, log)
    return 0


def cmd_finetune(args) -> int:
    vocab = _vocab_for_parent(args)
    parent = Checkpoint.load(args.parent)
    _, train_cfg = resolve_configs(args, vocab_size=len(vocab))
    train_c = _load_corpus_dir(args.train, args.pair)
    dev_c = _load_corpus_dir(args.dev, args.pair)
    run_dir = _prepare_run_dir(args.out)
    inputs = [args.parent, Path(args.train) / "src", Path(args.train) / "tgt",
              Path(args.dev) / "src", Path(args.dev) / "tgt"]
    write_manifest(run_dir, "finetune", _resolved_dict(parent.config, train_cfg), inputs)
    ckpt, log = finetune(parent, train_c, dev_c, vocab, train_cfg)
    _finish_run(run_dir, vocab, ckpt, log)
    return 0


def cmd_curriculum(args) -> int:
    vocab = _vocab_for_parent(args)
    parent = Checkpoint.load(args.parent)
    _, stage2_cfg = resolve_configs(args, vocab_size=len(vocab))
    try:
        stage1_cfg = dataclasses.replace(
            stage2_cfg, max_steps=args.stage1_steps, validate_every=args.stage1_validate
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    stages = []
    for name, cfg in (("stage1", stage1_cfg), ("stage2", stage2_cfg)):
        d = Path(getattr(args, name))
        stages.append(
            CurriculumStage(cfg, _load_corpus_dir(d / "train", args.pair), _load_corpus_dir(d / "dev", args.pair))
        )
    run_dir = _prepare_run_dir(args.out)
    inputs = [args.parent]
    for d in (args.stage1, args.stage2):
        inputs += [Path(d) / s / f for s in ("train", "dev") for f in ("src", "tgt")]
    resolved = _resolved_dict(parent.config, stage2_cfg)
    resolved.update({"stage1_steps": args.stage1_steps, "stage1_validate": args.stage1_validate})
    write_manifest(run_dir, "curriculum", resolved, inputs)
    ckpt, log = curriculum_finetune(parent, CurriculumConfig(stages[0], stages[1]), vocab)
    _finish_run(run_dir, vocab, ckpt, log)
    return 0


def cmd_translate(args) -> int:
    vocab = SubwordVocabulary.load(args.vocab)
    ckpt = Checkpoint.load(args.ckpt)
    try:
        cfg = BeamConfig(beam_size=args.beam, max_len=args.max_len, length_norm_alpha=args.alpha)
    except ValueError as e:
        raise UsageError(str(e)) from None
    with open(args.infile, encoding="utf-8") as f:
        sentences = [line.rstrip("\n") for line in f]
    translations = translate_corpus(ckpt, sentences, vocab, cfg)
    Path(args.out).write_text("".join(t + "\n" for t in translations), encoding="utf-8")
    print(f"translated\t{len(translations)}")
    return 0


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def cmd_evaluate(args) -> int:
    refs = _read_lines(args.ref)
    hyps = _read_lines(args.hyp)
    report = evaluate_corpus(refs, hyps)
    sys.stdout.write(report.to_tsv())
    return 0


def cmd_analyze_lengths(args) -> int:
    stats = length_stats(_read_lines(args.gold), _read_lines(args.pred))
    sys.stdout.write(stats.to_tsv())
    return 0


def cmd_analyze_variants(args) -> int:
    if not args.stem:
        raise UsageError("--stem must be non-empty")
    report = variant_count(_read_lines(args.infile), args.stem)
    sys.stdout.write(report.to_tsv())
    return 0


# --------------------------------------------------------------------- parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (model and schedule keys)")
    p.add_argument("--seed", type=int, default=None, help="override the seed (default: 0)")
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None,
                   help="override max optimizer steps (default: 2000)")
    p.add_argument("--validate-every", dest="validate_every", type=int, default=None,
                   help="override validation interval in steps (default: 100)")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None,
                   help="override sentences per batch (default: 15)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="mtlab",
        description="Transfer-learning machine translation laboratory (CPU scale).",
    )
    parser.add_argument("--version", action="version", version=f"mtlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("vocab-train", formatter_class=fmt, help="train a subword vocabulary")
    p.add_argument("--src", required=True, help="source text, one sentence per line")
    p.add_argument("--tgt", required=True, help="target text, one sentence per line")
    p.add_argument("--size", type=int, default=400, help="total vocabulary size")
    p.add_argument("--out", required=True, help="vocabulary file to write")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    p.set_defaults(func=cmd_vocab_train)

    p = sub.add_parser("tokenize", formatter_class=fmt, help="segment text into subword pieces")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--in", dest="infile", required=True, help="input text file")
    p.add_argument("--out", required=True, help="output file, pieces space-separated")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("stats", formatter_class=fmt, help="tokenization length statistics")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--src", required=True, help="source text file")
    p.add_argument("--tgt", required=True, help="target text file")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", formatter_class=fmt, help="build train/dev splits for a track")
    p.add_argument("--track", choices=("one", "two"), required=True,
                   help="one: fold a dev fraction into train; two: keep splits as-is")
    p.add_argument("--train-src", required=True, help="train source file")
    p.add_argument("--train-tgt", required=True, help="train target file")
    p.add_argument("--dev-src", required=True, help="dev source file")
    p.add_argument("--dev-tgt", required=True, help="dev target file")
    p.add_argument("--fraction", type=float, default=0.9, help="dev fraction moved to train (track one)")
    p.add_argument("--seed", type=int, default=0, help="seed for the dev selection shuffle")
    p.add_argument("--out", required=True, help="output directory (train/ and dev/ subdirs)")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", formatter_class=fmt, help="train a parent model from scratch")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--train", required=True, help="training corpus directory (src, tgt)")
    p.add_argument("--dev", required=True, help="dev corpus directory (src, tgt)")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", formatter_class=fmt, help="fine-tune a parent checkpoint on a child pair")
    p.add_argument("--parent", required=True, help="parent checkpoint file")
    p.add_argument("--train", required=True, help="child training corpus directory")
    p.add_argument("--dev", required=True, help="child dev corpus directory")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--vocab", default=None, help="vocabulary file (default: vocab.txt beside the parent)")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    _add_train_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("curriculum", formatter_class=fmt,
                       help="two-stage fine-tuning: intermediate pair, then child pair")
    p.add_argument("--parent", required=True, help="parent checkpoint file")
    p.add_argument("--stage1", required=True, help="intermediate split directory (train/, dev/)")
    p.add_argument("--stage2", required=True, help="child split directory (train/, dev/)")
    p.add_argument("--stage1-steps", type=int, default=300, help="stage-1 optimizer steps")
    p.add_argument("--stage1-validate", type=int, default=20, help="stage-1 validation interval")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--vocab", default=None, help="vocabulary file (default: vocab.txt beside the parent)")
    p.add_argument("--pair", default="es-xx", help="language pair tag")
    _add_train_flags(p)
    p.set_defaults(func=cmd_curriculum)

    p = sub.add_parser("translate", formatter_class=fmt, help="translate a file with beam search")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--in", dest="infile", required=True, help="source sentences, one per line")
    p.add_argument("--beam", type=int, default=6, help="beam size")
    p.add_argument("--max-len", dest="max_len", type=int, default=64, help="maximum generated tokens")
    p.add_argument("--alpha", type=float, default=0.0, help="length-normalization exponent")
    p.add_argument("--out", required=True, help="output file, one translation per line")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", formatter_class=fmt, help="BLEU and chrF against a reference")
    p.add_argument("--ref", required=True, help="reference file")
    p.add_argument("--hyp", required=True, help="hypothesis file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", formatter_class=fmt, help="corpus diagnostics")
    an = p.add_subparsers(dest="analysis", required=True, metavar="KIND")
    pl = an.add_parser("lengths", formatter_class=fmt, help="sentence/word length statistics")
    pl.add_argument("--gold", required=True, help="gold file")
    pl.add_argument("--pred", required=True, help="prediction file")
    pl.set_defaults(func=cmd_analyze_lengths)
    pv = an.add_parser("variants", formatter_class=fmt, help="count words sharing a stem prefix")
    pv.add_argument("--in", dest="infile", required=True, help="text file to scan")
    pv.add_argument("--stem", required=True, help="prefix to count")
    pv.set_defaults(func=cmd_analyze_variants)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    nm.set_num_threads(max(1, int(os.environ.get("MTLAB_THREADS", "1"))))
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (MtlabError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
