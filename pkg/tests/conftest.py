import numpy as np
import pytest

from mtlab.model import ModelConfig, init_model
from mtlab.subword import train_vocab
from mtlab.synth import cipher_corpus, permutation_mapping
from mtlab.training import TrainConfig, train


@pytest.fixture(scope="session")
def cipher_setup():
    """Parent/child cipher corpora sharing one script, plus the parent vocabulary."""
    map_a = permutation_mapping(101)
    map_b = permutation_mapping(202)
    parent_train = cipher_corpus("es-aa", 256, seed=11, mapping=map_a)
    parent_dev = cipher_corpus("es-aa", 48, seed=12, mapping=map_a)
    child_train = cipher_corpus("es-bb", 64, seed=21, mapping=map_b)
    child_dev = cipher_corpus("es-bb", 32, seed=22, mapping=map_b)
    vocab = train_vocab(parent_train, 120)
    return parent_train, parent_dev, child_train, child_dev, vocab


@pytest.fixture(scope="session")
def tiny_model_config(cipher_setup):
    vocab = cipher_setup[4]
    return ModelConfig(
        vocab_size=len(vocab), layers=1, heads=2, d_model=32, d_ff=64,
        max_len=44, dropout=0.1, seed=0,
    )


@pytest.fixture(scope="session")
def trained_checkpoint(cipher_setup, tiny_model_config):
    """A parent checkpoint trained just long enough to decode coherently."""
    parent_train, parent_dev, _, _, vocab = cipher_setup
    cfg = TrainConfig(
        max_steps=300, validate_every=100, batch_size=16,
        learning_rate=3e-3, warmup_steps=100, seed=0,
    )
    ckpt, log = train(init_model(tiny_model_config), parent_train, parent_dev, vocab, cfg)
    return ckpt, log, vocab
