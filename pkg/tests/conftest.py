import pytest

from wlac import GenConfig, build_vocab, generate_dataset, make_toy_corpus
from wlac.model import ModelConfig, build_model


def micro_config(arch: str, vocab_size: int, **overrides) -> ModelConfig:
    """Smallest config that still exercises every code path."""
    params = dict(
        arch=arch,
        layers=1,
        decoder_layers=1,
        dim=16,
        heads=2,
        ffn_dim=32,
        dropout=0.0,
        max_len=64,
        vocab_size=vocab_size,
    )
    params.update(overrides)
    return ModelConfig(**params)


@pytest.fixture(scope="session")
def tiny_task():
    """A small corpus, vocabulary, and dataset shared across tests."""
    pairs = make_toy_corpus(60, vocab_size=20, min_len=4, max_len=9, seed=5)
    vocab = build_vocab(pairs, side="joint", max_size=2000)
    examples = generate_dataset(pairs, per_pair=2, cfg=GenConfig(seed=9, max_context_len=3))
    return pairs, vocab, examples


@pytest.fixture()
def tiny_model(tiny_task):
    _, vocab, _ = tiny_task
    return build_model(micro_config("aioe", vocab.total_size), vocab, seed=1)
