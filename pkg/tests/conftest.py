"""Shared fixtures: tiny vocabularies and models, generated datasets, a trained toy model."""

import pytest

from SaliencyWorkflow._01_generate_data.data_tools import (
    corpus_words,
    generate_lm_corpus,
    generate_number_agreement,
)
from SaliencyWorkflow._02_train_models.train_tools import encode_corpus, train_lm
from SaliencyWorkflow._03_probe_finetune.probe_tools import finetune_probe
from SaliencyWorkflow.util.language_models import (
    AttentionSpec,
    RecurrentSpec,
    Vocabulary,
    init_model,
)
from SaliencyWorkflow.util.optim_utils import TrainConfig

TINY_WORDS = ['the', 'author', 'authors', 'pilot', 'pilots', 'that', 'loves', 'near', 'is', 'are']

TINY_SPECS = {
    'lstm': RecurrentSpec(embedding_dim=8, hidden_size=12, num_layers=2),
    'transformer': AttentionSpec(embedding_dim=8, num_heads=2, ffn_dim=16, num_layers=2),
}


@pytest.fixture
def vocab():
    return Vocabulary.build(TINY_WORDS)


@pytest.fixture
def make_model(vocab):
    """Factory: make_model('lstm' | 'transformer', seed=0, **spec_overrides)."""
    def _make(kind, seed=0, **overrides):
        spec = TINY_SPECS[kind].model_copy(update=overrides)
        return init_model(spec, vocab, seed, model_id=f'{kind}-{seed}')
    return _make


@pytest.fixture(params=['lstm', 'transformer'])
def tiny_model(request, make_model):
    return make_model(request.param)


def random_prefix(rng, vocab_size, low=2, high=7):
    # ids from 3 upward skip <unk>, <pad>, <eos>
    return rng.integers(3, vocab_size, size=int(rng.integers(low, high + 1))).tolist()


@pytest.fixture(scope='session')
def number_eval_instances():
    return generate_number_agreement(seed=11, count=60)[0]


@pytest.fixture(scope='session')
def toy_corpus():
    return generate_lm_corpus(seed=3, count=300)


@pytest.fixture(scope='session')
def toy_vocab(toy_corpus, number_eval_instances):
    return Vocabulary.build(corpus_words(toy_corpus + [i.tokens for i in number_eval_instances]))


@pytest.fixture(scope='session')
def trained_lstm(toy_corpus, toy_vocab):
    """A small LSTM trained for a few epochs on the toy corpus."""
    model = init_model(RecurrentSpec(embedding_dim=16, hidden_size=24, num_layers=2), toy_vocab, 5, model_id='lstm')
    train_lm(model, encode_corpus(toy_vocab, toy_corpus), TrainConfig(epochs=3, learning_rate=1e-2, seed=5))
    return model


@pytest.fixture(scope='session')
def trained_number_model(trained_lstm):
    """trained_lstm with a probe head tuned on number agreement."""
    probe_data = generate_number_agreement(seed=23, count=200)[0]
    tuned, _ = finetune_probe(trained_lstm, probe_data, TrainConfig(epochs=20, learning_rate=1e-2, batch_size=32, seed=7),
                              model_id='lstm.number')
    return tuned


@pytest.fixture(scope='session')
def desk_corpus():
    """LM corpus at the shipped default size, split like the pipeline's valid_fraction = 0.1."""
    sentences = generate_lm_corpus(seed=13, count=4000)
    return sentences[:3600], sentences[3600:]


@pytest.fixture(scope='session')
def desk_number_data():
    """(probe-tuning, held-out) number instances from separate generation runs."""
    return generate_number_agreement(seed=29, count=1000)[0], generate_number_agreement(seed=31, count=500)[0]


@pytest.fixture(scope='session')
def desk_vocab(desk_corpus, desk_number_data):
    train, valid = desk_corpus
    tuning, heldout = desk_number_data
    return Vocabulary.build(corpus_words(train + valid + [i.tokens for i in tuning + heldout]))


@pytest.fixture(scope='session')
def desk_lstm(desk_corpus, desk_vocab):
    """An LSTM at the shipped default size and training settings."""
    train, valid = desk_corpus
    model = init_model(RecurrentSpec(embedding_dim=32, hidden_size=64, num_layers=2), desk_vocab, 5, model_id='lstm')
    train_lm(model, encode_corpus(desk_vocab, train), TrainConfig(epochs=10, batch_size=32, seed=5),
             valid_corpus=encode_corpus(desk_vocab, valid))
    return model


@pytest.fixture(scope='session')
def desk_number_model(desk_lstm, desk_number_data):
    tuning, _ = desk_number_data
    tuned, _ = finetune_probe(desk_lstm, tuning, TrainConfig(epochs=40, learning_rate=1e-2, batch_size=64, seed=7),
                              model_id='lstm.number')
    return tuned
