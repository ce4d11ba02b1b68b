"""
Data Generation Configuration
Defines the state machine that writes evaluation datasets, perturbation
pairs, probe-tuning data, the LM corpus and the vocabulary.
"""

import numpy as np

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import (
    DEFAULT_GENDER_LEXICON,
    DEFAULT_NUMBER_LEXICON,
    CorpusSentence,
    TaggedCorpusRecord,
    TestInstance,
    corpus_words,
    filter_nearest_attractor,
    filter_ptb_style,
    generate_gender_agreement,
    generate_lm_corpus,
    generate_number_agreement,
    make_perturbation_pairs,
    pair_references,
)
from SaliencyWorkflow.util.artifact_utils import read_jsonl, write_json, write_jsonl
from SaliencyWorkflow.util.language_models import Vocabulary
from SaliencyWorkflow.util.optim_utils import split_holdout
from SaliencyWorkflow.util.stage_utils import gated

logger = get_logger(__name__)


def _write_dataset(machine, name, instances):
    path = machine.context.layout.dataset(name)
    write_jsonl(path, instances)
    machine.context.datasets[name] = instances
    machine.context.outputs.append(path)
    logger.info(f"[Generate Data] {name}: {len(instances)} instances -> {path}")


def generate_synthetic_action(machine):
    """
    Number and gender agreement sets, the nearest-attractor gender subset
    and the template perturbation pairs.
    """
    context = machine.context
    data = context.config.data

    number, number_templates = generate_number_agreement(
        context.config.seed_for('data.number'), data.number_instances, DEFAULT_NUMBER_LEXICON)
    gender, gender_templates = generate_gender_agreement(
        context.config.seed_for('data.gender'), data.gender_instances, DEFAULT_GENDER_LEXICON, expected='feminine')
    nearest = filter_nearest_attractor(gender)

    _write_dataset(machine, 'number', number)
    _write_dataset(machine, 'gender', gender)
    _write_dataset(machine, 'gender_nearest', nearest)

    for name, templates, instances in (('number', number_templates, number), ('gender', gender_templates, gender)):
        context.templates[name] = templates
        template_path = context.layout.templates(name)
        write_json(template_path, [t.model_dump(mode='json') for t in templates])
        pairs = make_perturbation_pairs(templates, instances)
        pair_path = context.layout.pairs(name)
        write_jsonl(pair_path, pair_references(pairs))
        context.outputs += [template_path, pair_path]
        logger.info(f"[Generate Data] {name}: {len(pairs)} perturbation pairs over {len(templates)} templates")
    return "Synthetic data generated"


def load_external_action(machine):
    """PTB-style instances from a tagged corpus and user-provided instance files, if configured."""
    context = machine.context
    data = context.config.data
    if data.tagged_corpus:
        records = read_jsonl(data.tagged_corpus, TaggedCorpusRecord)
        instances = filter_ptb_style(records)
        if not instances:
            logger.warning(f"[Generate Data] no instance in {data.tagged_corpus} passed the filter")
        _write_dataset(machine, 'ptb', instances)

    for path, name in zip(data.extra_instances, context.config.extra_dataset_names()):
        _write_dataset(machine, name, read_jsonl(path, TestInstance))
    return "External data loaded"


def generate_probe_data_action(machine):
    """Probe-tuning sets from a separate generation run; gender follows the grammatical subject."""
    context = machine.context
    count = context.config.data.probe_instances
    number, _ = generate_number_agreement(context.config.seed_for('probe.number'), count, DEFAULT_NUMBER_LEXICON)
    gender, _ = generate_gender_agreement(context.config.seed_for('probe.gender'), count,
                                          DEFAULT_GENDER_LEXICON, expected='subject')
    for kind, instances in (('number', number), ('gender', gender)):
        path = context.layout.probe_data(kind)
        write_jsonl(path, instances)
        context.outputs.append(path)
    logger.info(f"[Generate Data] probe data: {len(number)} number, {len(gender)} gender instances")
    return "Probe data generated"


def generate_corpus_action(machine):
    """LM corpus split into train/valid, and the vocabulary over everything the models will read."""
    context = machine.context
    data = context.config.data
    sentences = generate_lm_corpus(context.config.seed_for('data.corpus'), data.corpus_sentences,
                                   DEFAULT_NUMBER_LEXICON, DEFAULT_GENDER_LEXICON)
    train_rows, valid_rows = split_holdout(len(sentences), data.valid_fraction,
                                           np.random.default_rng(context.config.seed_for('data.split')))
    for split, rows in (('train', train_rows), ('valid', valid_rows)):
        path = context.layout.corpus(split)
        write_jsonl(path, [CorpusSentence(tokens=sentences[i]) for i in sorted(rows)])
        context.outputs.append(path)

    token_streams = list(sentences)
    for instances in context.datasets.values():
        token_streams.extend(instance.tokens for instance in instances)
    context.vocab = Vocabulary.build(corpus_words(token_streams))
    write_json(context.layout.vocab, context.vocab.model_dump(mode='json'))
    context.outputs.append(context.layout.vocab)
    context.summary = {
        'datasets': {name: len(instances) for name, instances in sorted(context.datasets.items())},
        'corpus_sentences': len(sentences),
        'vocab_size': len(context.vocab),
    }
    logger.info(f"[Generate Data] corpus: {len(train_rows)} train / {len(valid_rows)} valid sentences, "
                f"vocabulary of {len(context.vocab)} tokens")
    return "Corpus generated"


# State machine configuration for data generation
state_definitions = gated({
    'GenerateSynthetic': {
        'action': generate_synthetic_action,
        'next_state_func': lambda result, machine: 'LoadExternal',
    },
    'LoadExternal': {
        'action': load_external_action,
        'next_state_func': lambda result, machine: 'GenerateProbeData',
    },
    'GenerateProbeData': {
        'action': generate_probe_data_action,
        'next_state_func': lambda result, machine: 'GenerateCorpus',
    },
    'GenerateCorpus': {
        'action': generate_corpus_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='GenerateSynthetic')
