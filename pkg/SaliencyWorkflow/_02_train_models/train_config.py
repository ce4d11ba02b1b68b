"""
Language-Model Training Configuration
Defines the state machine that trains one toy LM per architecture on the
generated corpus and saves checkpoints with their loss traces.
"""

from BaseMachine.logger import get_logger
from SaliencyWorkflow._02_train_models.train_tools import corpus_loss, train_lm
from SaliencyWorkflow.util.checkpoint_utils import save_checkpoint
from SaliencyWorkflow.util.language_models import init_model
from SaliencyWorkflow.util.optim_utils import write_loss_trace
from SaliencyWorkflow.util.stage_utils import gated, load_corpus_ids, load_vocab

logger = get_logger(__name__)


def load_corpus_action(machine):
    context = machine.context
    context.vocab = load_vocab(context.layout)
    context.train_corpus = load_corpus_ids(context.layout, context.vocab, 'train')
    context.valid_corpus = load_corpus_ids(context.layout, context.vocab, 'valid')
    logger.info(f"[Train] {len(context.train_corpus)} train / {len(context.valid_corpus)} valid sentences, "
                f"vocabulary {len(context.vocab)}")
    return "Corpus loaded"


def train_models_action(machine):
    context = machine.context
    config = context.config
    for arch in config.model.architectures:
        model = init_model(config.architecture_spec(arch), context.vocab, config.seed_for(f'init.{arch}'),
                           model_id=arch)
        logger.info(f"[Train] {arch}: {model.parameter_count()} parameters, {model.num_layers} layer(s)")
        train_config = config.train.model_copy(update={'seed': config.seed_for(f'train.{arch}')})
        model, trace = train_lm(model, context.train_corpus, train_config, context.valid_corpus)

        checkpoint = context.layout.lm_checkpoint(arch)
        save_checkpoint(model, checkpoint)
        trace_path = write_loss_trace(context.layout.loss_trace(checkpoint), trace)
        context.outputs += [checkpoint, trace_path]
        context.models[arch] = model
        context.summary[arch] = {
            'valid_loss': corpus_loss(model, context.valid_corpus) if context.valid_corpus else None,
            'epochs': len(trace),
        }
    return f"Trained {len(context.models)} model(s)"


# State machine configuration for LM training
state_definitions = gated({
    'LoadCorpus': {
        'action': load_corpus_action,
        'next_state_func': lambda result, machine: 'TrainModels',
    },
    'TrainModels': {
        'action': train_models_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='LoadCorpus')
