"""
Pieces shared by the stage sub-machines: the common context base and the
gating actions that open and close every stage.
"""

from BaseMachine.logger import get_logger
from SaliencyWorkflow._01_generate_data.data_tools import CorpusSentence, TestInstance
from SaliencyWorkflow.util.artifact_utils import (
    config_fingerprint,
    read_json,
    read_jsonl,
    require_artifacts,
    stage_is_current,
    write_manifest,
)
from SaliencyWorkflow.util.language_models import Vocabulary

logger = get_logger(__name__)


class StageContext:
    """
    Context for one pipeline stage.

    Subclasses set stage_name, producer (the stage that makes this stage's
    inputs), stage_dir and fingerprint_sections, and list their inputs in
    required_inputs().
    """

    stage_name = 'stage'
    producer = None

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        self.config = config
        self.layout = layout
        self.force = force
        self.event_log = event_log

        # Outputs written by this run of the stage (for the manifest)
        self.outputs = []
        self.skipped = False
        self.summary = {}

    @property
    def stage_dir(self):
        raise NotImplementedError

    def fingerprint_sections(self):
        raise NotImplementedError

    @property
    def fingerprint(self):
        return config_fingerprint(*self.fingerprint_sections())

    def required_inputs(self):
        return []

    def get(self, key, default=None):
        return getattr(self, key, default)

    def __str__(self):
        return f"{type(self).__name__}(stage={self.stage_name}, force={self.force})"

    def __repr__(self):
        return self.__str__()


def check_up_to_date_action(machine):
    """Skip the stage when its manifest matches the current config and its outputs exist."""
    context = machine.context
    if not context.force and stage_is_current(context.stage_dir, context.fingerprint):
        context.skipped = True
        logger.info(f"[{context.stage_name}] up to date, skipping (use --force to rerun)")
        if context.event_log is not None:
            context.event_log.emit('stage_skip', context.stage_name, fingerprint=context.fingerprint)
        return 'up_to_date'
    return 'stale'


def check_inputs_action(machine):
    context = machine.context
    require_artifacts(context.required_inputs(), context.stage_name, context.producer)
    return 'inputs_present'


def write_manifest_action(machine):
    context = machine.context
    path = write_manifest(context.stage_dir, context.stage_name, context.fingerprint, context.outputs)
    logger.debug(f"[{context.stage_name}] manifest written to {path}")
    return 'manifest_written'


def exit_action(machine):
    """Exit action - return the stage summary."""
    context = machine.context
    return {'stage': context.stage_name, 'skipped': context.skipped, **context.summary}


def gated(stage_states, first_state):
    """
    Wrap a stage's own states between the gating states:
    CheckUpToDate -> CheckInputs -> <first_state> ... -> WriteManifest -> Exit.
    Stage states move to 'WriteManifest' when done.
    """
    states = {
        'CheckUpToDate': {
            'action': check_up_to_date_action,
            'next_state_func': lambda result, machine: 'Exit' if result == 'up_to_date' else 'CheckInputs',
        },
        'CheckInputs': {
            'action': check_inputs_action,
            'next_state_func': lambda result, machine: first_state,
        },
    }
    states.update(stage_states)
    states['WriteManifest'] = {
        'action': write_manifest_action,
        'next_state_func': lambda result, machine: 'Exit',
    }
    states['Exit'] = {
        'action': exit_action,
        'next_state_func': None,
    }
    return states


# ----- readers for artifacts written by earlier stages -----

def load_vocab(layout):
    return Vocabulary.model_validate(read_json(layout.vocab))


def load_corpus_ids(layout, vocab, split):
    return [vocab.encode(s.tokens) for s in read_jsonl(layout.corpus(split), CorpusSentence)]


def load_instances(path):
    return read_jsonl(path, TestInstance)
