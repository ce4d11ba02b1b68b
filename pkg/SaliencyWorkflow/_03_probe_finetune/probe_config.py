"""
Probe Fine-Tuning Configuration
Defines the state machine that trains the agreement probe heads on top of
each frozen language model.
"""

from BaseMachine.logger import get_logger
from SaliencyWorkflow._03_probe_finetune.probe_tools import finetune_probe, heldout_probe_instances, probe_accuracy
from SaliencyWorkflow.util.checkpoint_utils import load_checkpoint, parameter_fingerprint, save_checkpoint
from SaliencyWorkflow.util.optim_utils import write_loss_trace
from SaliencyWorkflow.util.stage_utils import gated, load_instances

logger = get_logger(__name__)


def load_probe_data_action(machine):
    context = machine.context
    for kind in context.kinds:
        context.probe_data[kind] = load_instances(context.layout.probe_data(kind))
    return "Probe data loaded"


def finetune_probes_action(machine):
    """Fine-tune every probe; the body of each model must come out bit-identical."""
    context = machine.context
    config = context.config
    valid_fraction = config.data.valid_fraction
    for arch in config.model.architectures:
        base = load_checkpoint(context.layout.lm_checkpoint(arch))
        body_hash = parameter_fingerprint(base, base.body_parameter_names())
        for kind in context.kinds:
            probe_config = config.probe.model_copy(update={'seed': config.seed_for(f'probe.{arch}.{kind}')})
            tuned, trace = finetune_probe(base, context.probe_data[kind], probe_config,
                                          valid_fraction=valid_fraction, model_id=f'{arch}.{kind}')
            if parameter_fingerprint(tuned, tuned.body_parameter_names()) != body_hash:
                raise RuntimeError(f"probe fine-tuning of {tuned.model_id} changed non-probe parameters")

            checkpoint = context.layout.probe_checkpoint(arch, kind)
            save_checkpoint(tuned, checkpoint)
            trace_path = write_loss_trace(context.layout.loss_trace(checkpoint), trace)
            context.outputs += [checkpoint, trace_path]

            # held-out rows of the probe-tuning set (subject convention for gender)
            heldout = heldout_probe_instances(context.probe_data[kind], valid_fraction, probe_config.seed)
            context.heldout[tuned.model_id] = heldout
            accuracy = probe_accuracy(tuned, heldout) if heldout else None
            context.summary[tuned.model_id] = {'heldout_accuracy': accuracy, 'heldout_instances': len(heldout)}
            shown = 'n/a' if accuracy is None else f'{accuracy:.3f}'
            logger.info(f"[Probe] {tuned.model_id}: held-out accuracy {shown} on {len(heldout)} instance(s)")
    return "Probes fine-tuned"


# State machine configuration for probe fine-tuning
state_definitions = gated({
    'LoadProbeData': {
        'action': load_probe_data_action,
        'next_state_func': lambda result, machine: 'FinetuneProbes',
    },
    'FinetuneProbes': {
        'action': finetune_probes_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='LoadProbeData')
