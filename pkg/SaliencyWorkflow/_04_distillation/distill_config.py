"""
Knowledge Distillation Configuration
Defines the state machine that distills each selected teacher LM into a
one-layer-shallower student and fine-tunes the student's probe heads.
"""

from BaseMachine.logger import get_logger
from SaliencyWorkflow._03_probe_finetune.probe_tools import finetune_probe
from SaliencyWorkflow._04_distillation.distill_tools import DistillConfig, argmax_agreement, distill_student
from SaliencyWorkflow.util.checkpoint_utils import load_checkpoint, save_checkpoint
from SaliencyWorkflow.util.optim_utils import write_loss_trace
from SaliencyWorkflow.util.stage_utils import gated, load_corpus_ids, load_instances, load_vocab

logger = get_logger(__name__)


def load_inputs_action(machine):
    context = machine.context
    context.vocab = load_vocab(context.layout)
    context.train_corpus = load_corpus_ids(context.layout, context.vocab, 'train')
    context.valid_corpus = load_corpus_ids(context.layout, context.vocab, 'valid')
    for kind in context.kinds:
        context.probe_data[kind] = load_instances(context.layout.probe_data(kind))
    return "Inputs loaded"


def distill_students_action(machine):
    context = machine.context
    config = context.config
    distill_config = DistillConfig(**config.distill.model_dump(exclude={'architectures'}))
    for arch in config.distill.architectures:
        teacher = load_checkpoint(context.layout.lm_checkpoint(arch))
        train_config = config.train.model_copy(update={'seed': config.seed_for(f'distill.{arch}'),
                                                       'loss': 'distillation'})
        student, trace = distill_student(teacher, context.train_corpus, distill_config, train_config,
                                         seed=config.seed_for(f'student-init.{arch}'),
                                         valid_corpus=context.valid_corpus, model_id=f'{arch}-student')
        checkpoint = context.layout.student_lm_checkpoint(arch)
        save_checkpoint(student, checkpoint)
        trace_path = write_loss_trace(context.layout.loss_trace(checkpoint), trace)
        context.outputs += [checkpoint, trace_path]
        context.students[arch] = student

        agreement = argmax_agreement(teacher, student, context.valid_corpus or context.train_corpus)
        context.summary[student.model_id] = {
            'teacher_parameters': teacher.parameter_count(),
            'student_parameters': student.parameter_count(),
            'argmax_agreement': agreement,
        }
        logger.info(f"[Distill] {student.model_id}: next-word argmax agreement with {arch} {agreement:.3f}")
    return f"Distilled {len(context.students)} student(s)"


def finetune_student_probes_action(machine):
    context = machine.context
    config = context.config
    for arch, student in context.students.items():
        for kind in context.kinds:
            probe_config = config.probe.model_copy(update={'seed': config.seed_for(f'probe.{arch}-student.{kind}')})
            tuned, trace = finetune_probe(student, context.probe_data[kind], probe_config,
                                          valid_fraction=config.data.valid_fraction,
                                          model_id=f'{arch}-student.{kind}')
            checkpoint = context.layout.student_checkpoint(arch, kind)
            save_checkpoint(tuned, checkpoint)
            trace_path = write_loss_trace(context.layout.loss_trace(checkpoint), trace)
            context.outputs += [checkpoint, trace_path]
    return "Student probes fine-tuned"


# State machine configuration for distillation
state_definitions = gated({
    'LoadInputs': {
        'action': load_inputs_action,
        'next_state_func': lambda result, machine: 'DistillStudents',
    },
    'DistillStudents': {
        'action': distill_students_action,
        'next_state_func': lambda result, machine: 'FinetuneStudentProbes',
    },
    'FinetuneStudentProbes': {
        'action': finetune_student_probes_action,
        'next_state_func': lambda result, machine: 'WriteManifest',
    },
}, first_state='LoadInputs')
