"""
Saliency Workflow Pipeline Configuration
Main pipeline that orchestrates data generation, training, probing,
distillation, evaluation and report rendering.
"""

from BaseMachine.action_utils import StageFailedError, call_sub_state_machine_action
from BaseMachine.event_log import StageEventLog
from BaseMachine.logger import WorkflowLogger, get_logger
from SaliencyWorkflow.util.artifact_utils import ArtifactLayout

from SaliencyWorkflow._01_generate_data.data_config import state_definitions as data_states
from SaliencyWorkflow._01_generate_data.data_context import DataContext
from SaliencyWorkflow._02_train_models.train_config import state_definitions as train_states
from SaliencyWorkflow._02_train_models.train_context import TrainContext
from SaliencyWorkflow._03_probe_finetune.probe_config import state_definitions as probe_states
from SaliencyWorkflow._03_probe_finetune.probe_context import ProbeContext
from SaliencyWorkflow._04_distillation.distill_config import state_definitions as distill_states
from SaliencyWorkflow._04_distillation.distill_context import DistillContext
from SaliencyWorkflow._05_evaluation.evaluation_config import state_definitions as evaluation_states
from SaliencyWorkflow._05_evaluation.evaluation_context import EvaluationContext
from SaliencyWorkflow._06_report_render.render_config import state_definitions as render_states
from SaliencyWorkflow._06_report_render.render_context import RenderContext

logger = get_logger(__name__)

# Stage name -> (state name, sub-state definitions, context class), in pipeline order
STAGES = {
    'generate-data': ('GenerateData', data_states, DataContext),
    'train': ('TrainModels', train_states, TrainContext),
    'probe': ('ProbeFinetune', probe_states, ProbeContext),
    'distill': ('Distill', distill_states, DistillContext),
    'evaluate': ('Evaluate', evaluation_states, EvaluationContext),
    'render': ('Render', render_states, RenderContext),
}
STAGE_ORDER = tuple(STAGES)


class SaliencyWorkflowContext:
    """
    Root context for the saliency workflow pipeline.
    """

    def __init__(self, config=None, **kwargs):
        """
        Initialize the workflow context.

        Args:
            config: Validated RunConfig
            **kwargs: stages (names to run, default all), force
        """
        self.config = config
        self.stages = list(kwargs.get('stages', STAGE_ORDER))
        unknown = [s for s in self.stages if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stage(s) {unknown}; choose from {list(STAGE_ORDER)}")
        self.force = kwargs.get('force', False)
        self.layout = kwargs.get('layout') or ArtifactLayout(
            config.paths.data, config.paths.checkpoints, config.paths.results)
        self.event_log = kwargs.get('event_log') or StageEventLog(str(self.layout.log_dir))

        # Results tracking
        self.stage_results = {}
        self.completed_stages = []
        self.errors = []

    def get(self, key, default=None):
        return getattr(self, key, default)

    def __str__(self):
        return f"SaliencyWorkflowContext(stages={self.stages}, force={self.force})"

    def __repr__(self):
        return self.__str__()


def run_stage_action(stage):
    state_name, sub_states, context_cls = STAGES[stage]

    def action(machine):
        context = machine.context
        if stage not in context.stages:
            logger.debug(f"Stage '{stage}' not selected")
            return 'not_selected'

        WorkflowLogger.log_step_start(state_name, f"stage '{stage}'")
        context.event_log.emit('stage_start', stage)
        sub_action = call_sub_state_machine_action(
            sub_state_definitions=sub_states,
            sub_initial_state='CheckUpToDate',
            sub_context_cls=context_cls,
            save_option='result',
        )
        try:
            result = sub_action(machine, config=context.config, layout=context.layout,
                                force=context.force, event_log=context.event_log)
        except StageFailedError as e:
            context.errors.append(f"{stage}: {e}")
            context.event_log.emit('stage_error', stage, state=e.state_name,
                                   error=f"{type(e.cause).__name__}: {e.cause}")
            WorkflowLogger.log_step_error(state_name, e.cause)
            log_run_summary(context)
            raise

        context.stage_results[stage] = result
        context.completed_stages.append(stage)
        context.event_log.emit('stage_end', stage, skipped=bool(result and result.get('skipped')))
        WorkflowLogger.log_step_complete(state_name, 'skipped (up to date)' if result.get('skipped') else None)
        return 'done'
    return action


def log_run_summary(context):
    WorkflowLogger.log_workflow_summary(len(context.stages), len(context.completed_stages), context.errors)


def summary_action(machine):
    log_run_summary(machine.context)
    return machine.context.stage_results


def _next_state(stage):
    index = STAGE_ORDER.index(stage)
    if index + 1 < len(STAGE_ORDER):
        return STAGES[STAGE_ORDER[index + 1]][0]
    return 'Summary'


def _stage_state(stage):
    return {
        'action': run_stage_action(stage),
        'next_state_func': lambda result, machine: _next_state(stage),
    }


# Root workflow state machine configuration
state_definitions = {
    'GenerateData': _stage_state('generate-data'),
    'TrainModels': _stage_state('train'),
    'ProbeFinetune': _stage_state('probe'),
    'Distill': _stage_state('distill'),
    'Evaluate': _stage_state('evaluate'),
    'Render': _stage_state('render'),
    'Summary': {
        'action': summary_action,
        'next_state_func': lambda result, machine: 'Exit',
    },
    'Exit': {
        'action': lambda machine: machine.context.stage_results,
        'next_state_func': None,
    },
}
INITIAL_STATE = 'GenerateData'
