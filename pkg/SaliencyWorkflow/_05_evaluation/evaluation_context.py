"""
Context for Evaluation
"""

from SaliencyWorkflow.util.stage_utils import StageContext


class EvaluationContext(StageContext):
    """
    Context for the evaluation step: plausibility, input consistency and
    model consistency over the configured interpretation grid.
    """

    stage_name = 'evaluate'
    producer = 'probe'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)

        # Instances by dataset name, agreement kind by dataset name
        self.datasets = {}
        self.dataset_kinds = {}
        self.interpretations = config.interpretations() if config is not None else []

        # model -> dataset -> method -> composition -> AggregateReport JSON
        self.plausibility = {}
        self.input_consistency = {}
        self.model_consistency = {}

    @property
    def stage_dir(self):
        return self.layout.results_dir

    def fingerprint_sections(self):
        return self.config.evaluate_fingerprint_sections()

    def required_inputs(self):
        evaluate = self.config.evaluate
        paths = [self.layout.dataset(name) for name in evaluate.datasets]
        for arch in self.config.model.architectures:
            paths += [self.layout.probe_checkpoint(arch, kind) for kind in ('number', 'gender')]
        if evaluate.model_consistency:
            for arch in self.config.distill.architectures:
                paths += [self.layout.student_checkpoint(arch, kind) for kind in ('number', 'gender')]
        return paths
