"""
Context for Knowledge Distillation
"""

from SaliencyWorkflow._03_probe_finetune.probe_context import PROBE_KINDS
from SaliencyWorkflow.util.stage_utils import StageContext


class DistillContext(StageContext):
    """
    Context for the distillation step: a shallower student per distilled
    architecture, then the student's own probe heads.
    """

    stage_name = 'distill'
    producer = 'train'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)
        self.kinds = kwargs.get('kinds', PROBE_KINDS)

        self.vocab = None
        self.train_corpus = []
        self.valid_corpus = []
        self.probe_data = {}
        self.students = {}

    @property
    def stage_dir(self):
        return self.layout.student_dir

    def fingerprint_sections(self):
        return self.config.distill_fingerprint_sections()

    def required_inputs(self):
        paths = [self.layout.vocab, self.layout.corpus('train'), self.layout.corpus('valid')]
        paths += [self.layout.lm_checkpoint(arch) for arch in self.config.distill.architectures]
        paths += [self.layout.probe_data(kind) for kind in self.kinds]
        return paths
