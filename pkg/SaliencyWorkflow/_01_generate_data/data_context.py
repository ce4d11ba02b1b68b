"""
Context for Data Generation
"""

from SaliencyWorkflow.util.stage_utils import StageContext


class DataContext(StageContext):
    """
    Context for the data generation step.
    """

    stage_name = 'generate-data'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)

        # Generated instances by dataset name, templates by kind
        self.datasets = {}
        self.templates = {}
        self.vocab = None

    @property
    def stage_dir(self):
        return self.layout.data_dir

    def fingerprint_sections(self):
        return self.config.data_fingerprint_sections()

    def required_inputs(self):
        extra = list(self.config.data.extra_instances)
        if self.config.data.tagged_corpus:
            extra.append(self.config.data.tagged_corpus)
        return extra
