"""
Context for Language-Model Training
"""

from SaliencyWorkflow.util.stage_utils import StageContext


class TrainContext(StageContext):
    """
    Context for the LM training step: one model per configured architecture.
    """

    stage_name = 'train'
    producer = 'generate-data'

    def __init__(self, config=None, layout=None, force=False, event_log=None, **kwargs):
        super().__init__(config, layout, force, event_log, **kwargs)

        self.vocab = None
        self.train_corpus = []
        self.valid_corpus = []

        # Trained models by architecture
        self.models = {}

    @property
    def stage_dir(self):
        return self.layout.lm_dir

    def fingerprint_sections(self):
        return self.config.train_fingerprint_sections()

    def required_inputs(self):
        return [self.layout.vocab, self.layout.corpus('train'), self.layout.corpus('valid')]
